#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "divpref/types.hpp"

// Synthetic annotator populations with known ground truth, used by the
// acceptance suite and the heavier unit tests.
//
// Four annotators score every pair: annA/annB/annC form the majority style
// group, annD the minority. Pair types and their label patterns:
//   divisive  (20%): one "styled" response. The majority group scores it 5
//                    and the minority 1 (or the reverse), the plain response
//                    gets 3 from everyone -> labels 3 x (+-2) vs 1 x (-+2).
//   pure tie  (38%): identical quality, everyone scores both sides equal.
//   edge tie  (10%): equal quality but a subtle stylistic edge on one side;
//                    annD alone notices and scores it one higher.
//   slight    (20%): one side one quality point better; one rotating
//                    annotator scores the sides equal.
//   significant (12%): one side two points better; one rotating annotator
//                    only grants a one-point gap.
//
// Each response gets a 16-dim embedding:
//   [0] latent quality * 0.6      [1] divisive flag
//   [2] divisive flag * style     [3] constant 1
//   [4..7] edge marker (1.0 in one rotating slot on the subtly better
//          response of an edge tie)
//   [8..15] uniform noise in +-0.05
// Embedding keys are "<pair id>#a" / "<pair id>#b" and
// "<prompt id>#<system>" for benchmarks.
namespace synth {

struct Population {
  std::vector<divpref::PreferencePair> pairs;
  std::map<std::string, std::vector<double>> embeddings;
};

Population make_population(std::size_t n_pairs, uint64_t seed);

struct Benchmark {
  std::vector<divpref::BenchmarkPrompt> prompts;
  std::map<std::string, std::vector<double>> embeddings;
  std::vector<std::string> planted;  // prompt ids with divisive-style responses
};

// n_planted prompts get responses that look like the styled halves of
// divisive pairs; the rest look like ordinary single-quality responses.
Benchmark make_benchmark(std::size_t n_prompts, std::size_t n_planted, uint64_t seed);

}  // namespace synth
