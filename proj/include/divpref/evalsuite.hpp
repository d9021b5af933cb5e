#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "divpref/features.hpp"
#include "divpref/model.hpp"
#include "divpref/types.hpp"

namespace divpref::evals {

using features::Featurizer;
using features::PairFeatures;
using model::HeadParameters;

enum class DivisivenessMode { product, sum };

// How a head orders two responses: scalar reward for bradley_terry /
// mse_regression, mean for mean_variance, expected score for classification.
double response_score(const HeadParameters& head, std::span<const double> x);

// Fraction of non-tie judgments whose side agrees with the head's ordering.
// Exact reward ties count 0.5. Errors when there is no non-tie judgment.
double preference_accuracy(const HeadParameters& head, std::span<const PreferencePair> pairs,
                           std::span<const PairFeatures> feats);

// Joint weight on the extreme scores: product p1*p5 or sum p1+p5.
double response_divisiveness(const model::LikertDistribution& dist,
                             DivisivenessMode mode = DivisivenessMode::product);

// Higher = more diverging. bradley_terry / mse_regression: -|r_A - r_B|;
// mean_variance: lambda*(sigma_A + sigma_B) - |mu_A - mu_B|; classification:
// mean response_divisiveness of the two responses. lambda must be >= 0.
double divergence_score(const HeadParameters& head, const PairFeatures& feats, double lambda,
                        DivisivenessMode mode = DivisivenessMode::product);

// Rank-based (Mann-Whitney) AUROC; tied scores count 0.5 via midranks.
// Labels are 0/1 and both classes must be present. O(n log n).
double auroc(std::span<const double> scores, std::span<const int> labels);

// AUROC of divergence_score against classify_agreement's diverging flag.
double diverging_id_auroc(const HeadParameters& head, std::span<const PreferencePair> pairs,
                          std::span<const PairFeatures> feats, double lambda,
                          DivisivenessMode mode = DivisivenessMode::product);

// Reward gap between the majority-chosen and rejected responses, per
// agreement category. The gap is P(chosen > rejected) for bradley_terry and
// an absolute score gap otherwise. Pairs whose aggregate is a tie count
// toward pair_count but not toward the mean.
struct GapRow {
  std::size_t pair_count = 0;
  std::size_t gap_count = 0;
  double mean_gap = 0.0;
};

// Keys: "all", "diverging", "diverging_substantial", "high_agreement_pref",
// "high_agreement_tie", "other". "diverging_substantial" is a subset of
// "diverging".
using CategoryGaps = std::map<std::string, GapRow>;

CategoryGaps reward_gap_report(const HeadParameters& head, std::span<const PreferencePair> pairs,
                               std::span<const PairFeatures> feats);

struct HistogramBin {
  double lower = 0.0;
  double percent = 0.0;
};

// bradley_terry heads bin P(chosen > rejected) oriented to the head's own
// choice, so values live in [0.5, 1.0] and the bin width must divide that
// range evenly. Other kinds bin the absolute score gap from 0 upward.
// Percentages sum to 100.
std::vector<HistogramBin> histogram_export(const HeadParameters& head,
                                           std::span<const PreferencePair> pairs,
                                           std::span<const PairFeatures> feats,
                                           double bin_width = 0.05);

// Mean response_divisiveness across the responses of one prompt.
double prompt_divisiveness(std::span<const model::LikertDistribution> responses,
                           DivisivenessMode mode = DivisivenessMode::product);

struct RankedPrompt {
  std::string prompt_id;
  double score = 0.0;
  bool flagged = false;
  std::vector<std::pair<std::string, double>> response_scores;  // (system, score)
};

struct DivisivenessRanking {
  std::vector<RankedPrompt> entries;  // descending score, ties by prompt_id
  double top_fraction = 0.0;
  DivisivenessMode mode = DivisivenessMode::product;
};

// Scores every benchmark response with a classification head, averages per
// prompt, sorts descending (prompt_id breaks ties) and flags the top
// round(top_fraction * n) prompts.
DivisivenessRanking rank_prompts(std::span<const BenchmarkPrompt> benchmark,
                                 const HeadParameters& head, const Featurizer& featurizer,
                                 double top_fraction = 0.05,
                                 DivisivenessMode mode = DivisivenessMode::product);

struct EvalReport {
  double preference_accuracy = 0.0;
  // Absent when the pairs contain only one agreement class.
  std::optional<double> diverging_auroc;
  double lambda_used = 0.0;
  CategoryGaps category_gaps;
  std::vector<HistogramBin> histogram;
  std::size_t pair_count = 0;
};

EvalReport evaluate(const HeadParameters& head, std::span<const PreferencePair> pairs,
                    std::span<const PairFeatures> feats, double lambda, double bin_width = 0.05,
                    DivisivenessMode mode = DivisivenessMode::product);

}  // namespace divpref::evals
