#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "divpref/prefdata.hpp"
#include "divpref/types.hpp"

namespace divpref::io {

// Dataset files are line-delimited JSON, one record per line:
//
//   {"id": str, "prompt": str, "response_a": str, "response_b": str,
//    "source": "multipref" | "helpsteer2",
//    "judgments": [{"annotator": str, "label": int} |
//                  {"annotator": str, "score_a": int, "score_b": int}, ...]}
//
// Judgments carry either a direct label in -2..+2 or a pair of 1-5 scores;
// score judgments get their label derived from the score gap. Annotator ids
// must be unique within a record. `source` may be omitted on input, in which
// case it is inferred from the judgment form. Errors name the offending line.
std::vector<PreferencePair> read_dataset(const std::filesystem::path& path,
                                         const prefdata::FieldMap& field_map = {});

// Writes canonical records (score judgments when raw scores are present,
// label judgments otherwise), atomically, preserving order.
void write_dataset(const std::filesystem::path& path, std::span<const PreferencePair> pairs);

// Embedding files are line-delimited: {"id": str, "vector": [real, ...]}.
// All vectors must share one dimension; ids must be unique.
std::map<std::string, std::vector<double>> read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path,
                      const std::map<std::string, std::vector<double>>& table);

// Benchmark files are line-delimited:
//   {"prompt_id": str, "prompt": str,
//    "responses": [{"system": str, "text": str}, ...]}
// Prompt ids are unique across the file, system names unique within a prompt.
std::vector<BenchmarkPrompt> read_benchmark(const std::filesystem::path& path);

// Writes content to a temp file in the target's directory and renames it over
// the target, so readers never observe a partial file.
void atomic_write(const std::filesystem::path& path, const std::string& content);

}  // namespace divpref::io
