#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "divpref/types.hpp"

namespace divpref::prefdata {

// Signed label from two 1-5 scores of the same pair: the gap a-b maps to
// significant (|gap| >= 2), slight (|gap| == 1) or tie (0).
PreferenceLabel label_from_scores(int score_a, int score_b);

// Majority label across annotators. The side (A / B / tie) with the most
// votes wins; the winning side's strength is the most common |value| among
// its own votes, slight when the strength counts tie. A tie in side votes is
// broken toward the side with the larger absolute sum of signed values, and
// resolves to 0 if that is also even.
PreferenceLabel aggregate_majority(std::span<const AnnotatorJudgment> judgments);

// Category precedence: diverging > high_agreement_tie > high_agreement_pref
// > other. Diverging means both sides got at least one vote and not all
// labels sit in {-1, 0, +1}; substantial additionally requires a +2 and a -2.
// high_agreement_tie means a strict majority of labels are 0;
// high_agreement_pref means one side has more votes than the other and no
// judgment favors that other side.
AgreementCategory classify_agreement(std::span<const AnnotatorJudgment> judgments);

struct SplitResult {
  std::vector<PreferencePair> train;
  std::vector<PreferencePair> dev;
  std::vector<PreferencePair> test;
};

// Deterministic shuffle + partition: test gets the first `test_size` shuffled
// pairs, dev the next `dev_size`, train the remainder. Same seed, same split,
// on any platform.
SplitResult split_dataset(std::span<const PreferencePair> pairs, uint64_t seed,
                          std::size_t test_size, std::size_t dev_size);

enum class Schema { multipref, helpsteer2 };

// Canonical -> actual field-name renames applied while reading records whose
// field names differ from the defaults ("id", "prompt", "response_a",
// "response_b", "source", "judgments", "annotator", "label", "score_a",
// "score_b").
struct FieldMap {
  std::map<std::string, std::string> names;
  const std::string& actual(const std::string& canonical) const;
};

// Reads line-delimited records (see dataset_io.hpp for the exact format),
// requiring every judgment to match the named schema: `multipref` records
// carry direct labels, `helpsteer2` records carry per-response scores from
// which labels are derived. Record order is preserved.
std::vector<PreferencePair> ingest_dataset(const std::filesystem::path& path, Schema schema,
                                           const FieldMap& field_map = {});

}  // namespace divpref::prefdata
