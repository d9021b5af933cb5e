#include "divpref/prefdata.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

#include "divpref/rng.hpp"

namespace divpref::prefdata {

PreferenceLabel label_from_scores(int score_a, int score_b) {
  if (score_a < 1 || score_a > 5 || score_b < 1 || score_b > 5) {
    throw std::invalid_argument("label_from_scores: scores must lie in 1..5");
  }
  const int gap = score_a - score_b;
  if (gap >= 2) return {2};
  if (gap == 1) return {1};
  if (gap == -1) return {-1};
  if (gap <= -2) return {-2};
  return {0};
}

namespace {

void check_labels(std::span<const AnnotatorJudgment> judgments, const char* who) {
  if (judgments.empty()) {
    throw std::invalid_argument(std::string(who) + ": needs at least one judgment");
  }
  for (const auto& j : judgments) {
    if (!label_valid(j.label)) {
      throw std::invalid_argument(std::string(who) + ": label outside -2..+2");
    }
  }
}

}  // namespace

PreferenceLabel aggregate_majority(std::span<const AnnotatorJudgment> judgments) {
  check_labels(judgments, "aggregate_majority");
  int n_a = 0, n_b = 0, n_tie = 0;
  int a_slight = 0, a_sig = 0, b_slight = 0, b_sig = 0;
  for (const auto& j : judgments) {
    const int v = j.label.value;
    if (v > 0) {
      ++n_a;
      (v == 2 ? a_sig : a_slight) += 1;
    } else if (v < 0) {
      ++n_b;
      (v == -2 ? b_sig : b_slight) += 1;
    } else {
      ++n_tie;
    }
  }
  const int top = std::max({n_a, n_b, n_tie});
  const bool a_top = n_a == top && n_a > 0;
  const bool b_top = n_b == top && n_b > 0;

  int side = 0;
  if (a_top && b_top) {
    // Side-vote tie: the larger absolute sum of signed values wins. The sums
    // are a_slight + 2*a_sig vs b_slight + 2*b_sig.
    const int sum_a = a_slight + 2 * a_sig;
    const int sum_b = b_slight + 2 * b_sig;
    if (sum_a > sum_b) side = 1;
    else if (sum_b > sum_a) side = -1;
    else return {0};
  } else if (a_top) {
    side = 1;  // ties-with-the-tie-side resolve to the side: its sum is larger than 0
  } else if (b_top) {
    side = -1;
  } else {
    return {0};
  }

  if (side > 0) return {a_sig > a_slight ? 2 : 1};
  return {b_sig > b_slight ? -2 : -1};
}

AgreementCategory classify_agreement(std::span<const AnnotatorJudgment> judgments) {
  check_labels(judgments, "classify_agreement");
  int n_a = 0, n_b = 0, n_tie = 0;
  bool any_plus2 = false, any_minus2 = false;
  for (const auto& j : judgments) {
    const int v = j.label.value;
    if (v > 0) ++n_a;
    else if (v < 0) ++n_b;
    else ++n_tie;
    any_plus2 |= v == 2;
    any_minus2 |= v == -2;
  }
  const bool all_slight_range = !any_plus2 && !any_minus2;
  if (n_a > 0 && n_b > 0 && !all_slight_range) {
    return {AgreementKind::diverging, any_plus2 && any_minus2};
  }
  if (2 * n_tie > static_cast<int>(judgments.size())) {
    return {AgreementKind::high_agreement_tie, false};
  }
  if ((n_a > n_b && n_b == 0) || (n_b > n_a && n_a == 0)) {
    return {AgreementKind::high_agreement_pref, false};
  }
  return {AgreementKind::other, false};
}

SplitResult split_dataset(std::span<const PreferencePair> pairs, uint64_t seed,
                          std::size_t test_size, std::size_t dev_size) {
  if (test_size + dev_size > pairs.size()) {
    throw std::invalid_argument("split_dataset: test_size + dev_size exceeds the dataset");
  }
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  SplitResult out;
  out.test.reserve(test_size);
  out.dev.reserve(dev_size);
  out.train.reserve(pairs.size() - test_size - dev_size);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const PreferencePair& p = pairs[order[i]];
    if (i < test_size) out.test.push_back(p);
    else if (i < test_size + dev_size) out.dev.push_back(p);
    else out.train.push_back(p);
  }
  return out;
}

}  // namespace divpref::prefdata
