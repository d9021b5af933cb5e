#pragma once

#include <functional>
#include <set>
#include <span>
#include <string>
#include <utility>

namespace divpref::agreement {

// Quadratic-weighted Cohen's kappa over paired ratings on a 1..categories
// scale. Weight for cells (i, j) is (i-j)^2 / (categories-1)^2. Returns 1
// when the raters agree on every item.
double cohen_kappa_quadratic(std::span<const std::pair<int, int>> ratings,
                             int categories = 5);

// Set distance in [0, 1]: 1 - Jaccard * monotonicity. Monotonicity is 1 for
// equal sets, 2/3 when one is a proper subset of the other, 1/3 for a
// crossing overlap and 0 for disjoint sets. Two empty sets compare equal.
double masi_distance(const std::set<std::string>& a, const std::set<std::string>& b);

// One annotation: a label set assigned to an item by one annotator.
struct AlphaUnit {
  std::string item_id;
  std::string annotator_id;
  std::set<std::string> labels;
};

using SetDistance =
    std::function<double(const std::set<std::string>&, const std::set<std::string>&)>;

// Krippendorff's alpha: 1 - observed/expected disagreement. Observed averages
// pairwise distances within each item; expected averages them across the
// pooled multiset of all annotations. Requires at least two items, each with
// at least two annotations.
double krippendorff_alpha(std::span<const AlphaUnit> units, const SetDistance& distance);

}  // namespace divpref::agreement
