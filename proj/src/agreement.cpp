#include "divpref/agreement.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <vector>

#include "divpref/errors.hpp"

namespace divpref::agreement {

double cohen_kappa_quadratic(std::span<const std::pair<int, int>> ratings, int categories) {
  if (categories < 2) throw std::invalid_argument("cohen_kappa_quadratic: need >= 2 categories");
  if (ratings.size() < 2) {
    throw std::invalid_argument("cohen_kappa_quadratic: need at least 2 rating pairs");
  }
  const int k = categories;
  std::vector<double> joint(static_cast<std::size_t>(k) * k, 0.0);
  std::vector<double> row(k, 0.0), col(k, 0.0);
  for (const auto& [a, b] : ratings) {
    if (a < 1 || a > k || b < 1 || b > k) {
      throw std::invalid_argument("cohen_kappa_quadratic: rating outside 1..categories");
    }
    joint[static_cast<std::size_t>(a - 1) * k + (b - 1)] += 1.0;
    row[a - 1] += 1.0;
    col[b - 1] += 1.0;
  }
  const double n = static_cast<double>(ratings.size());
  const double denom = static_cast<double>((k - 1) * (k - 1));
  double observed = 0.0, expected = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double w = static_cast<double>((i - j) * (i - j)) / denom;
      observed += w * joint[static_cast<std::size_t>(i) * k + j] / n;
      expected += w * (row[i] / n) * (col[j] / n);
    }
  }
  if (observed == 0.0) return 1.0;
  if (expected == 0.0) throw NumericError("cohen_kappa_quadratic: degenerate marginals");
  return 1.0 - observed / expected;
}

double masi_distance(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t common = 0;
  for (const auto& x : a) common += b.count(x);
  const std::size_t unions = a.size() + b.size() - common;

  const double jaccard = unions == 0 ? 1.0 : static_cast<double>(common) / unions;
  double monotonicity = 0.0;
  if (a == b) monotonicity = 1.0;
  else if (common == 0) monotonicity = 0.0;
  else if (common == a.size() || common == b.size()) monotonicity = 2.0 / 3.0;
  else monotonicity = 1.0 / 3.0;
  return 1.0 - jaccard * monotonicity;
}

double krippendorff_alpha(std::span<const AlphaUnit> units, const SetDistance& distance) {
  std::map<std::string, std::vector<const std::set<std::string>*>> items;
  for (const auto& u : units) items[u.item_id].push_back(&u.labels);
  if (items.size() < 2) {
    throw std::invalid_argument("krippendorff_alpha: need at least 2 items");
  }
  for (const auto& [id, anns] : items) {
    if (anns.size() < 2) {
      throw std::invalid_argument("krippendorff_alpha: item '" + id +
                                  "' has fewer than 2 annotations");
    }
  }

  std::vector<const std::set<std::string>*> pooled;
  double observed = 0.0;
  for (const auto& [id, anns] : items) {
    const std::size_t m = anns.size();
    double within = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (i != j) within += distance(*anns[i], *anns[j]);
      }
    }
    observed += within / static_cast<double>(m - 1);
    pooled.insert(pooled.end(), anns.begin(), anns.end());
  }
  const double n = static_cast<double>(pooled.size());
  observed /= n;

  double expected = 0.0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    for (std::size_t j = 0; j < pooled.size(); ++j) {
      if (i != j) expected += distance(*pooled[i], *pooled[j]);
    }
  }
  expected /= n * (n - 1.0);

  if (expected == 0.0) throw NumericError("krippendorff_alpha: no variation in annotations");
  return 1.0 - observed / expected;
}

}  // namespace divpref::agreement
