#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "divpref/rng.hpp"
#include "divpref/types.hpp"

namespace divpref::model {

enum class HeadKind { bradley_terry, mse_regression, mean_variance, classification };

// Output width per head: 1 scalar reward, 2 for (mean, spread), 5 class logits.
int output_width(HeadKind kind);

// One-hidden-layer reward head: out = W2 * tanh(W1 * x + b1) + b2.
// Matrices are row-major: w1 is h x d, w2 is o x h.
struct HeadParameters {
  HeadKind kind = HeadKind::bradley_terry;
  int d = 0;
  int h = 0;
  int o = 0;
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  std::vector<double> b2;
};

// Throws when the stored sizes are inconsistent with d/h/o.
void validate_head(const HeadParameters& params);

// Uniform init in +-1/sqrt(fan_in) per layer, zero biases; deterministic in
// the rng state.
HeadParameters init_head(HeadKind kind, int d, int h, Rng& rng);

// Gradient (or any same-shaped accumulator) for a head.
struct HeadGrad {
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  std::vector<double> b2;

  static HeadGrad zeros_like(const HeadParameters& params);
  void scale(double factor);
};

struct RewardDistribution {
  double mu = 0.0;
  double sigma = 0.0;
};

// Spread floor added to |raw| so sigma never collapses to zero.
inline constexpr double kSigmaOffset = 0.1;
// Variance floor for the difference distribution.
inline constexpr double kVarianceFloor = 1e-6;

// Distribution over the reward difference r_A - r_B.
struct DiffDistribution {
  double mu_d = 0.0;
  double sigma_d = 0.0;
  double rho = 0.0;
};

// Probabilities over the signed labels, indexed label + 2:
// [B significant, B slight, tie, A slight, A significant].
struct LabelDistribution {
  std::array<double, 5> probs{};
};

// Probabilities over scores 1..5, indexed score - 1.
struct LikertDistribution {
  std::array<double, 5> probs{};
};

double forward_scalar(const HeadParameters& params, std::span<const double> x);
RewardDistribution forward_meanvar(const HeadParameters& params, std::span<const double> x);
// Softmax with max-logit subtraction; finite for any logit magnitudes.
LikertDistribution forward_classification(const HeadParameters& params, std::span<const double> x);

// mu_d = mu_A - mu_B; var = sigma_A^2 + sigma_B^2 - 2*rho*sigma_A*sigma_B,
// clamped below at kVarianceFloor. rho must lie in [0, 1].
DiffDistribution diff_distribution(const RewardDistribution& a, const RewardDistribution& b,
                                   double rho);

// rho = eta * (fraction of tie judgments). eta in [0, 1].
double make_rho(std::span<const AnnotatorJudgment> judgments, double eta);

enum class CdfKind { exact_normal, logistic, tanh_approx };

// Sigmoid-shaped CDF at z. `scale` multiplies z for the two approximations
// and is ignored by the exact normal.
double cdf(double z, CdfKind kind, double scale = 1.0);
// d/dz of the above.
double cdf_density(double z, CdfKind kind, double scale = 1.0);

// Region probabilities of the difference distribution under the chosen CDF:
// ties inside (-0.5, 0.5), slights between 0.5 and 1.5 on either side,
// significants beyond +-1.5. Entries are nonnegative and sum to 1 up to
// floating-point rounding; no renormalization is applied.
LabelDistribution label_probs(const DiffDistribution& diff, CdfKind kind, double scale = 1.0);

// Sum of score * probability, in [1, 5].
double expected_likert(const LikertDistribution& dist);

// -log(logistic(r_chosen - r_rejected)), computed in log-sum form; finite for
// any argument magnitudes.
double bt_loss(double r_chosen, double r_rejected);

// Squared error against an integer score target in 1..5.
double mse_loss(double predicted, int target_score);

// Additive smoothing (p + eps) / (1 + 5*eps) per class.
LabelDistribution smooth(const LabelDistribution& dist, double eps = 0.05);
LikertDistribution smooth(const LikertDistribution& dist, double eps = 0.05);

// KL(target || predicted) over 5 classes; zero-target classes contribute 0,
// a zero predicted entry with nonzero target is an error (smoothing missing).
double kl_loss(std::span<const double> target, std::span<const double> predicted);

// -log Phi((mu_pref - mu_other) / sqrt(sigma_pref^2 + sigma_other^2)), the
// exact-normal probability that the preferred response wins; rho is not used.
double meanvar_nll_loss(const RewardDistribution& preferred, const RewardDistribution& other);

// log Phi(z) with an asymptotic branch for very negative z; always finite.
double log_normal_cdf(double z);

// Fraction of judgments per signed label class.
LabelDistribution empirical_label_distribution(std::span<const AnnotatorJudgment> judgments);
// Fraction of judgments per score on one side; every judgment must carry raw
// scores.
LikertDistribution empirical_likert_distribution(std::span<const AnnotatorJudgment> judgments,
                                                 Side side);

// ---- Per-example losses with analytic gradients --------------------------
// Each returns the loss and, when `grad` is non-null, accumulates d loss /
// d params into it.

struct KlLossOptions {
  CdfKind cdf_kind = CdfKind::logistic;
  double cdf_scale = 1.0;
  double smoothing_eps = 0.05;
};

double bt_sample_loss(const HeadParameters& params, std::span<const double> x_chosen,
                      std::span<const double> x_rejected, HeadGrad* grad);

// Both orderings weighted 0.5 each; the optimum is r_a == r_b.
double bt_tie_sample_loss(const HeadParameters& params, std::span<const double> x_a,
                          std::span<const double> x_b, HeadGrad* grad);

double mse_sample_loss(const HeadParameters& params, std::span<const double> x, int target_score,
                       HeadGrad* grad);

// KL between the target label distribution and the smoothed region
// probabilities of the predicted difference distribution.
double meanvar_kl_sample_loss(const HeadParameters& params, std::span<const double> x_a,
                              std::span<const double> x_b, const LabelDistribution& target,
                              double rho, const KlLossOptions& options, HeadGrad* grad);

// KL between the target score distribution and the smoothed softmax.
double classification_kl_sample_loss(const HeadParameters& params, std::span<const double> x,
                                     const LikertDistribution& target, double smoothing_eps,
                                     HeadGrad* grad);

double meanvar_nll_sample_loss(const HeadParameters& params, std::span<const double> x_preferred,
                               std::span<const double> x_other, HeadGrad* grad);

// Central finite differences with the given step over every parameter.
// Returns max_i |g_i - fd_i| / max(1, |g_i| + |fd_i|). The loss must be
// differentiable at `at` (callers re-sample fixtures sitting on the |raw
// spread| kink); non-finite probe values are an error.
double grad_check(const std::function<double(const HeadParameters&)>& loss,
                  const HeadParameters& at, const HeadGrad& analytic, double step = 1e-4);

}  // namespace divpref::model
