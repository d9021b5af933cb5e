#include "divpref/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "divpref/errors.hpp"

namespace divpref::model {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;
constexpr double kLogSqrt2Pi = 0.9189385332046727;

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + exp(v)) without overflow for large |v|.
double softplus(double v) {
  return std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v)));
}

struct ForwardCache {
  std::vector<double> hid;
  std::vector<double> out;
};

ForwardCache run_forward(const HeadParameters& p, std::span<const double> x) {
  if (static_cast<int>(x.size()) != p.d) {
    throw std::invalid_argument("head expects " + std::to_string(p.d) + " features, got " +
                                std::to_string(x.size()));
  }
  ForwardCache c;
  c.hid.resize(p.h);
  for (int k = 0; k < p.h; ++k) {
    double acc = p.b1[k];
    const double* row = p.w1.data() + static_cast<std::size_t>(k) * p.d;
    for (int i = 0; i < p.d; ++i) acc += row[i] * x[i];
    c.hid[k] = std::tanh(acc);
  }
  c.out.resize(p.o);
  for (int j = 0; j < p.o; ++j) {
    double acc = p.b2[j];
    const double* row = p.w2.data() + static_cast<std::size_t>(j) * p.h;
    for (int k = 0; k < p.h; ++k) acc += row[k] * c.hid[k];
    c.out[j] = acc;
  }
  return c;
}

void run_backward(const HeadParameters& p, std::span<const double> x, const ForwardCache& c,
                  std::span<const double> dout, HeadGrad& g) {
  for (int j = 0; j < p.o; ++j) {
    g.b2[j] += dout[j];
    double* row = g.w2.data() + static_cast<std::size_t>(j) * p.h;
    for (int k = 0; k < p.h; ++k) row[k] += dout[j] * c.hid[k];
  }
  for (int k = 0; k < p.h; ++k) {
    double up = 0.0;
    for (int j = 0; j < p.o; ++j) up += p.w2[static_cast<std::size_t>(j) * p.h + k] * dout[j];
    const double dpre = up * (1.0 - c.hid[k] * c.hid[k]);
    g.b1[k] += dpre;
    double* row = g.w1.data() + static_cast<std::size_t>(k) * p.d;
    for (int i = 0; i < p.d; ++i) row[i] += dpre * x[i];
  }
}

double spread_sign(double raw) {
  if (raw > 0.0) return 1.0;
  if (raw < 0.0) return -1.0;
  return 0.0;
}

RewardDistribution to_distribution(const ForwardCache& c) {
  return {c.out[0], std::fabs(c.out[1]) + kSigmaOffset};
}

LikertDistribution softmax5(const std::vector<double>& logits) {
  LikertDistribution dist;
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (int i = 0; i < 5; ++i) {
    dist.probs[i] = std::exp(logits[i] - top);
    total += dist.probs[i];
  }
  for (double& v : dist.probs) v /= total;
  return dist;
}

void check_kind(const HeadParameters& p, int want_o, const char* who) {
  if (p.o != want_o) {
    throw std::invalid_argument(std::string(who) + ": head has output width " +
                                std::to_string(p.o) + ", need " + std::to_string(want_o));
  }
}

}  // namespace

int output_width(HeadKind kind) {
  switch (kind) {
    case HeadKind::bradley_terry:
    case HeadKind::mse_regression:
      return 1;
    case HeadKind::mean_variance:
      return 2;
    case HeadKind::classification:
      return 5;
  }
  throw std::invalid_argument("output_width: unknown head kind");
}

void validate_head(const HeadParameters& p) {
  if (p.d <= 0 || p.h <= 0) throw std::invalid_argument("head dimensions must be positive");
  if (p.o != output_width(p.kind)) {
    throw std::invalid_argument("head output width does not match its kind");
  }
  const auto hd = static_cast<std::size_t>(p.h) * p.d;
  const auto oh = static_cast<std::size_t>(p.o) * p.h;
  if (p.w1.size() != hd || p.b1.size() != static_cast<std::size_t>(p.h) || p.w2.size() != oh ||
      p.b2.size() != static_cast<std::size_t>(p.o)) {
    throw std::invalid_argument("head parameter sizes do not match d/h/o");
  }
}

HeadParameters init_head(HeadKind kind, int d, int h, Rng& rng) {
  if (d <= 0 || h <= 0) throw std::invalid_argument("init_head: dimensions must be positive");
  HeadParameters p;
  p.kind = kind;
  p.d = d;
  p.h = h;
  p.o = output_width(kind);
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(d));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(h));
  p.w1.resize(static_cast<std::size_t>(h) * d);
  for (double& w : p.w1) w = rng.uniform(-bound1, bound1);
  p.b1.assign(h, 0.0);
  p.w2.resize(static_cast<std::size_t>(p.o) * h);
  for (double& w : p.w2) w = rng.uniform(-bound2, bound2);
  p.b2.assign(p.o, 0.0);
  return p;
}

HeadGrad HeadGrad::zeros_like(const HeadParameters& p) {
  HeadGrad g;
  g.w1.assign(p.w1.size(), 0.0);
  g.b1.assign(p.b1.size(), 0.0);
  g.w2.assign(p.w2.size(), 0.0);
  g.b2.assign(p.b2.size(), 0.0);
  return g;
}

void HeadGrad::scale(double factor) {
  for (double& v : w1) v *= factor;
  for (double& v : b1) v *= factor;
  for (double& v : w2) v *= factor;
  for (double& v : b2) v *= factor;
}

double forward_scalar(const HeadParameters& p, std::span<const double> x) {
  check_kind(p, 1, "forward_scalar");
  return run_forward(p, x).out[0];
}

RewardDistribution forward_meanvar(const HeadParameters& p, std::span<const double> x) {
  check_kind(p, 2, "forward_meanvar");
  return to_distribution(run_forward(p, x));
}

LikertDistribution forward_classification(const HeadParameters& p, std::span<const double> x) {
  check_kind(p, 5, "forward_classification");
  return softmax5(run_forward(p, x).out);
}

DiffDistribution diff_distribution(const RewardDistribution& a, const RewardDistribution& b,
                                   double rho) {
  if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("rho must lie in [0, 1]");
  DiffDistribution diff;
  diff.mu_d = a.mu - b.mu;
  diff.rho = rho;
  const double var =
      a.sigma * a.sigma + b.sigma * b.sigma - 2.0 * rho * a.sigma * b.sigma;
  diff.sigma_d = std::sqrt(std::max(var, kVarianceFloor));
  return diff;
}

double make_rho(std::span<const AnnotatorJudgment> judgments, double eta) {
  if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("eta must lie in [0, 1]");
  if (judgments.empty()) throw std::invalid_argument("make_rho: no judgments");
  std::size_t ties = 0;
  for (const auto& j : judgments) {
    if (j.label.value == 0) ++ties;
  }
  return eta * static_cast<double>(ties) / static_cast<double>(judgments.size());
}

double cdf(double z, CdfKind kind, double scale) {
  switch (kind) {
    case CdfKind::exact_normal:
      return 0.5 * std::erfc(-z / std::numbers::sqrt2);
    case CdfKind::logistic:
      return sigmoid(scale * z);
    case CdfKind::tanh_approx:
      return 0.5 * (1.0 + std::tanh(scale * z));
  }
  throw std::invalid_argument("cdf: unknown kind");
}

double cdf_density(double z, CdfKind kind, double scale) {
  switch (kind) {
    case CdfKind::exact_normal:
      return kInvSqrt2Pi * std::exp(-0.5 * z * z);
    case CdfKind::logistic: {
      const double s = sigmoid(scale * z);
      return scale * s * (1.0 - s);
    }
    case CdfKind::tanh_approx: {
      const double t = std::tanh(scale * z);
      return 0.5 * scale * (1.0 - t * t);
    }
  }
  throw std::invalid_argument("cdf_density: unknown kind");
}

LabelDistribution label_probs(const DiffDistribution& diff, CdfKind kind, double scale) {
  if (diff.sigma_d <= 0.0) throw std::invalid_argument("label_probs: sigma_d must be positive");
  const auto F = [&](double t) { return cdf((t - diff.mu_d) / diff.sigma_d, kind, scale); };
  const double f_m15 = F(-1.5);
  const double f_m05 = F(-0.5);
  const double f_p05 = F(0.5);
  const double f_p15 = F(1.5);
  LabelDistribution dist;
  dist.probs[0] = f_m15;
  dist.probs[1] = std::max(f_m05 - f_m15, 0.0);
  dist.probs[2] = std::max(f_p05 - f_m05, 0.0);
  dist.probs[3] = std::max(f_p15 - f_p05, 0.0);
  dist.probs[4] = 1.0 - f_p15;
  return dist;
}

double expected_likert(const LikertDistribution& dist) {
  double acc = 0.0;
  for (int i = 0; i < 5; ++i) acc += (i + 1) * dist.probs[i];
  return acc;
}

double bt_loss(double r_chosen, double r_rejected) {
  return softplus(r_rejected - r_chosen);
}

double mse_loss(double predicted, int target_score) {
  if (target_score < 1 || target_score > 5) {
    throw std::invalid_argument("mse_loss: target score must be in 1..5");
  }
  const double diff = predicted - target_score;
  return diff * diff;
}

namespace {
template <typename Dist>
Dist smooth_impl(const Dist& dist, double eps) {
  if (eps < 0.0) throw std::invalid_argument("smoothing eps must be nonnegative");
  Dist out;
  const double denom = 1.0 + 5.0 * eps;
  for (int i = 0; i < 5; ++i) out.probs[i] = (dist.probs[i] + eps) / denom;
  return out;
}
}  // namespace

LabelDistribution smooth(const LabelDistribution& dist, double eps) {
  return smooth_impl(dist, eps);
}

LikertDistribution smooth(const LikertDistribution& dist, double eps) {
  return smooth_impl(dist, eps);
}

double kl_loss(std::span<const double> target, std::span<const double> predicted) {
  if (target.size() != 5 || predicted.size() != 5) {
    throw std::invalid_argument("kl_loss: expected 5-class distributions");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    if (target[i] < 0.0 || predicted[i] < 0.0) {
      throw std::invalid_argument("kl_loss: negative probability");
    }
    if (target[i] == 0.0) continue;
    if (predicted[i] == 0.0) {
      throw NumericError("kl_loss: zero predicted probability with nonzero target mass "
                         "(is smoothing enabled?)");
    }
    acc += target[i] * (std::log(target[i]) - std::log(predicted[i]));
  }
  return acc;
}

double log_normal_cdf(double z) {
  if (z >= -8.0) return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
  // Tail expansion: Phi(z) ~ phi(z)/(-z) * (1 - 1/z^2 + 3/z^4 - ...).
  const double z2 = z * z;
  const double z4 = z2 * z2;
  const double series = 1.0 - 1.0 / z2 + 3.0 / z4 - 15.0 / (z4 * z2) + 105.0 / (z4 * z4);
  return -0.5 * z2 - std::log(-z) - kLogSqrt2Pi + std::log(series);
}

double meanvar_nll_loss(const RewardDistribution& preferred, const RewardDistribution& other) {
  const double s =
      std::sqrt(preferred.sigma * preferred.sigma + other.sigma * other.sigma);
  if (s <= 0.0) throw std::invalid_argument("meanvar_nll_loss: zero combined spread");
  return -log_normal_cdf((preferred.mu - other.mu) / s);
}

LabelDistribution empirical_label_distribution(std::span<const AnnotatorJudgment> judgments) {
  if (judgments.empty()) {
    throw std::invalid_argument("empirical_label_distribution: no judgments");
  }
  LabelDistribution dist;
  for (const auto& j : judgments) dist.probs[j.label.value + 2] += 1.0;
  for (double& v : dist.probs) v /= static_cast<double>(judgments.size());
  return dist;
}

LikertDistribution empirical_likert_distribution(std::span<const AnnotatorJudgment> judgments,
                                                 Side side) {
  if (judgments.empty()) {
    throw std::invalid_argument("empirical_likert_distribution: no judgments");
  }
  LikertDistribution dist;
  for (const auto& j : judgments) {
    if (!j.raw_scores.has_value()) {
      throw DataError("judgment by '" + j.annotator_id + "' lacks raw scores");
    }
    const int score = side == Side::a ? j.raw_scores->score_a : j.raw_scores->score_b;
    dist.probs[score - 1] += 1.0;
  }
  for (double& v : dist.probs) v /= static_cast<double>(judgments.size());
  return dist;
}

double bt_sample_loss(const HeadParameters& p, std::span<const double> x_chosen,
                      std::span<const double> x_rejected, HeadGrad* grad) {
  check_kind(p, 1, "bt_sample_loss");
  const auto cache_c = run_forward(p, x_chosen);
  const auto cache_r = run_forward(p, x_rejected);
  const double delta = cache_c.out[0] - cache_r.out[0];
  const double loss = softplus(-delta);
  if (grad != nullptr) {
    const double d_delta = sigmoid(delta) - 1.0;
    const double dout_c[1] = {d_delta};
    const double dout_r[1] = {-d_delta};
    run_backward(p, x_chosen, cache_c, dout_c, *grad);
    run_backward(p, x_rejected, cache_r, dout_r, *grad);
  }
  return loss;
}

double bt_tie_sample_loss(const HeadParameters& p, std::span<const double> x_a,
                          std::span<const double> x_b, HeadGrad* grad) {
  check_kind(p, 1, "bt_tie_sample_loss");
  const auto cache_a = run_forward(p, x_a);
  const auto cache_b = run_forward(p, x_b);
  const double delta = cache_a.out[0] - cache_b.out[0];
  const double loss = 0.5 * (softplus(-delta) + softplus(delta));
  if (grad != nullptr) {
    const double d_delta = sigmoid(delta) - 0.5;
    const double dout_a[1] = {d_delta};
    const double dout_b[1] = {-d_delta};
    run_backward(p, x_a, cache_a, dout_a, *grad);
    run_backward(p, x_b, cache_b, dout_b, *grad);
  }
  return loss;
}

double mse_sample_loss(const HeadParameters& p, std::span<const double> x, int target_score,
                       HeadGrad* grad) {
  check_kind(p, 1, "mse_sample_loss");
  if (target_score < 1 || target_score > 5) {
    throw std::invalid_argument("mse_sample_loss: target score must be in 1..5");
  }
  const auto cache = run_forward(p, x);
  const double diff = cache.out[0] - target_score;
  if (grad != nullptr) {
    const double dout[1] = {2.0 * diff};
    run_backward(p, x, cache, dout, *grad);
  }
  return diff * diff;
}

double meanvar_kl_sample_loss(const HeadParameters& p, std::span<const double> x_a,
                              std::span<const double> x_b, const LabelDistribution& target,
                              double rho, const KlLossOptions& options, HeadGrad* grad) {
  check_kind(p, 2, "meanvar_kl_sample_loss");
  const auto cache_a = run_forward(p, x_a);
  const auto cache_b = run_forward(p, x_b);
  const auto dist_a = to_distribution(cache_a);
  const auto dist_b = to_distribution(cache_b);
  if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("rho must lie in [0, 1]");

  const double raw_var = dist_a.sigma * dist_a.sigma + dist_b.sigma * dist_b.sigma -
                         2.0 * rho * dist_a.sigma * dist_b.sigma;
  const bool floored = raw_var < kVarianceFloor;
  const double var = floored ? kVarianceFloor : raw_var;
  const double sigma_d = std::sqrt(var);
  const double mu_d = dist_a.mu - dist_b.mu;

  const double thresholds[4] = {-1.5, -0.5, 0.5, 1.5};
  double z[4];
  double f[4];
  for (int t = 0; t < 4; ++t) {
    z[t] = (thresholds[t] - mu_d) / sigma_d;
    f[t] = cdf(z[t], options.cdf_kind, options.cdf_scale);
  }
  const double raw_mid[3] = {f[1] - f[0], f[2] - f[1], f[3] - f[2]};
  LabelDistribution probs;
  probs.probs[0] = f[0];
  probs.probs[1] = std::max(raw_mid[0], 0.0);
  probs.probs[2] = std::max(raw_mid[1], 0.0);
  probs.probs[3] = std::max(raw_mid[2], 0.0);
  probs.probs[4] = 1.0 - f[3];
  const auto smoothed = smooth(probs, options.smoothing_eps);
  const double loss = kl_loss(target.probs, smoothed.probs);

  if (grad != nullptr) {
    const double denom = 1.0 + 5.0 * options.smoothing_eps;
    double dp[5];
    for (int i = 0; i < 5; ++i) {
      dp[i] = target.probs[i] > 0.0 ? -target.probs[i] / smoothed.probs[i] / denom : 0.0;
    }
    // Clamped middle bins are flat in the parameters.
    for (int m = 0; m < 3; ++m) {
      if (raw_mid[m] < 0.0) dp[m + 1] = 0.0;
    }
    const double df[4] = {dp[0] - dp[1], dp[1] - dp[2], dp[2] - dp[3], dp[3] - dp[4]};
    double dmu_d = 0.0;
    double dsigma_d = 0.0;
    for (int t = 0; t < 4; ++t) {
      const double dz = df[t] * cdf_density(z[t], options.cdf_kind, options.cdf_scale);
      dmu_d += dz * (-1.0 / sigma_d);
      dsigma_d += dz * (-z[t] / sigma_d);
    }
    const double dvar = floored ? 0.0 : dsigma_d / (2.0 * sigma_d);
    const double dsig_a = dvar * (2.0 * dist_a.sigma - 2.0 * rho * dist_b.sigma);
    const double dsig_b = dvar * (2.0 * dist_b.sigma - 2.0 * rho * dist_a.sigma);
    const double dout_a[2] = {dmu_d, dsig_a * spread_sign(cache_a.out[1])};
    const double dout_b[2] = {-dmu_d, dsig_b * spread_sign(cache_b.out[1])};
    run_backward(p, x_a, cache_a, dout_a, *grad);
    run_backward(p, x_b, cache_b, dout_b, *grad);
  }
  return loss;
}

double classification_kl_sample_loss(const HeadParameters& p, std::span<const double> x,
                                     const LikertDistribution& target, double smoothing_eps,
                                     HeadGrad* grad) {
  check_kind(p, 5, "classification_kl_sample_loss");
  const auto cache = run_forward(p, x);
  const auto probs = softmax5(cache.out);
  const auto smoothed = smooth(probs, smoothing_eps);
  const double loss = kl_loss(target.probs, smoothed.probs);

  if (grad != nullptr) {
    const double denom = 1.0 + 5.0 * smoothing_eps;
    double ds[5];
    for (int i = 0; i < 5; ++i) {
      ds[i] = target.probs[i] > 0.0 ? -target.probs[i] / smoothed.probs[i] / denom : 0.0;
    }
    double inner = 0.0;
    for (int i = 0; i < 5; ++i) inner += ds[i] * probs.probs[i];
    double dout[5];
    for (int j = 0; j < 5; ++j) dout[j] = probs.probs[j] * (ds[j] - inner);
    run_backward(p, x, cache, dout, *grad);
  }
  return loss;
}

double meanvar_nll_sample_loss(const HeadParameters& p, std::span<const double> x_preferred,
                               std::span<const double> x_other, HeadGrad* grad) {
  check_kind(p, 2, "meanvar_nll_sample_loss");
  const auto cache_p = run_forward(p, x_preferred);
  const auto cache_o = run_forward(p, x_other);
  const auto dist_p = to_distribution(cache_p);
  const auto dist_o = to_distribution(cache_o);
  const double s = std::sqrt(dist_p.sigma * dist_p.sigma + dist_o.sigma * dist_o.sigma);
  const double z = (dist_p.mu - dist_o.mu) / s;
  const double log_phi_cdf = log_normal_cdf(z);

  if (grad != nullptr) {
    // phi(z)/Phi(z) stays stable in log space for any z.
    const double mills = std::exp(-0.5 * z * z - kLogSqrt2Pi - log_phi_cdf);
    const double dz = -mills;
    const double ds = dz * (-z / s);
    const double dout_p[2] = {dz / s, ds * (dist_p.sigma / s) * spread_sign(cache_p.out[1])};
    const double dout_o[2] = {-dz / s, ds * (dist_o.sigma / s) * spread_sign(cache_o.out[1])};
    run_backward(p, x_preferred, cache_p, dout_p, *grad);
    run_backward(p, x_other, cache_o, dout_o, *grad);
  }
  return -log_phi_cdf;
}

double grad_check(const std::function<double(const HeadParameters&)>& loss,
                  const HeadParameters& at, const HeadGrad& analytic, double step) {
  HeadParameters probe = at;
  std::vector<double>* params[4] = {&probe.w1, &probe.b1, &probe.w2, &probe.b2};
  const std::vector<double>* grads[4] = {&analytic.w1, &analytic.b1, &analytic.w2, &analytic.b2};
  double worst = 0.0;
  for (int block = 0; block < 4; ++block) {
    auto& vec = *params[block];
    const auto& g = *grads[block];
    if (vec.size() != g.size()) {
      throw std::invalid_argument("grad_check: gradient shape mismatch");
    }
    for (std::size_t i = 0; i < vec.size(); ++i) {
      const double saved = vec[i];
      vec[i] = saved + step;
      const double up = loss(probe);
      vec[i] = saved - step;
      const double down = loss(probe);
      vec[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: non-finite loss at probe point");
      }
      const double fd = (up - down) / (2.0 * step);
      const double rel = std::fabs(g[i] - fd) / std::max(1.0, std::fabs(g[i]) + std::fabs(fd));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace divpref::model
