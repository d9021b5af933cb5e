#include "divpref/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "divpref/errors.hpp"
#include "divpref/prefdata.hpp"
#include "divpref/rng.hpp"

namespace divpref::trainer {

namespace {

using features::FeatureVector;
using features::PairFeatures;
using model::HeadGrad;

const char* cdf_kind_name(CdfKind kind) {
  switch (kind) {
    case CdfKind::exact_normal: return "exact_normal";
    case CdfKind::logistic: return "logistic";
    case CdfKind::tanh_approx: return "tanh_approx";
  }
  return "?";
}

// One optimizable instance. Which fields are live depends on the head kind:
// bt uses a=chosen/b=rejected (or a tie pair), mse uses a+target_score,
// mean-variance uses a/b plus either the label target or the preferred
// ordering, classification uses a+likert_target.
struct Example {
  const FeatureVector* a = nullptr;
  const FeatureVector* b = nullptr;
  bool tie = false;
  int target_score = 0;
  double rho = 0.0;
  model::LabelDistribution label_target;
  model::LikertDistribution likert_target;
};

int lower_median_score(std::vector<int> scores) {
  std::sort(scores.begin(), scores.end());
  return scores[(scores.size() - 1) / 2];
}

std::vector<Example> build_examples(HeadKind kind, std::span<const PreferencePair> pairs,
                                    std::span<const PairFeatures> feats,
                                    const TrainConfig& config) {
  std::vector<Example> out;
  const bool aggregated = config.training_label_mode == LabelMode::aggregated;

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    const auto& xa = feats[i].a;
    const auto& xb = feats[i].b;

    const auto push_preference = [&](int label) {
      Example ex;
      if (label > 0) {
        ex.a = &xa;
        ex.b = &xb;
      } else if (label < 0) {
        ex.a = &xb;
        ex.b = &xa;
      } else {
        if (kind == HeadKind::mean_variance || config.bt_tie_mode == BtTieMode::drop) return;
        ex.a = &xa;
        ex.b = &xb;
        ex.tie = true;
      }
      out.push_back(ex);
    };

    switch (kind) {
      case HeadKind::bradley_terry:
        if (aggregated) {
          push_preference(prefdata::aggregate_majority(pair.judgments).value);
        } else {
          for (const auto& j : pair.judgments) push_preference(j.label.value);
        }
        break;

      case HeadKind::mse_regression: {
        const auto scores_for = [&](Side side) {
          std::vector<int> scores;
          scores.reserve(pair.judgments.size());
          for (const auto& j : pair.judgments) {
            if (!j.raw_scores.has_value()) {
              throw DataError("pair '" + pair.id +
                              "' has a judgment without scores; score-based heads need "
                              "score annotations");
            }
            scores.push_back(side == Side::a ? j.raw_scores->score_a : j.raw_scores->score_b);
          }
          return scores;
        };
        const auto push_score = [&](const FeatureVector& x, int score) {
          Example ex;
          ex.a = &x;
          ex.target_score = score;
          out.push_back(ex);
        };
        if (aggregated) {
          push_score(xa, lower_median_score(scores_for(Side::a)));
          push_score(xb, lower_median_score(scores_for(Side::b)));
        } else {
          for (const int s : scores_for(Side::a)) push_score(xa, s);
          for (const int s : scores_for(Side::b)) push_score(xb, s);
        }
        break;
      }

      case HeadKind::mean_variance:
        if (config.meanvar_loss == MeanvarLoss::kl) {
          Example ex;
          ex.a = &xa;
          ex.b = &xb;
          ex.label_target = model::empirical_label_distribution(pair.judgments);
          ex.rho = model::make_rho(pair.judgments, config.eta);
          out.push_back(ex);
        } else if (aggregated) {
          push_preference(prefdata::aggregate_majority(pair.judgments).value);
        } else {
          for (const auto& j : pair.judgments) push_preference(j.label.value);
        }
        break;

      case HeadKind::classification: {
        try {
          Example ex_a;
          ex_a.a = &xa;
          ex_a.likert_target = model::empirical_likert_distribution(pair.judgments, Side::a);
          Example ex_b;
          ex_b.a = &xb;
          ex_b.likert_target = model::empirical_likert_distribution(pair.judgments, Side::b);
          out.push_back(ex_a);
          out.push_back(ex_b);
        } catch (const DataError& e) {
          throw DataError("pair '" + pair.id + "': " + e.what());
        }
        break;
      }
    }
  }
  return out;
}

double example_loss(const HeadParameters& head, HeadKind kind, const Example& ex,
                    const TrainConfig& config, HeadGrad* grad) {
  switch (kind) {
    case HeadKind::bradley_terry:
      return ex.tie ? model::bt_tie_sample_loss(head, *ex.a, *ex.b, grad)
                    : model::bt_sample_loss(head, *ex.a, *ex.b, grad);
    case HeadKind::mse_regression:
      return model::mse_sample_loss(head, *ex.a, ex.target_score, grad);
    case HeadKind::mean_variance:
      if (config.meanvar_loss == MeanvarLoss::kl) {
        model::KlLossOptions options;
        options.cdf_kind = config.cdf_kind;
        options.cdf_scale = config.cdf_scale;
        options.smoothing_eps = config.smoothing_eps;
        return model::meanvar_kl_sample_loss(head, *ex.a, *ex.b, ex.label_target, ex.rho,
                                             options, grad);
      }
      return model::meanvar_nll_sample_loss(head, *ex.a, *ex.b, grad);
    case HeadKind::classification:
      return model::classification_kl_sample_loss(head, *ex.a, ex.likert_target,
                                                  config.smoothing_eps, grad);
  }
  throw std::invalid_argument("example_loss: unknown head kind");
}

double mean_loss(const HeadParameters& head, HeadKind kind, std::span<const Example> examples,
                 const TrainConfig& config) {
  double total = 0.0;
  for (const auto& ex : examples) total += example_loss(head, kind, ex, config, nullptr);
  return total / static_cast<double>(examples.size());
}

struct AdamState {
  HeadGrad m;
  HeadGrad v;
  int64_t t = 0;
};

void adam_step(HeadParameters& head, const HeadGrad& grad, AdamState& state,
               const TrainConfig& config) {
  state.t += 1;
  const double correct1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(state.t));
  const double correct2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(state.t));
  const auto update = [&](std::vector<double>& theta, std::vector<double>& m,
                          std::vector<double>& v, const std::vector<double>& g) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g[i];
      v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g[i] * g[i];
      const double mhat = m[i] / correct1;
      const double vhat = v[i] / correct2;
      theta[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_epsilon);
    }
  };
  update(head.w1, state.m.w1, state.v.w1, grad.w1);
  update(head.b1, state.m.b1, state.v.b1, grad.b1);
  update(head.w2, state.m.w2, state.v.w2, grad.w2);
  update(head.b2, state.m.b2, state.v.b2, grad.b2);
}

enum class Metric { dev_loss, pref_accuracy, diverging_auroc };

Metric effective_metric(HeadKind kind, SelectMetric select) {
  switch (select) {
    case SelectMetric::dev_loss: return Metric::dev_loss;
    case SelectMetric::pref_accuracy: return Metric::pref_accuracy;
    case SelectMetric::diverging_auroc: return Metric::diverging_auroc;
    case SelectMetric::auto_select:
      return kind == HeadKind::mean_variance ? Metric::dev_loss : Metric::pref_accuracy;
  }
  throw std::invalid_argument("unknown selection metric");
}

}  // namespace

TrainResult train(HeadKind kind, std::span<const PreferencePair> train_pairs,
                  std::span<const PreferencePair> dev_pairs, const Featurizer& featurizer,
                  const TrainConfig& config) {
  if (train_pairs.empty()) throw DataError("training split is empty");
  if (dev_pairs.empty()) throw DataError("dev split is empty");
  if (config.batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (config.max_epochs < 0) throw std::invalid_argument("max_epochs must be nonnegative");
  if (config.eval_interval_epochs <= 0.0) {
    throw std::invalid_argument("eval_interval_epochs must be positive");
  }

  const auto train_feats = features::featurize_pairs(featurizer, train_pairs);
  const auto dev_feats = features::featurize_pairs(featurizer, dev_pairs);
  const auto examples = build_examples(kind, train_pairs, train_feats, config);
  if (examples.empty()) {
    throw DataError("no usable training examples (all pairs dropped for this head kind)");
  }
  const int d = static_cast<int>(train_feats[0].a.size());

  Rng rng(config.seed);
  HeadParameters head = model::init_head(kind, d, config.hidden_width, rng);

  const Metric metric = effective_metric(kind, config.select_metric);
  const bool higher_better = metric != Metric::dev_loss;
  const auto dev_examples = metric == Metric::dev_loss
                                ? build_examples(kind, dev_pairs, dev_feats, config)
                                : std::vector<Example>{};
  if (metric == Metric::dev_loss && dev_examples.empty()) {
    throw DataError("no usable dev examples for loss-based selection");
  }

  const auto measure_dev = [&](const HeadParameters& h) {
    switch (metric) {
      case Metric::dev_loss:
        return mean_loss(h, kind, dev_examples, config);
      case Metric::pref_accuracy:
        return evals::preference_accuracy(h, dev_pairs, dev_feats);
      case Metric::diverging_auroc:
        return evals::diverging_id_auroc(h, dev_pairs, dev_feats, config.selection_lambda);
    }
    throw std::invalid_argument("unknown selection metric");
  };

  const auto n = examples.size();
  const auto steps_per_epoch =
      static_cast<int64_t>((n + config.batch_size - 1) / config.batch_size);
  const auto eval_every = std::max<int64_t>(
      1, static_cast<int64_t>(
             std::ceil(config.eval_interval_epochs * static_cast<double>(steps_per_epoch))));
  const int64_t total_steps = steps_per_epoch * config.max_epochs;

  TrainResult result;
  result.history.higher_is_better = higher_better;

  HeadParameters best = head;
  double best_metric = 0.0;
  const auto record_eval = [&](int64_t step) {
    EvalRecord rec;
    rec.step = step;
    rec.epoch_fraction = static_cast<double>(step) / static_cast<double>(steps_per_epoch);
    rec.train_loss = mean_loss(head, kind, examples, config);
    rec.dev_metric = measure_dev(head);
    result.history.records.push_back(rec);
    const bool improved =
        result.history.records.size() == 1 ||
        (higher_better ? rec.dev_metric > best_metric : rec.dev_metric < best_metric);
    if (improved) {
      best = head;
      best_metric = rec.dev_metric;
      result.history.best_index = result.history.records.size() - 1;
    }
  };

  record_eval(0);

  AdamState adam;
  adam.m = HeadGrad::zeros_like(head);
  adam.v = HeadGrad::zeros_like(head);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  int64_t step = 0;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      HeadGrad grad = HeadGrad::zeros_like(head);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        batch_loss += example_loss(head, kind, examples[order[k]], config, &grad);
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      batch_loss *= inv;
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite training loss at step " + std::to_string(step + 1));
      }
      grad.scale(inv);
      adam_step(head, grad, adam, config);
      ++step;
      if (step % eval_every == 0) record_eval(step);
    }
  }
  if (total_steps > 0 && total_steps % eval_every != 0) record_eval(total_steps);

  result.head = std::move(best);
  return result;
}

double dataset_loss(const HeadParameters& head, HeadKind kind,
                    std::span<const PreferencePair> pairs,
                    std::span<const features::PairFeatures> feats, const TrainConfig& config) {
  const auto examples = build_examples(kind, pairs, feats, config);
  if (examples.empty()) throw DataError("no usable examples for this head kind");
  return mean_loss(head, kind, examples, config);
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  TrainConfig config;
  std::string line;
  int line_no = 0;
  const auto trim = [](std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return std::string();
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(path.string() + " line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    try {
      apply_config_entry(config, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path.string() + " line " + std::to_string(line_no) + ": " +
                                  e.what());
    }
  }
  return config;
}

namespace {

double parse_double(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double parsed = 0.0;
  try {
    parsed = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad value '" + value + "' for " + key);
  }
  if (pos != value.size()) throw std::invalid_argument("bad value '" + value + "' for " + key);
  return parsed;
}

int64_t parse_int(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  int64_t parsed = 0;
  try {
    parsed = std::stoll(value, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad value '" + value + "' for " + key);
  }
  if (pos != value.size()) throw std::invalid_argument("bad value '" + value + "' for " + key);
  return parsed;
}

}  // namespace

void apply_config_entry(TrainConfig& config, const std::string& key, const std::string& value) {
  const auto require = [&](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(key + " " + what + " (got '" + value + "')");
  };
  if (key == "learning_rate") {
    config.learning_rate = parse_double(key, value);
    require(config.learning_rate > 0.0, "must be positive");
  } else if (key == "batch_size") {
    config.batch_size = static_cast<int>(parse_int(key, value));
    require(config.batch_size >= 1, "must be at least 1");
  } else if (key == "max_epochs") {
    config.max_epochs = static_cast<int>(parse_int(key, value));
    require(config.max_epochs >= 0, "must be nonnegative");
  } else if (key == "eval_interval_epochs") {
    config.eval_interval_epochs = parse_double(key, value);
    require(config.eval_interval_epochs > 0.0, "must be positive");
  } else if (key == "seed") {
    config.seed = static_cast<uint64_t>(parse_int(key, value));
  } else if (key == "eta") {
    config.eta = parse_double(key, value);
    require(config.eta >= 0.0 && config.eta <= 1.0, "must lie in [0, 1]");
  } else if (key == "smoothing_eps") {
    config.smoothing_eps = parse_double(key, value);
    require(config.smoothing_eps >= 0.0, "must be nonnegative");
  } else if (key == "cdf_kind") {
    if (value == "exact_normal") config.cdf_kind = CdfKind::exact_normal;
    else if (value == "logistic") config.cdf_kind = CdfKind::logistic;
    else if (value == "tanh" || value == "tanh_approx") config.cdf_kind = CdfKind::tanh_approx;
    else throw std::invalid_argument("unknown cdf_kind '" + value + "'");
  } else if (key == "cdf_scale") {
    config.cdf_scale = parse_double(key, value);
    require(config.cdf_scale > 0.0, "must be positive");
  } else if (key == "adam_beta1") {
    config.adam_beta1 = parse_double(key, value);
    require(config.adam_beta1 >= 0.0 && config.adam_beta1 < 1.0, "must lie in [0, 1)");
  } else if (key == "adam_beta2") {
    config.adam_beta2 = parse_double(key, value);
    require(config.adam_beta2 >= 0.0 && config.adam_beta2 < 1.0, "must lie in [0, 1)");
  } else if (key == "adam_epsilon") {
    config.adam_epsilon = parse_double(key, value);
    require(config.adam_epsilon > 0.0, "must be positive");
  } else if (key == "training_label_mode") {
    if (value == "aggregated") config.training_label_mode = LabelMode::aggregated;
    else if (value == "all") config.training_label_mode = LabelMode::all;
    else throw std::invalid_argument("unknown training_label_mode '" + value + "'");
  } else if (key == "hidden_width") {
    config.hidden_width = static_cast<int>(parse_int(key, value));
    require(config.hidden_width >= 1, "must be at least 1");
  } else if (key == "meanvar_loss") {
    if (value == "kl") config.meanvar_loss = MeanvarLoss::kl;
    else if (value == "nll") config.meanvar_loss = MeanvarLoss::nll;
    else throw std::invalid_argument("unknown meanvar_loss '" + value + "'");
  } else if (key == "bt_tie_mode") {
    if (value == "drop") config.bt_tie_mode = BtTieMode::drop;
    else if (value == "half") config.bt_tie_mode = BtTieMode::half;
    else throw std::invalid_argument("unknown bt_tie_mode '" + value + "'");
  } else if (key == "select_metric") {
    if (value == "auto") config.select_metric = SelectMetric::auto_select;
    else if (value == "dev_loss") config.select_metric = SelectMetric::dev_loss;
    else if (value == "pref_accuracy") config.select_metric = SelectMetric::pref_accuracy;
    else if (value == "diverging_auroc") config.select_metric = SelectMetric::diverging_auroc;
    else throw std::invalid_argument("unknown select_metric '" + value + "'");
  } else if (key == "selection_lambda") {
    config.selection_lambda = parse_double(key, value);
    require(config.selection_lambda >= 0.0, "must be nonnegative");
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

std::string train_config_hash(const TrainConfig& config) {
  std::ostringstream text;
  text.precision(17);
  const char* label_mode =
      config.training_label_mode == LabelMode::aggregated ? "aggregated" : "all";
  const char* mv = config.meanvar_loss == MeanvarLoss::kl ? "kl" : "nll";
  const char* tie = config.bt_tie_mode == BtTieMode::drop ? "drop" : "half";
  const char* select = "auto";
  switch (config.select_metric) {
    case SelectMetric::auto_select: select = "auto"; break;
    case SelectMetric::dev_loss: select = "dev_loss"; break;
    case SelectMetric::pref_accuracy: select = "pref_accuracy"; break;
    case SelectMetric::diverging_auroc: select = "diverging_auroc"; break;
  }
  text << "learning_rate=" << config.learning_rate << ";batch_size=" << config.batch_size
       << ";max_epochs=" << config.max_epochs
       << ";eval_interval_epochs=" << config.eval_interval_epochs << ";seed=" << config.seed
       << ";eta=" << config.eta << ";smoothing_eps=" << config.smoothing_eps
       << ";cdf_kind=" << cdf_kind_name(config.cdf_kind) << ";cdf_scale=" << config.cdf_scale
       << ";adam_beta1=" << config.adam_beta1 << ";adam_beta2=" << config.adam_beta2
       << ";adam_epsilon=" << config.adam_epsilon << ";training_label_mode=" << label_mode
       << ";hidden_width=" << config.hidden_width << ";meanvar_loss=" << mv
       << ";bt_tie_mode=" << tie << ";select_metric=" << select
       << ";selection_lambda=" << config.selection_lambda;
  const std::string serialized = text.str();
  uint64_t h = 0xcbf29ce484222325ull;
  for (const char c : serialized) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

double tune_lambda(const HeadParameters& head, std::span<const PreferencePair> dev_pairs,
                   std::span<const features::PairFeatures> dev_feats,
                   std::span<const double> grid, DivisivenessMode mode) {
  if (grid.empty()) throw std::invalid_argument("tune_lambda: empty grid");
  std::size_t diverging = 0;
  for (const auto& pair : dev_pairs) {
    if (prefdata::classify_agreement(pair.judgments).kind == AgreementKind::diverging) {
      ++diverging;
    }
  }
  if (diverging == 0 || diverging == dev_pairs.size()) {
    throw DataError("degenerate dev set: lambda tuning needs both diverging and "
                    "non-diverging pairs");
  }
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  double best_lambda = sorted.front();
  double best_auroc = -1.0;
  for (const double lambda : sorted) {
    const double score = evals::diverging_id_auroc(head, dev_pairs, dev_feats, lambda, mode);
    if (score > best_auroc) {
      best_auroc = score;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

EtaTuneResult tune_eta(std::span<const double> eta_grid,
                       std::span<const PreferencePair> train_pairs,
                       std::span<const PreferencePair> dev_pairs, const Featurizer& featurizer,
                       const TrainConfig& config, std::span<const double> lambda_grid) {
  if (eta_grid.empty()) throw std::invalid_argument("tune_eta: empty grid");
  std::vector<double> sorted(eta_grid.begin(), eta_grid.end());
  std::sort(sorted.begin(), sorted.end());
  const auto dev_feats = features::featurize_pairs(featurizer, dev_pairs);

  EtaTuneResult best;
  double best_auroc = -1.0;
  for (const double eta : sorted) {
    TrainConfig candidate = config;
    candidate.eta = eta;
    auto trained = train(HeadKind::mean_variance, train_pairs, dev_pairs, featurizer, candidate);
    const double lambda = tune_lambda(trained.head, dev_pairs, dev_feats, lambda_grid);
    const double score = evals::diverging_id_auroc(trained.head, dev_pairs, dev_feats, lambda);
    if (score > best_auroc) {
      best_auroc = score;
      best.eta = eta;
      best.lambda = lambda;
      best.dev_auroc = score;
      best.trained = std::move(trained);
    }
  }
  return best;
}

}  // namespace divpref::trainer
