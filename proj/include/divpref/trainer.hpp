#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "divpref/evalsuite.hpp"
#include "divpref/features.hpp"
#include "divpref/model.hpp"
#include "divpref/types.hpp"

namespace divpref::trainer {

using evals::DivisivenessMode;
using features::Featurizer;
using model::CdfKind;
using model::HeadKind;
using model::HeadParameters;

// aggregated: one instance per pair from the majority label. all: one
// instance per judgment. Distributional heads (mean_variance KL,
// classification) always consume every judgment; the mode applies to
// bradley_terry, mse_regression and the mean_variance NLL baseline.
enum class LabelMode { aggregated, all };

// Training loss for mean_variance heads: region-probability KL or the
// win-probability NLL baseline.
enum class MeanvarLoss { kl, nll };

// Aggregate-tie pairs (and tie judgments) are dropped from bradley_terry
// training by default; `half` trains them toward win probability 0.5.
enum class BtTieMode { drop, half };

// auto: preference heads select on dev preference accuracy, mean_variance on
// dev loss. The other values force a metric.
enum class SelectMetric { auto_select, dev_loss, pref_accuracy, diverging_auroc };

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 16;
  int max_epochs = 10;
  double eval_interval_epochs = 0.25;
  uint64_t seed = 0;
  double eta = 0.0;
  double smoothing_eps = 0.05;
  CdfKind cdf_kind = CdfKind::logistic;
  double cdf_scale = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  LabelMode training_label_mode = LabelMode::aggregated;
  int hidden_width = 64;
  MeanvarLoss meanvar_loss = MeanvarLoss::kl;
  BtTieMode bt_tie_mode = BtTieMode::drop;
  SelectMetric select_metric = SelectMetric::auto_select;
  double selection_lambda = 1.0;
};

// Parses "key = value" lines (# comments and blank lines allowed); keys are
// the TrainConfig field names. Unknown keys or unparsable values are errors.
TrainConfig load_train_config(const std::filesystem::path& path);
// Applies one key/value onto a config (same vocabulary as the file).
void apply_config_entry(TrainConfig& config, const std::string& key, const std::string& value);
// Stable hash of every field, for checkpoint provenance.
std::string train_config_hash(const TrainConfig& config);

struct EvalRecord {
  int64_t step = 0;
  double epoch_fraction = 0.0;
  double train_loss = 0.0;
  double dev_metric = 0.0;
};

struct TrainHistory {
  std::vector<EvalRecord> records;  // ordered by step; first is step 0
  std::size_t best_index = 0;
  bool higher_is_better = true;
};

struct TrainResult {
  HeadParameters head;  // parameters of the best dev checkpoint
  TrainHistory history;
};

// Mini-batch Adam over the per-kind example losses, evaluating the dev metric
// every ceil(eval_interval_epochs * steps_per_epoch) steps (plus step 0 and
// the final step) and keeping the best checkpoint. Deterministic for a fixed
// config and seed. max_epochs 0 returns the initialized parameters.
TrainResult train(HeadKind kind, std::span<const PreferencePair> train_pairs,
                  std::span<const PreferencePair> dev_pairs, const Featurizer& featurizer,
                  const TrainConfig& config);

// Mean per-example loss of `head` over `pairs` under the kind/config example
// construction (the quantity train() optimizes).
double dataset_loss(const HeadParameters& head, HeadKind kind,
                    std::span<const PreferencePair> pairs,
                    std::span<const features::PairFeatures> feats, const TrainConfig& config);

// Largest-AUROC lambda for separating diverging pairs on dev; ties prefer the
// smaller lambda. Errors when dev lacks diverging or non-diverging pairs.
double tune_lambda(const HeadParameters& head, std::span<const PreferencePair> dev_pairs,
                   std::span<const features::PairFeatures> dev_feats,
                   std::span<const double> grid,
                   DivisivenessMode mode = DivisivenessMode::product);

inline constexpr double kDefaultLambdaGrid[] = {0.0, 0.25, 0.5, 1.0, 2.0, 4.0};

struct EtaTuneResult {
  double eta = 0.0;
  double lambda = 0.0;
  double dev_auroc = 0.0;
  TrainResult trained;
};

// Trains a mean_variance head per eta candidate and keeps the one whose best
// tuned lambda gives the highest dev diverging AUROC; ties prefer the smaller
// eta.
EtaTuneResult tune_eta(std::span<const double> eta_grid,
                       std::span<const PreferencePair> train_pairs,
                       std::span<const PreferencePair> dev_pairs, const Featurizer& featurizer,
                       const TrainConfig& config,
                       std::span<const double> lambda_grid = kDefaultLambdaGrid);

}  // namespace divpref::trainer
