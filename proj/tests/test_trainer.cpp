#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "divpref/checkpoint.hpp"
#include "divpref/errors.hpp"
#include "divpref/evalsuite.hpp"
#include "divpref/features.hpp"
#include "divpref/model.hpp"
#include "divpref/prefdata.hpp"
#include "divpref/trainer.hpp"
#include "support/synthetic.hpp"

using namespace divpref;
using model::HeadKind;
using model::HeadParameters;
using trainer::TrainConfig;
namespace fs = std::filesystem;

namespace {

// Small corpus + featurizer reused by the heavier cases.
struct SmallWorld {
  synth::Population population;
  std::vector<PreferencePair> train;
  std::vector<PreferencePair> dev;
  features::EmbeddingTableFeaturizer featurizer;
  std::vector<features::PairFeatures> dev_feats;

  SmallWorld()
      : population(synth::make_population(140, 99)),
        train(),
        dev(),
        featurizer(population.embeddings) {
    auto split = prefdata::split_dataset(population.pairs, 5, 0, 40);
    train = split.train;
    dev = split.dev;
    dev_feats = features::featurize_pairs(featurizer, dev);
  }

  TrainConfig fast_config() const {
    TrainConfig c;
    c.max_epochs = 2;
    c.hidden_width = 8;
    c.seed = 21;
    return c;
  }
};

SmallWorld& world() {
  static SmallWorld w;
  return w;
}

PreferencePair label_pair(const std::string& id, std::vector<int> labels) {
  PreferencePair p;
  p.id = id;
  p.prompt = "q";
  p.response_a = "a";
  p.response_b = "b";
  int k = 0;
  for (int l : labels) {
    AnnotatorJudgment j;
    j.annotator_id = "u" + std::to_string(k++);
    j.label.value = l;
    p.judgments.push_back(j);
  }
  return p;
}

bool heads_equal(const HeadParameters& a, const HeadParameters& b) {
  return a.kind == b.kind && a.d == b.d && a.h == b.h && a.o == b.o && a.w1 == b.w1 &&
         a.b1 == b.b1 && a.w2 == b.w2 && a.b2 == b.b2;
}

}  // namespace

TEST_CASE("checkpoint JSON round trip is lossless") {
  Rng rng(5);
  model::Checkpoint ck;
  ck.head = model::init_head(HeadKind::mean_variance, 7, 3, rng);
  // Values with no short decimal representation must still survive.
  ck.head.w1[0] = 1.0 / 3.0;
  ck.head.w1[1] = 1e-300;
  ck.head.b2[0] = std::nextafter(1.0, 2.0);
  ck.feature_config.kind = features::FeatureConfig::Kind::file;
  ck.feature_config.dim = 7;
  ck.feature_config.response_weight = 2.5;
  ck.feature_config.location = "emb.jsonl";
  ck.seed = 0xdeadbeef12345678ull;
  ck.train_config_hash = trainer::train_config_hash(TrainConfig{});

  auto text = model::checkpoint_to_json(ck);
  auto back = model::checkpoint_from_json(text);
  CHECK(heads_equal(back.head, ck.head));
  CHECK(back.head.w1[0] == ck.head.w1[0]);
  CHECK(back.head.w1[1] == 1e-300);
  CHECK(back.head.b2[0] == ck.head.b2[0]);
  CHECK(back.feature_config.kind == ck.feature_config.kind);
  CHECK(back.feature_config.dim == 7);
  CHECK(back.feature_config.response_weight == 2.5);
  CHECK(back.feature_config.location == "emb.jsonl");
  CHECK(back.seed == ck.seed);
  CHECK(back.train_config_hash == ck.train_config_hash);

  const auto dir = fs::temp_directory_path() / "divpref-trainer-test";
  fs::create_directories(dir);
  const auto path = dir / "model.json";
  model::save_checkpoint(path, ck);
  auto loaded = model::load_checkpoint(path);
  CHECK(heads_equal(loaded.head, ck.head));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint parsing rejects malformed input") {
  CHECK_THROWS_AS(model::checkpoint_from_json("not json at all"), DataError);
  CHECK_THROWS_AS(model::checkpoint_from_json("[1, 2]"), DataError);

  Rng rng(5);
  model::Checkpoint ck;
  ck.head = model::init_head(HeadKind::bradley_terry, 3, 2, rng);
  auto text = model::checkpoint_to_json(ck);

  auto drop_field = text;
  const auto pos = drop_field.find("\"seed\"");
  REQUIRE(pos != std::string::npos);
  // Corrupt the field name so it reads as missing.
  drop_field.replace(pos, 6, "\"sxxd\"");
  CHECK_THROWS_AS(model::checkpoint_from_json(drop_field), DataError);

  auto bad_kind = text;
  const auto kpos = bad_kind.find("bradley_terry");
  REQUIRE(kpos != std::string::npos);
  bad_kind.replace(kpos, 13, "mystery_model");
  CHECK_THROWS_AS(model::checkpoint_from_json(bad_kind), DataError);

  CHECK_THROWS_AS(model::load_checkpoint(fs::temp_directory_path() / "divpref-absent.json"),
                  DataError);
}

TEST_CASE("train is deterministic in config and seed") {
  auto& w = world();
  auto config = w.fast_config();
  auto r1 = trainer::train(HeadKind::bradley_terry, w.train, w.dev, w.featurizer, config);
  auto r2 = trainer::train(HeadKind::bradley_terry, w.train, w.dev, w.featurizer, config);
  CHECK(heads_equal(r1.head, r2.head));
  REQUIRE(r1.history.records.size() == r2.history.records.size());
  for (std::size_t i = 0; i < r1.history.records.size(); ++i) {
    CHECK(r1.history.records[i].step == r2.history.records[i].step);
    CHECK(r1.history.records[i].train_loss == r2.history.records[i].train_loss);
    CHECK(r1.history.records[i].dev_metric == r2.history.records[i].dev_metric);
  }
  CHECK(r1.history.best_index == r2.history.best_index);

  config.seed = 22;
  auto r3 = trainer::train(HeadKind::bradley_terry, w.train, w.dev, w.featurizer, config);
  CHECK_FALSE(heads_equal(r1.head, r3.head));
}

TEST_CASE("max_epochs 0 returns the seeded initialization untouched") {
  auto& w = world();
  auto config = w.fast_config();
  config.max_epochs = 0;
  auto result = trainer::train(HeadKind::mean_variance, w.train, w.dev, w.featurizer, config);

  Rng rng(config.seed);
  auto expected = model::init_head(HeadKind::mean_variance, 16, config.hidden_width, rng);
  CHECK(heads_equal(result.head, expected));
  REQUIRE(result.history.records.size() == 1);
  CHECK(result.history.records[0].step == 0);
  CHECK(result.history.best_index == 0);
}

TEST_CASE("training lowers the optimized loss for every head kind") {
  auto& w = world();
  auto train_feats = features::featurize_pairs(w.featurizer, w.train);

  struct Setup {
    HeadKind kind;
    trainer::MeanvarLoss mv = trainer::MeanvarLoss::kl;
  };
  const Setup setups[] = {
      {HeadKind::bradley_terry},
      {HeadKind::mse_regression},
      {HeadKind::mean_variance, trainer::MeanvarLoss::kl},
      {HeadKind::mean_variance, trainer::MeanvarLoss::nll},
      {HeadKind::classification},
  };
  for (const auto& setup : setups) {
    auto config = w.fast_config();
    config.meanvar_loss = setup.mv;
    config.max_epochs = 2;
    auto trained = trainer::train(setup.kind, w.train, w.dev, w.featurizer, config);

    // The recorded trajectory tracks the optimized objective on the full
    // training set; the first record is the untouched initialization. The
    // returned head itself may be any earlier dev-selected snapshot.
    REQUIRE(trained.history.records.size() >= 2);
    const double before = trained.history.records.front().train_loss;
    const double after = trained.history.records.back().train_loss;
    CHECK(after < before);

    // And the step-0 record agrees with dataset_loss on the same init.
    config.max_epochs = 0;
    auto at_init = trainer::train(setup.kind, w.train, w.dev, w.featurizer, config);
    CHECK(trainer::dataset_loss(at_init.head, setup.kind, w.train, train_feats, config) ==
          doctest::Approx(before).epsilon(1e-12));
  }
}

TEST_CASE("one full-batch step at a small rate reduces the training loss") {
  auto& w = world();
  auto config = w.fast_config();
  config.max_epochs = 1;
  config.batch_size = 1 << 20;  // everything in one batch
  config.learning_rate = 1e-5;
  config.eval_interval_epochs = 1.0;
  for (auto kind : {HeadKind::bradley_terry, HeadKind::mse_regression,
                    HeadKind::mean_variance, HeadKind::classification}) {
    auto result = trainer::train(kind, w.train, w.dev, w.featurizer, config);
    REQUIRE(result.history.records.size() == 2);
    CHECK(result.history.records[1].train_loss < result.history.records[0].train_loss);
  }
}

TEST_CASE("the returned head reproduces its recorded dev metric") {
  auto& w = world();
  auto config = w.fast_config();

  // auto for bradley_terry selects dev preference accuracy.
  auto bt = trainer::train(HeadKind::bradley_terry, w.train, w.dev, w.featurizer, config);
  CHECK(bt.history.higher_is_better);
  const auto& bt_best = bt.history.records[bt.history.best_index];
  CHECK(evals::preference_accuracy(bt.head, w.dev, w.dev_feats) ==
        doctest::Approx(bt_best.dev_metric).epsilon(1e-12));
  for (const auto& rec : bt.history.records) {
    CHECK(rec.dev_metric <= bt_best.dev_metric);
  }

  // auto for mean_variance selects dev loss, lower is better.
  auto mv = trainer::train(HeadKind::mean_variance, w.train, w.dev, w.featurizer, config);
  CHECK_FALSE(mv.history.higher_is_better);
  const auto& mv_best = mv.history.records[mv.history.best_index];
  CHECK(trainer::dataset_loss(mv.head, HeadKind::mean_variance, w.dev, w.dev_feats, config) ==
        doctest::Approx(mv_best.dev_metric).epsilon(1e-12));
  for (const auto& rec : mv.history.records) {
    CHECK(rec.dev_metric >= mv_best.dev_metric);
  }
}

TEST_CASE("eval schedule starts at step 0 and ends at the final step") {
  auto& w = world();
  auto config = w.fast_config();
  config.eval_interval_epochs = 0.4;
  auto result = trainer::train(HeadKind::bradley_terry, w.train, w.dev, w.featurizer, config);
  const auto& records = result.history.records;
  REQUIRE(records.size() >= 2);
  CHECK(records.front().step == 0);
  for (std::size_t i = 1; i < records.size(); ++i) {
    CHECK(records[i].step > records[i - 1].step);
  }
  CHECK(records.back().epoch_fraction == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("non-finite training loss raises a numeric error") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, features::FeatureVector> table{
      {"p0#a", {nan, 1.0}}, {"p0#b", {0.5, 0.25}},
      {"p1#a", {0.5, 1.0}}, {"p1#b", {0.5, 0.25}},
  };
  features::EmbeddingTableFeaturizer featurizer(std::move(table));
  std::vector<PreferencePair> pairs{label_pair("p0", {2}), label_pair("p1", {1})};
  TrainConfig config;
  config.max_epochs = 1;
  config.hidden_width = 4;
  try {
    trainer::train(HeadKind::bradley_terry, pairs, pairs, featurizer, config);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
  }
}

TEST_CASE("train validates its inputs") {
  auto& w = world();
  auto config = w.fast_config();
  std::vector<PreferencePair> none;
  CHECK_THROWS_AS(trainer::train(HeadKind::bradley_terry, none, w.dev, w.featurizer, config),
                  DataError);
  CHECK_THROWS_AS(trainer::train(HeadKind::bradley_terry, w.train, none, w.featurizer, config),
                  DataError);
  config.batch_size = 0;
  CHECK_THROWS_AS(trainer::train(HeadKind::bradley_terry, w.train, w.dev, w.featurizer, config),
                  std::invalid_argument);
  config = w.fast_config();
  config.eval_interval_epochs = 0.0;
  CHECK_THROWS_AS(trainer::train(HeadKind::bradley_terry, w.train, w.dev, w.featurizer, config),
                  std::invalid_argument);
}

TEST_CASE("label mode controls per-judgment expansion") {
  std::map<std::string, features::FeatureVector> table{{"p#a", {0.8, -0.2}},
                                                       {"p#b", {-0.3, 0.6}}};
  features::EmbeddingTableFeaturizer featurizer(std::move(table));
  std::vector<PreferencePair> pairs{label_pair("p", {2, 2, -1})};
  auto feats = features::featurize_pairs(featurizer, pairs);

  Rng rng(12);
  auto head = model::init_head(HeadKind::bradley_terry, 2, 4, rng);
  const double ra = model::forward_scalar(head, feats[0].a);
  const double rb = model::forward_scalar(head, feats[0].b);

  TrainConfig config;
  config.training_label_mode = trainer::LabelMode::aggregated;
  CHECK(trainer::dataset_loss(head, HeadKind::bradley_terry, pairs, feats, config) ==
        doctest::Approx(model::bt_loss(ra, rb)).epsilon(1e-13));

  config.training_label_mode = trainer::LabelMode::all;
  const double want = (2.0 * model::bt_loss(ra, rb) + model::bt_loss(rb, ra)) / 3.0;
  CHECK(trainer::dataset_loss(head, HeadKind::bradley_terry, pairs, feats, config) ==
        doctest::Approx(want).epsilon(1e-13));
}

TEST_CASE("tie handling: drop excludes tie pairs, half trains them to a coin flip") {
  std::map<std::string, features::FeatureVector> table{{"t#a", {0.8, -0.2}},
                                                       {"t#b", {-0.3, 0.6}}};
  features::EmbeddingTableFeaturizer featurizer(std::move(table));
  std::vector<PreferencePair> ties{label_pair("t", {0, 0})};
  auto feats = features::featurize_pairs(featurizer, ties);

  Rng rng(12);
  auto head = model::init_head(HeadKind::bradley_terry, 2, 4, rng);
  TrainConfig config;
  config.bt_tie_mode = trainer::BtTieMode::drop;
  CHECK_THROWS_AS(trainer::dataset_loss(head, HeadKind::bradley_terry, ties, feats, config),
                  DataError);

  config.bt_tie_mode = trainer::BtTieMode::half;
  CHECK(trainer::dataset_loss(head, HeadKind::bradley_terry, ties, feats, config) ==
        doctest::Approx(model::bt_tie_sample_loss(head, feats[0].a, feats[0].b, nullptr))
            .epsilon(1e-13));
}

TEST_CASE("score-based heads refuse pairs without raw scores") {
  auto& w = world();
  std::map<std::string, features::FeatureVector> table{{"p#a", {0.8}}, {"p#b", {-0.3}}};
  features::EmbeddingTableFeaturizer featurizer(std::move(table));
  std::vector<PreferencePair> pairs{label_pair("p", {2})};
  auto config = w.fast_config();
  CHECK_THROWS_AS(trainer::train(HeadKind::mse_regression, pairs, pairs, featurizer, config),
                  DataError);
  CHECK_THROWS_AS(trainer::train(HeadKind::classification, pairs, pairs, featurizer, config),
                  DataError);
}

TEST_CASE("load_train_config parses keys, comments and the tanh alias") {
  const auto dir = fs::temp_directory_path() / "divpref-config-test";
  fs::create_directories(dir);
  const auto path = dir / "train.cfg";
  {
    std::ofstream out(path);
    out << "# optimizer\n"
        << "learning_rate = 0.01\n"
        << "\n"
        << "batch_size=32\n"
        << "cdf_kind = tanh\n"
        << "eta = 0.75\n"
        << "training_label_mode = all\n"
        << "select_metric = diverging_auroc\n"
        << "seed = 12345\n";
  }
  auto config = trainer::load_train_config(path);
  CHECK(config.learning_rate == 0.01);
  CHECK(config.batch_size == 32);
  CHECK(config.cdf_kind == model::CdfKind::tanh_approx);
  CHECK(config.eta == 0.75);
  CHECK(config.training_label_mode == trainer::LabelMode::all);
  CHECK(config.select_metric == trainer::SelectMetric::diverging_auroc);
  CHECK(config.seed == 12345);
  // Untouched keys keep their defaults.
  CHECK(config.max_epochs == 10);
  CHECK(config.smoothing_eps == 0.05);

  {
    std::ofstream out(path);
    out << "learning_rate 0.01\n";
  }
  CHECK_THROWS_AS(trainer::load_train_config(path), std::invalid_argument);
  {
    std::ofstream out(path);
    out << "warp_factor = 9\n";
  }
  CHECK_THROWS_AS(trainer::load_train_config(path), std::invalid_argument);
  CHECK_THROWS_AS(trainer::load_train_config(dir / "absent.cfg"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("apply_config_entry validates values") {
  TrainConfig config;
  trainer::apply_config_entry(config, "meanvar_loss", "nll");
  CHECK(config.meanvar_loss == trainer::MeanvarLoss::nll);
  trainer::apply_config_entry(config, "bt_tie_mode", "half");
  CHECK(config.bt_tie_mode == trainer::BtTieMode::half);
  trainer::apply_config_entry(config, "selection_lambda", "2.5");
  CHECK(config.selection_lambda == 2.5);

  CHECK_THROWS_AS(trainer::apply_config_entry(config, "eta", "1.5"), std::invalid_argument);
  CHECK_THROWS_AS(trainer::apply_config_entry(config, "learning_rate", "-1"),
                  std::invalid_argument);
  CHECK_THROWS_AS(trainer::apply_config_entry(config, "learning_rate", "fast"),
                  std::invalid_argument);
  CHECK_THROWS_AS(trainer::apply_config_entry(config, "batch_size", "0"),
                  std::invalid_argument);
  CHECK_THROWS_AS(trainer::apply_config_entry(config, "cdf_kind", "cauchy"),
                  std::invalid_argument);
  CHECK_THROWS_AS(trainer::apply_config_entry(config, "nonsense", "1"), std::invalid_argument);
}

TEST_CASE("train_config_hash is stable and sensitive") {
  TrainConfig a;
  TrainConfig b;
  const auto ha = trainer::train_config_hash(a);
  CHECK(ha.size() == 16);
  CHECK(ha.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(ha == trainer::train_config_hash(b));

  b.learning_rate = 2e-3;
  CHECK(trainer::train_config_hash(b) != ha);
  b = a;
  b.seed = 1;
  CHECK(trainer::train_config_hash(b) != ha);
  b = a;
  b.cdf_kind = model::CdfKind::exact_normal;
  CHECK(trainer::train_config_hash(b) != ha);
  b = a;
  b.bt_tie_mode = trainer::BtTieMode::half;
  CHECK(trainer::train_config_hash(b) != ha);
}

TEST_CASE("tune_lambda prefers the smallest tied lambda and checks the dev mix") {
  auto& w = world();
  // A scalar head ignores lambda entirely, so every grid point ties.
  Rng rng(4);
  auto head = model::init_head(HeadKind::bradley_terry, 16, 4, rng);
  const double grid[] = {2.0, 0.5, 1.0};
  CHECK(trainer::tune_lambda(head, w.dev, w.dev_feats, grid) == 0.5);

  // All-diverging or no-diverging dev sets cannot rank lambdas.
  std::vector<PreferencePair> uniform{label_pair("p0", {2, 1}), label_pair("p1", {1, 1})};
  std::map<std::string, features::FeatureVector> table{
      {"p0#a", {0.1}}, {"p0#b", {0.2}}, {"p1#a", {0.3}}, {"p1#b", {0.4}}};
  features::EmbeddingTableFeaturizer f(std::move(table));
  auto feats = features::featurize_pairs(f, uniform);
  Rng rng1(4);
  auto head1 = model::init_head(HeadKind::bradley_terry, 1, 4, rng1);
  CHECK_THROWS_AS(trainer::tune_lambda(head1, uniform, feats, grid), DataError);

  CHECK_THROWS_AS(trainer::tune_lambda(head, w.dev, w.dev_feats, std::span<const double>{}),
                  std::invalid_argument);
}

TEST_CASE("tune_eta returns a trained candidate from the grid") {
  auto& w = world();
  auto config = w.fast_config();
  config.max_epochs = 1;
  const double etas[] = {0.0, 1.0};
  auto result = trainer::tune_eta(etas, w.train, w.dev, w.featurizer, config);
  CHECK((result.eta == 0.0 || result.eta == 1.0));
  bool lambda_on_grid = false;
  for (double l : trainer::kDefaultLambdaGrid) lambda_on_grid |= result.lambda == l;
  CHECK(lambda_on_grid);
  CHECK(result.dev_auroc >= 0.0);
  CHECK(result.dev_auroc <= 1.0);
  CHECK(result.trained.head.kind == HeadKind::mean_variance);
  CHECK(result.trained.head.o == 2);

  // The winning candidate's recorded AUROC is reproducible.
  CHECK(evals::diverging_id_auroc(result.trained.head, w.dev, w.dev_feats, result.lambda) ==
        doctest::Approx(result.dev_auroc).epsilon(1e-12));
}
