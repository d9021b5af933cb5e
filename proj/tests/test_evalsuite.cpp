#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "divpref/errors.hpp"
#include "divpref/evalsuite.hpp"
#include "divpref/features.hpp"
#include "divpref/model.hpp"
#include "divpref/prefdata.hpp"
#include "divpref/rng.hpp"

using namespace divpref;
using evals::DivisivenessMode;
using features::PairFeatures;
using model::HeadKind;
using model::HeadParameters;

namespace {

HeadParameters tiny_head(HeadKind kind, double w1, double b1, std::vector<double> w2,
                         std::vector<double> b2) {
  HeadParameters p;
  p.kind = kind;
  p.d = 1;
  p.h = 1;
  p.o = model::output_width(kind);
  p.w1 = {w1};
  p.b1 = {b1};
  p.w2 = std::move(w2);
  p.b2 = std::move(b2);
  return p;
}

// score(x) = tanh(x): monotone, easy to reason about.
HeadParameters tanh_scorer(HeadKind kind = HeadKind::bradley_terry) {
  return tiny_head(kind, 1.0, 0.0, {1.0}, {0.0});
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

PairFeatures fv(double a, double b) {
  PairFeatures f;
  f.a = {a};
  f.b = {b};
  return f;
}

// The five-category fixture: one pair per agreement class plus a substantial
// diverging one, with single-feature scores tanh(x).
struct GapFixture {
  std::vector<PreferencePair> pairs;
  std::vector<PairFeatures> feats;
  GapFixture() {
    pairs = {
        label_pair("hap", {2, 1}),        // high_agreement_pref, aggregate +1
        label_pair("tie", {0, 0}),        // high_agreement_tie, no gap
        label_pair("sub", {2, -2}),       // diverging substantial, aggregate 0
        label_pair("div", {2, -1, 1}),    // diverging, aggregate +1
        label_pair("oth", {1, -1}),       // other, aggregate 0
    };
    feats = {fv(0.8, -0.8), fv(0.3, 0.3), fv(0.6, -0.6), fv(-0.5, 0.5), fv(0.1, 0.1)};
  }
};

}  // namespace

TEST_CASE("response_score per head kind") {
  std::vector<double> x{0.4};
  CHECK(evals::response_score(tanh_scorer(), x) ==
        doctest::Approx(std::tanh(0.4)).epsilon(1e-15));
  CHECK(evals::response_score(tanh_scorer(HeadKind::mse_regression), x) ==
        doctest::Approx(std::tanh(0.4)).epsilon(1e-15));

  auto mv = tiny_head(HeadKind::mean_variance, 1.0, 0.0, {1.5, -3.0}, {0.2, -0.5});
  CHECK(evals::response_score(mv, x) ==
        doctest::Approx(1.5 * std::tanh(0.4) + 0.2).epsilon(1e-15));

  // Uniform logits give expected score 3 regardless of input.
  auto cls = tiny_head(HeadKind::classification, 1.0, 0.0, {0.0, 0.0, 0.0, 0.0, 0.0},
                       {0.0, 0.0, 0.0, 0.0, 0.0});
  CHECK(evals::response_score(cls, x) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("preference_accuracy counts per-judgment agreement") {
  auto head = tanh_scorer();
  // Pair 1: A scores higher; judgments +1 (right), -2 (wrong), 0 (skipped).
  // Pair 2: exact score tie; the +2 judgment earns half credit.
  std::vector<PreferencePair> pairs{label_pair("p1", {1, -2, 0}), label_pair("p2", {2})};
  std::vector<PairFeatures> feats{fv(0.5, -0.5), fv(0.3, 0.3)};
  CHECK(evals::preference_accuracy(head, pairs, feats) == 0.5);

  std::vector<PreferencePair> all_ties{label_pair("p", {0, 0})};
  std::vector<PairFeatures> tf{fv(0.5, -0.5)};
  CHECK_THROWS_AS(evals::preference_accuracy(head, all_ties, tf), DataError);

  CHECK_THROWS_AS(evals::preference_accuracy(head, pairs, tf), std::invalid_argument);
}

TEST_CASE("response_divisiveness weights the extreme scores") {
  model::LikertDistribution dist;
  dist.probs = {0.3, 0.1, 0.1, 0.1, 0.4};
  CHECK(evals::response_divisiveness(dist, DivisivenessMode::product) ==
        doctest::Approx(0.12).epsilon(1e-15));
  CHECK(evals::response_divisiveness(dist, DivisivenessMode::sum) ==
        doctest::Approx(0.7).epsilon(1e-15));
  model::LikertDistribution mild;
  mild.probs = {0.0, 0.3, 0.4, 0.3, 0.0};
  CHECK(evals::response_divisiveness(mild, DivisivenessMode::product) == 0.0);
}

TEST_CASE("divergence_score per head kind") {
  auto feats = fv(0.9, -0.2);

  auto bt = tanh_scorer();
  const double expected_bt = -std::fabs(std::tanh(0.9) - std::tanh(-0.2));
  CHECK(evals::divergence_score(bt, feats, 0.0) ==
        doctest::Approx(expected_bt).epsilon(1e-14));
  // Scalar heads ignore lambda.
  CHECK(evals::divergence_score(bt, feats, 3.0) == evals::divergence_score(bt, feats, 0.0));

  auto mv = tiny_head(HeadKind::mean_variance, 1.0, 0.0, {1.5, -3.0}, {0.2, -0.5});
  const auto da = model::forward_meanvar(mv, feats.a);
  const auto db = model::forward_meanvar(mv, feats.b);
  const double lambda = 0.75;
  CHECK(evals::divergence_score(mv, feats, lambda) ==
        doctest::Approx(lambda * (da.sigma + db.sigma) - std::fabs(da.mu - db.mu))
            .epsilon(1e-14));

  // Shifting the mean output bias moves both responses equally: the score
  // only sees differences, so it cannot change.
  auto shifted = mv;
  shifted.b2[0] += 11.0;
  CHECK(evals::divergence_score(shifted, feats, lambda) ==
        doctest::Approx(evals::divergence_score(mv, feats, lambda)).epsilon(1e-12));

  auto cls = tiny_head(HeadKind::classification, 1.0, 0.0, {1.0, 0.0, 0.0, 0.0, 1.0},
                       {0.0, 0.0, 0.0, 0.0, 0.0});
  const auto pa = model::forward_classification(cls, feats.a);
  const auto pb = model::forward_classification(cls, feats.b);
  CHECK(evals::divergence_score(cls, feats, 0.0, DivisivenessMode::sum) ==
        doctest::Approx(0.5 * (evals::response_divisiveness(pa, DivisivenessMode::sum) +
                               evals::response_divisiveness(pb, DivisivenessMode::sum)))
            .epsilon(1e-14));

  CHECK_THROWS_AS(evals::divergence_score(mv, feats, -0.5), std::invalid_argument);
}

TEST_CASE("auroc fixtures") {
  const std::vector<double> scores{0.9, 0.8, 0.3};
  const std::vector<int> labels{1, 0, 1};
  CHECK(evals::auroc(scores, labels) == 0.5);

  const std::vector<double> separa{0.1, 0.2, 0.8, 0.9};
  const std::vector<int> ordered{0, 0, 1, 1};
  CHECK(evals::auroc(separa, ordered) == 1.0);
  const std::vector<int> inverted{1, 1, 0, 0};
  CHECK(evals::auroc(separa, inverted) == 0.0);

  // Tied scores resolve through midranks: exact 7/8.
  const std::vector<double> tied{2.0, 1.0, 1.0, 0.0};
  const std::vector<int> tlabels{1, 1, 0, 0};
  CHECK(evals::auroc(tied, tlabels) == 0.875);

  // All scores equal: every comparison is half credit.
  const std::vector<double> flat{0.4, 0.4, 0.4, 0.4};
  CHECK(evals::auroc(flat, tlabels) == 0.5);
}

TEST_CASE("auroc complement symmetry") {
  const std::vector<double> scores{0.1, 0.7, 0.4, 0.9, 0.3};
  const std::vector<int> labels{0, 1, 1, 0, 0};
  std::vector<int> flipped;
  for (int l : labels) flipped.push_back(1 - l);
  CHECK(evals::auroc(scores, labels) + evals::auroc(scores, flipped) ==
        doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> negated;
  for (double s : scores) negated.push_back(-s);
  CHECK(evals::auroc(negated, labels) ==
        doctest::Approx(1.0 - evals::auroc(scores, labels)).epsilon(1e-12));
}

TEST_CASE("auroc input validation") {
  const std::vector<double> scores{0.1, 0.2};
  CHECK_THROWS_AS(evals::auroc(scores, std::vector<int>{1, 1}), DataError);
  CHECK_THROWS_AS(evals::auroc(scores, std::vector<int>{0, 0}), DataError);
  CHECK_THROWS_AS(evals::auroc(scores, std::vector<int>{1}), std::invalid_argument);
  CHECK_THROWS_AS(evals::auroc(scores, std::vector<int>{1, 2}), std::invalid_argument);
  const std::vector<double> bad{0.1, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(evals::auroc(bad, std::vector<int>{1, 0}), NumericError);
}

TEST_CASE("diverging_id_auroc is invariant to swapping response sides") {
  GapFixture fx;
  auto mv = tiny_head(HeadKind::mean_variance, 1.0, 0.0, {1.5, -3.0}, {0.2, -0.5});
  const double base = evals::diverging_id_auroc(mv, fx.pairs, fx.feats, 1.0);

  auto swapped_pairs = fx.pairs;
  auto swapped_feats = fx.feats;
  for (auto& p : swapped_pairs) {
    std::swap(p.response_a, p.response_b);
    for (auto& j : p.judgments) j.label.value = -j.label.value;
  }
  for (auto& f : swapped_feats) std::swap(f.a, f.b);
  CHECK(evals::diverging_id_auroc(mv, swapped_pairs, swapped_feats, 1.0) ==
        doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("reward_gap_report tallies categories and skips aggregate ties") {
  GapFixture fx;
  auto head = tanh_scorer();
  auto report = evals::reward_gap_report(head, fx.pairs, fx.feats);

  REQUIRE(report.size() == 6);
  for (const char* key : {"all", "diverging", "diverging_substantial", "high_agreement_pref",
                          "high_agreement_tie", "other"}) {
    CHECK(report.count(key) == 1);
  }

  // hap: chosen side A, margin 2*tanh(0.8). div: aggregate +1 but the model
  // scores B higher, so its win probability lands below one half.
  const double gap_hap = model::cdf(2.0 * std::tanh(0.8), model::CdfKind::logistic);
  const double gap_div = model::cdf(-2.0 * std::tanh(0.5), model::CdfKind::logistic);
  CHECK(gap_div < 0.5);

  CHECK(report["all"].pair_count == 5);
  CHECK(report["all"].gap_count == 2);
  CHECK(report["all"].mean_gap == doctest::Approx(0.5 * (gap_hap + gap_div)).epsilon(1e-13));

  CHECK(report["high_agreement_pref"].pair_count == 1);
  CHECK(report["high_agreement_pref"].gap_count == 1);
  CHECK(report["high_agreement_pref"].mean_gap == doctest::Approx(gap_hap).epsilon(1e-13));

  CHECK(report["diverging"].pair_count == 2);
  CHECK(report["diverging"].gap_count == 1);
  CHECK(report["diverging"].mean_gap == doctest::Approx(gap_div).epsilon(1e-13));

  // The balanced +2/-2 pair has no majority choice: counted, not averaged.
  CHECK(report["diverging_substantial"].pair_count == 1);
  CHECK(report["diverging_substantial"].gap_count == 0);
  CHECK(report["diverging_substantial"].mean_gap == 0.0);

  CHECK(report["high_agreement_tie"].pair_count == 1);
  CHECK(report["high_agreement_tie"].gap_count == 0);
  CHECK(report["other"].pair_count == 1);
  CHECK(report["other"].gap_count == 0);
}

TEST_CASE("reward_gap_report uses absolute score gaps for non-bt heads") {
  GapFixture fx;
  auto mv = tiny_head(HeadKind::mean_variance, 1.0, 0.0, {1.5, -3.0}, {0.2, -0.5});
  auto report = evals::reward_gap_report(mv, fx.pairs, fx.feats);
  // hap pair: |mu(0.8) - mu(-0.8)| = 3*tanh(0.8).
  const double gap_hap = 3.0 * std::tanh(0.8);
  CHECK(report["high_agreement_pref"].mean_gap == doctest::Approx(gap_hap).epsilon(1e-12));
  // Direction no longer matters; the div pair gap is also positive.
  CHECK(report["diverging"].mean_gap == doctest::Approx(3.0 * std::tanh(0.5)).epsilon(1e-12));
}

TEST_CASE("histogram_export for bradley_terry bins win probabilities") {
  auto head = tanh_scorer();
  std::vector<PreferencePair> pairs{label_pair("p1", {1}), label_pair("p2", {1})};
  std::vector<PairFeatures> feats{fv(0.8, -0.8), fv(0.3, 0.3)};
  auto bins = evals::histogram_export(head, pairs, feats, 0.05);
  REQUIRE(bins.size() == 10);
  CHECK(bins[0].lower == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(bins[9].lower == doctest::Approx(0.95).epsilon(1e-12));

  double sum = 0.0;
  for (const auto& b : bins) sum += b.percent;
  CHECK(sum == doctest::Approx(100.0).epsilon(1e-12));

  // The equal-scores pair sits at probability exactly one half: first bin.
  CHECK(bins[0].percent == doctest::Approx(50.0).epsilon(1e-12));
  // sigma(2*tanh(0.8)) ~ 0.79: sixth bin [0.75, 0.80).
  CHECK(bins[5].percent == doctest::Approx(50.0).epsilon(1e-12));

  CHECK_THROWS_AS(evals::histogram_export(head, pairs, feats, 0.15), std::invalid_argument);
  CHECK_THROWS_AS(evals::histogram_export(head, pairs, feats, 0.0), std::invalid_argument);
  std::vector<PreferencePair> none;
  std::vector<PairFeatures> nofeats;
  CHECK_THROWS_AS(evals::histogram_export(head, none, nofeats, 0.05), DataError);
}

TEST_CASE("histogram_export for other heads bins absolute gaps from zero") {
  auto mse = tanh_scorer(HeadKind::mse_regression);
  std::vector<PreferencePair> pairs{label_pair("p1", {1}), label_pair("p2", {1})};
  std::vector<PairFeatures> feats{fv(0.3, 0.3), fv(2.0, -2.0)};
  auto bins = evals::histogram_export(mse, pairs, feats, 0.25);
  // Gaps are 0 and 2*tanh(2) ~ 1.928: bins [0, 0.25) .. [1.75, 2).
  REQUIRE(bins.size() == 8);
  CHECK(bins[0].lower == 0.0);
  CHECK(bins[0].percent == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(bins[7].percent == doctest::Approx(50.0).epsilon(1e-12));

  // A constant scorer collapses everything into a single zero bin.
  auto flat = tiny_head(HeadKind::mse_regression, 0.0, 0.0, {0.0}, {2.5});
  auto one = evals::histogram_export(flat, pairs, feats, 0.25);
  REQUIRE(one.size() == 1);
  CHECK(one[0].lower == 0.0);
  CHECK(one[0].percent == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("prompt_divisiveness averages response divisiveness") {
  model::LikertDistribution hot;
  hot.probs = {0.5, 0.0, 0.0, 0.0, 0.5};
  model::LikertDistribution cold;
  cold.probs = {0.0, 0.5, 0.0, 0.5, 0.0};
  std::vector<model::LikertDistribution> responses{hot, cold};
  CHECK(evals::prompt_divisiveness(responses, DivisivenessMode::product) ==
        doctest::Approx(0.125).epsilon(1e-15));
  CHECK(evals::prompt_divisiveness(responses, DivisivenessMode::sum) ==
        doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(evals::prompt_divisiveness({}, DivisivenessMode::product),
                  std::invalid_argument);
}

TEST_CASE("rank_prompts orders by mean divisiveness and flags the top slice") {
  // Logit boost on both extreme classes grows with the feature, so larger
  // features mean more divisive responses.
  auto cls = tiny_head(HeadKind::classification, 1.0, 0.0, {1.0, 0.0, 0.0, 0.0, 1.0},
                       {0.0, 0.0, 0.0, 0.0, 0.0});
  std::map<std::string, features::FeatureVector> table{
      {"pa#s1", {2.0}}, {"pa#s2", {2.0}}, {"pb#s1", {0.0}}, {"pc#s1", {-2.0}}};
  features::EmbeddingTableFeaturizer featurizer(std::move(table));

  std::vector<BenchmarkPrompt> bench(3);
  bench[0].prompt_id = "pc";
  bench[0].prompt = "q3";
  bench[0].responses = {{"s1", "t"}};
  bench[1].prompt_id = "pa";
  bench[1].prompt = "q1";
  bench[1].responses = {{"s1", "t"}, {"s2", "t"}};
  bench[2].prompt_id = "pb";
  bench[2].prompt = "q2";
  bench[2].responses = {{"s1", "t"}};

  auto ranking = evals::rank_prompts(bench, cls, featurizer, 1.0 / 3.0);
  REQUIRE(ranking.entries.size() == 3);
  CHECK(ranking.entries[0].prompt_id == "pa");
  CHECK(ranking.entries[1].prompt_id == "pb");
  CHECK(ranking.entries[2].prompt_id == "pc");
  CHECK(ranking.entries[0].score > ranking.entries[1].score);
  CHECK(ranking.entries[1].score > ranking.entries[2].score);
  CHECK(ranking.entries[0].flagged);
  CHECK_FALSE(ranking.entries[1].flagged);
  CHECK_FALSE(ranking.entries[2].flagged);
  CHECK(ranking.top_fraction == doctest::Approx(1.0 / 3.0));

  REQUIRE(ranking.entries[0].response_scores.size() == 2);
  CHECK(ranking.entries[0].response_scores[0].first == "s1");
  // Equal features on both pa responses: per-response scores match the mean.
  CHECK(ranking.entries[0].response_scores[0].second ==
        doctest::Approx(ranking.entries[0].score).epsilon(1e-12));
}

TEST_CASE("rank_prompts breaks score ties by prompt id") {
  // Constant head: all scores equal, ordering falls back to ids.
  auto cls = tiny_head(HeadKind::classification, 0.0, 0.0, {0.0, 0.0, 0.0, 0.0, 0.0},
                       {0.0, 0.0, 0.0, 0.0, 0.0});
  std::map<std::string, features::FeatureVector> table{
      {"zeta#s1", {0.0}}, {"alpha#s1", {0.0}}, {"mid#s1", {0.0}}};
  features::EmbeddingTableFeaturizer featurizer(std::move(table));
  std::vector<BenchmarkPrompt> bench(3);
  bench[0].prompt_id = "zeta";
  bench[1].prompt_id = "alpha";
  bench[2].prompt_id = "mid";
  for (auto& b : bench) {
    b.prompt = "same";
    b.responses = {{"s1", "same text"}};
  }
  auto ranking = evals::rank_prompts(bench, cls, featurizer, 0.5);
  CHECK(ranking.entries[0].prompt_id == "alpha");
  CHECK(ranking.entries[1].prompt_id == "mid");
  CHECK(ranking.entries[2].prompt_id == "zeta");
  // round(0.5 * 3) = 2 prompts flagged.
  CHECK(ranking.entries[0].flagged);
  CHECK(ranking.entries[1].flagged);
  CHECK_FALSE(ranking.entries[2].flagged);
}

TEST_CASE("rank_prompts validates its inputs") {
  auto cls = tiny_head(HeadKind::classification, 1.0, 0.0, {1.0, 0.0, 0.0, 0.0, 1.0},
                       {0.0, 0.0, 0.0, 0.0, 0.0});
  features::NgramFeaturizer featurizer(64);
  std::vector<BenchmarkPrompt> bench(1);
  bench[0].prompt_id = "p";
  bench[0].prompt = "q";
  bench[0].responses = {{"s1", "t"}};

  CHECK_THROWS_AS(evals::rank_prompts({}, cls, featurizer, 0.1), DataError);
  CHECK_THROWS_AS(evals::rank_prompts(bench, cls, featurizer, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(evals::rank_prompts(bench, tanh_scorer(), featurizer, 0.1),
                  std::invalid_argument);
  bench[0].responses.clear();
  CHECK_THROWS_AS(evals::rank_prompts(bench, cls, featurizer, 0.1), DataError);
}

TEST_CASE("evaluate assembles the full report") {
  GapFixture fx;
  auto head = tanh_scorer();
  auto report = evals::evaluate(head, fx.pairs, fx.feats, 0.7);
  CHECK(report.pair_count == 5);
  CHECK(report.lambda_used == 0.7);
  CHECK(report.preference_accuracy ==
        doctest::Approx(evals::preference_accuracy(head, fx.pairs, fx.feats)).epsilon(1e-13));
  REQUIRE(report.diverging_auroc.has_value());
  CHECK(*report.diverging_auroc ==
        doctest::Approx(evals::diverging_id_auroc(head, fx.pairs, fx.feats, 0.7))
            .epsilon(1e-13));
  CHECK(report.category_gaps.size() == 6);
  double sum = 0.0;
  for (const auto& bin : report.histogram) sum += bin.percent;
  CHECK(sum == doctest::Approx(100.0).epsilon(1e-12));

  // Without any diverging pair the AUROC has no meaning and stays empty.
  std::vector<PreferencePair> uniform{fx.pairs[0], fx.pairs[1]};
  std::vector<PairFeatures> ufeats{fx.feats[0], fx.feats[1]};
  auto flat = evals::evaluate(head, uniform, ufeats, 0.7);
  CHECK_FALSE(flat.diverging_auroc.has_value());

  std::vector<PreferencePair> none;
  std::vector<PairFeatures> nofeats;
  CHECK_THROWS_AS(evals::evaluate(head, none, nofeats, 0.7), DataError);
}
