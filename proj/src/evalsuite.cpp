#include "divpref/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "divpref/errors.hpp"
#include "divpref/prefdata.hpp"

namespace divpref::evals {

namespace {

const char* category_key(AgreementKind kind) {
  switch (kind) {
    case AgreementKind::high_agreement_pref: return "high_agreement_pref";
    case AgreementKind::high_agreement_tie: return "high_agreement_tie";
    case AgreementKind::diverging: return "diverging";
    case AgreementKind::other: return "other";
  }
  throw std::invalid_argument("unknown agreement kind");
}

void check_sizes(std::span<const PreferencePair> pairs, std::span<const PairFeatures> feats,
                 const char* who) {
  if (pairs.size() != feats.size()) {
    throw std::invalid_argument(std::string(who) + ": pairs and features differ in length");
  }
}

}  // namespace

double response_score(const HeadParameters& head, std::span<const double> x) {
  switch (head.kind) {
    case model::HeadKind::bradley_terry:
    case model::HeadKind::mse_regression:
      return model::forward_scalar(head, x);
    case model::HeadKind::mean_variance:
      return model::forward_meanvar(head, x).mu;
    case model::HeadKind::classification:
      return model::expected_likert(model::forward_classification(head, x));
  }
  throw std::invalid_argument("unknown head kind");
}

double preference_accuracy(const HeadParameters& head, std::span<const PreferencePair> pairs,
                           std::span<const PairFeatures> feats) {
  check_sizes(pairs, feats, "preference_accuracy");
  double correct = 0.0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double score_a = response_score(head, feats[i].a);
    const double score_b = response_score(head, feats[i].b);
    for (const auto& j : pairs[i].judgments) {
      if (j.label.value == 0) continue;
      ++total;
      if (score_a == score_b) {
        correct += 0.5;
      } else if ((score_a > score_b) == (j.label.value > 0)) {
        correct += 1.0;
      }
    }
  }
  if (total == 0) throw DataError("preference accuracy needs at least one non-tie judgment");
  return correct / static_cast<double>(total);
}

double response_divisiveness(const model::LikertDistribution& dist, DivisivenessMode mode) {
  const double p1 = dist.probs[0];
  const double p5 = dist.probs[4];
  return mode == DivisivenessMode::product ? p1 * p5 : p1 + p5;
}

double divergence_score(const HeadParameters& head, const PairFeatures& feats, double lambda,
                        DivisivenessMode mode) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
  switch (head.kind) {
    case model::HeadKind::bradley_terry:
    case model::HeadKind::mse_regression: {
      const double ra = model::forward_scalar(head, feats.a);
      const double rb = model::forward_scalar(head, feats.b);
      return -std::fabs(ra - rb);
    }
    case model::HeadKind::mean_variance: {
      const auto a = model::forward_meanvar(head, feats.a);
      const auto b = model::forward_meanvar(head, feats.b);
      return lambda * (a.sigma + b.sigma) - std::fabs(a.mu - b.mu);
    }
    case model::HeadKind::classification: {
      const auto a = model::forward_classification(head, feats.a);
      const auto b = model::forward_classification(head, feats.b);
      return 0.5 * (response_divisiveness(a, mode) + response_divisiveness(b, mode));
    }
  }
  throw std::invalid_argument("unknown head kind");
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("auroc: scores and labels differ in length");
  }
  std::size_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw NumericError("auroc: non-finite score");
    if (labels[i] != 0 && labels[i] != 1) {
      throw std::invalid_argument("auroc: labels must be 0 or 1");
    }
    positives += labels[i];
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw DataError("auroc needs both a positive and a negative label");
  }

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks: tied scores share the average of their 1-based rank range, so
  // each tied (positive, negative) pair contributes exactly 0.5.
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = static_cast<double>(i + j + 1) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) positive_rank_sum += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double diverging_id_auroc(const HeadParameters& head, std::span<const PreferencePair> pairs,
                          std::span<const PairFeatures> feats, double lambda,
                          DivisivenessMode mode) {
  check_sizes(pairs, feats, "diverging_id_auroc");
  std::vector<double> scores(pairs.size());
  std::vector<int> labels(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    scores[i] = divergence_score(head, feats[i], lambda, mode);
    const auto category = prefdata::classify_agreement(pairs[i].judgments);
    labels[i] = category.kind == AgreementKind::diverging ? 1 : 0;
  }
  return auroc(scores, labels);
}

CategoryGaps reward_gap_report(const HeadParameters& head, std::span<const PreferencePair> pairs,
                               std::span<const PairFeatures> feats) {
  check_sizes(pairs, feats, "reward_gap_report");
  CategoryGaps report;
  for (const char* key : {"all", "diverging", "diverging_substantial", "high_agreement_pref",
                          "high_agreement_tie", "other"}) {
    report[key] = GapRow{};
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    const auto category = prefdata::classify_agreement(pair.judgments);
    const int aggregate = prefdata::aggregate_majority(pair.judgments).value;

    double gap = 0.0;
    const bool has_gap = aggregate != 0;
    if (has_gap) {
      if (head.kind == model::HeadKind::bradley_terry) {
        const double ra = model::forward_scalar(head, feats[i].a);
        const double rb = model::forward_scalar(head, feats[i].b);
        const double margin = aggregate > 0 ? ra - rb : rb - ra;
        gap = model::cdf(margin, model::CdfKind::logistic);
      } else {
        gap = std::fabs(response_score(head, feats[i].a) - response_score(head, feats[i].b));
      }
    }

    const auto tally = [&](const std::string& key) {
      auto& row = report[key];
      row.pair_count += 1;
      if (has_gap) {
        row.gap_count += 1;
        row.mean_gap += gap;
      }
    };
    tally("all");
    tally(category_key(category.kind));
    if (category.kind == AgreementKind::diverging && category.substantial) {
      tally("diverging_substantial");
    }
  }
  for (auto& [key, row] : report) {
    if (row.gap_count > 0) row.mean_gap /= static_cast<double>(row.gap_count);
  }
  return report;
}

std::vector<HistogramBin> histogram_export(const HeadParameters& head,
                                           std::span<const PreferencePair> pairs,
                                           std::span<const PairFeatures> feats,
                                           double bin_width) {
  check_sizes(pairs, feats, "histogram_export");
  if (bin_width <= 0.0) throw std::invalid_argument("bin width must be positive");
  if (pairs.empty()) throw DataError("histogram needs at least one pair");

  std::vector<double> values(pairs.size());
  double lowest = 0.0;
  std::size_t bin_count = 0;
  if (head.kind == model::HeadKind::bradley_terry) {
    // Win probability of the head's own choice, always in [0.5, 1].
    const double range = 0.5;
    const auto bins = static_cast<std::size_t>(std::llround(range / bin_width));
    if (bins == 0 || std::fabs(static_cast<double>(bins) * bin_width - range) > 1e-9) {
      throw std::invalid_argument("bin width must evenly divide the [0.5, 1] range");
    }
    lowest = 0.5;
    bin_count = bins;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const double ra = model::forward_scalar(head, feats[i].a);
      const double rb = model::forward_scalar(head, feats[i].b);
      values[i] = model::cdf(std::fabs(ra - rb), model::CdfKind::logistic);
    }
  } else {
    double top = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      values[i] =
          std::fabs(response_score(head, feats[i].a) - response_score(head, feats[i].b));
      top = std::max(top, values[i]);
    }
    lowest = 0.0;
    bin_count = static_cast<std::size_t>(std::floor(top / bin_width)) + 1;
  }

  std::vector<HistogramBin> bins(bin_count);
  for (std::size_t b = 0; b < bin_count; ++b) {
    bins[b].lower = lowest + static_cast<double>(b) * bin_width;
  }
  const double per_pair = 100.0 / static_cast<double>(pairs.size());
  for (const double v : values) {
    auto b = static_cast<std::size_t>((v - lowest) / bin_width);
    b = std::min(b, bin_count - 1);
    bins[b].percent += per_pair;
  }
  return bins;
}

double prompt_divisiveness(std::span<const model::LikertDistribution> responses,
                           DivisivenessMode mode) {
  if (responses.empty()) {
    throw std::invalid_argument("prompt_divisiveness: no response distributions");
  }
  double total = 0.0;
  for (const auto& dist : responses) total += response_divisiveness(dist, mode);
  return total / static_cast<double>(responses.size());
}

DivisivenessRanking rank_prompts(std::span<const BenchmarkPrompt> benchmark,
                                 const HeadParameters& head, const Featurizer& featurizer,
                                 double top_fraction, DivisivenessMode mode) {
  if (benchmark.empty()) throw DataError("benchmark is empty");
  if (head.kind != model::HeadKind::classification) {
    throw std::invalid_argument("prompt ranking needs a classification head");
  }
  if (top_fraction < 0.0 || top_fraction > 1.0) {
    throw std::invalid_argument("top_fraction must lie in [0, 1]");
  }

  std::vector<features::FeatureQuery> queries;
  for (const auto& prompt : benchmark) {
    if (prompt.responses.empty()) {
      throw DataError("benchmark prompt '" + prompt.prompt_id + "' has no responses");
    }
    for (const auto& response : prompt.responses) {
      features::FeatureQuery q;
      q.key = prompt.prompt_id + "#" + response.system;
      q.prompt = &prompt.prompt;
      q.response = &response.text;
      queries.push_back(q);
    }
  }
  const auto vectors = featurizer.featurize_batch(queries);

  DivisivenessRanking ranking;
  ranking.top_fraction = top_fraction;
  ranking.mode = mode;
  std::size_t cursor = 0;
  for (const auto& prompt : benchmark) {
    RankedPrompt entry;
    entry.prompt_id = prompt.prompt_id;
    double total = 0.0;
    for (const auto& response : prompt.responses) {
      const auto dist = model::forward_classification(head, vectors[cursor]);
      ++cursor;
      const double score = response_divisiveness(dist, mode);
      entry.response_scores.emplace_back(response.system, score);
      total += score;
    }
    entry.score = total / static_cast<double>(prompt.responses.size());
    ranking.entries.push_back(std::move(entry));
  }

  std::sort(ranking.entries.begin(), ranking.entries.end(),
            [](const RankedPrompt& a, const RankedPrompt& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.prompt_id < b.prompt_id;
            });
  const auto flagged =
      static_cast<std::size_t>(std::llround(top_fraction * static_cast<double>(
                                                ranking.entries.size())));
  for (std::size_t i = 0; i < ranking.entries.size() && i < flagged; ++i) {
    ranking.entries[i].flagged = true;
  }
  return ranking;
}

EvalReport evaluate(const HeadParameters& head, std::span<const PreferencePair> pairs,
                    std::span<const PairFeatures> feats, double lambda, double bin_width,
                    DivisivenessMode mode) {
  check_sizes(pairs, feats, "evaluate");
  if (pairs.empty()) throw DataError("evaluation set is empty");
  EvalReport report;
  report.preference_accuracy = preference_accuracy(head, pairs, feats);
  std::size_t diverging = 0;
  for (const auto& pair : pairs) {
    if (prefdata::classify_agreement(pair.judgments).kind == AgreementKind::diverging) {
      ++diverging;
    }
  }
  if (diverging > 0 && diverging < pairs.size()) {
    report.diverging_auroc = diverging_id_auroc(head, pairs, feats, lambda, mode);
  }
  report.lambda_used = lambda;
  report.category_gaps = reward_gap_report(head, pairs, feats);
  report.histogram = histogram_export(head, pairs, feats, bin_width);
  report.pair_count = pairs.size();
  return report;
}

}  // namespace divpref::evals
