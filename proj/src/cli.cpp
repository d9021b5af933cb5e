#include "divpref/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "divpref/agreement.hpp"
#include "divpref/checkpoint.hpp"
#include "divpref/dataset_io.hpp"
#include "divpref/embed_client.hpp"
#include "divpref/errors.hpp"
#include "divpref/evalsuite.hpp"
#include "divpref/model.hpp"
#include "divpref/prefdata.hpp"
#include "divpref/trainer.hpp"

namespace divpref::cli {

namespace {

using features::FeatureConfig;
using nlohmann::ordered_json;

model::HeadKind parse_kind(const std::string& name) {
  if (name == "bradley_terry") return model::HeadKind::bradley_terry;
  if (name == "mse_regression") return model::HeadKind::mse_regression;
  if (name == "mean_variance") return model::HeadKind::mean_variance;
  if (name == "classification") return model::HeadKind::classification;
  throw std::invalid_argument("unknown --kind '" + name + "'");
}

evals::DivisivenessMode parse_divisiveness(const std::string& name) {
  if (name == "product") return evals::DivisivenessMode::product;
  if (name == "sum") return evals::DivisivenessMode::sum;
  throw std::invalid_argument("unknown --divisiveness '" + name + "'");
}

FeatureConfig parse_features_flag(const std::string& value, std::optional<std::size_t> dim,
                                  double response_weight) {
  FeatureConfig config;
  config.response_weight = response_weight;
  if (value == "ngram") {
    config.kind = FeatureConfig::Kind::ngram;
    config.dim = dim.value_or(16384);
    return config;
  }
  if (value.rfind("file:", 0) == 0) {
    config.kind = FeatureConfig::Kind::file;
    config.location = value.substr(5);
    config.dim = dim.value_or(0);  // 0 = take the file's dimension
    if (config.location.empty()) throw std::invalid_argument("--features file: needs a path");
    return config;
  }
  if (value.rfind("http:", 0) == 0) {
    config.kind = FeatureConfig::Kind::http;
    config.location = value;  // the http: prefix is the URL scheme itself
    config.dim = dim.value_or(0);
    return config;
  }
  throw std::invalid_argument("--features must be ngram, file:<path> or http:<url>");
}

std::unique_ptr<features::Featurizer> build_featurizer(FeatureConfig config) {
  if (config.kind == FeatureConfig::Kind::http) {
    config.location = resolve_embed_endpoint(config.location);
  }
  return features::make_featurizer(config);
}

void check_feature_dim(const features::Featurizer& featurizer,
                       const model::HeadParameters& head) {
  if (featurizer.dim() != 0 && static_cast<int>(featurizer.dim()) != head.d) {
    throw DataError("featurizer produces " + std::to_string(featurizer.dim()) +
                    "-dim vectors but the checkpoint expects " + std::to_string(head.d));
  }
}

void check_computed_dim(std::span<const features::PairFeatures> feats,
                        const model::HeadParameters& head) {
  if (!feats.empty() && static_cast<int>(feats[0].a.size()) != head.d) {
    throw DataError("features are " + std::to_string(feats[0].a.size()) +
                    "-dim but the checkpoint expects " + std::to_string(head.d));
  }
}

std::string json_text(const ordered_json& doc) { return doc.dump(2) + "\n"; }

ordered_json report_json(const evals::EvalReport& report) {
  ordered_json doc;
  doc["pair_count"] = report.pair_count;
  doc["preference_accuracy"] = report.preference_accuracy;
  doc["diverging_auroc"] = report.diverging_auroc.has_value()
                               ? ordered_json(*report.diverging_auroc)
                               : ordered_json(nullptr);
  doc["lambda_used"] = report.lambda_used;
  ordered_json gaps = ordered_json::object();
  for (const auto& [key, row] : report.category_gaps) {
    gaps[key] = ordered_json{{"pair_count", row.pair_count},
                             {"gap_count", row.gap_count},
                             {"mean_gap", row.mean_gap}};
  }
  doc["category_gaps"] = gaps;
  ordered_json hist = ordered_json::array();
  for (const auto& bin : report.histogram) {
    hist.push_back(ordered_json{{"lower", bin.lower}, {"percent", bin.percent}});
  }
  doc["histogram"] = hist;
  return doc;
}

ordered_json ranking_json(const evals::DivisivenessRanking& ranking) {
  ordered_json doc;
  doc["top_fraction"] = ranking.top_fraction;
  doc["mode"] = ranking.mode == evals::DivisivenessMode::product ? "product" : "sum";
  ordered_json prompts = ordered_json::array();
  for (const auto& entry : ranking.entries) {
    ordered_json responses = ordered_json::array();
    for (const auto& [system, score] : entry.response_scores) {
      responses.push_back(ordered_json{{"system", system}, {"score", score}});
    }
    prompts.push_back(ordered_json{{"prompt_id", entry.prompt_id},
                                   {"score", entry.score},
                                   {"flagged", entry.flagged},
                                   {"responses", responses}});
  }
  doc["prompts"] = prompts;
  return doc;
}

prefdata::FieldMap parse_field_map(const std::vector<std::string>& specs) {
  static const std::set<std::string> known = {"id",        "prompt",   "response_a",
                                              "response_b", "source",  "judgments",
                                              "annotator",  "label",   "score_a",
                                              "score_b"};
  prefdata::FieldMap fm;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
      throw std::invalid_argument("--field expects canonical=actual, got '" + spec + "'");
    }
    const std::string canonical = spec.substr(0, eq);
    if (known.find(canonical) == known.end()) {
      throw std::invalid_argument("--field: unknown canonical field '" + canonical + "'");
    }
    fm.names[canonical] = spec.substr(eq + 1);
  }
  return fm;
}

ordered_json stats_json(std::span<const PreferencePair> pairs) {
  std::size_t judgments = 0;
  std::size_t ties = 0;
  std::map<int, std::size_t> label_counts;
  for (int v = -2; v <= 2; ++v) label_counts[v] = 0;
  std::size_t diverging = 0, substantial = 0, ha_pref = 0, ha_tie = 0, other = 0;
  std::size_t aggregate_ties = 0;

  std::vector<std::pair<int, int>> rating_pairs;
  std::vector<agreement::AlphaUnit> alpha_units;
  for (const auto& pair : pairs) {
    judgments += pair.judgments.size();
    for (const auto& j : pair.judgments) {
      label_counts[j.label.value] += 1;
      if (j.label.value == 0) ++ties;
    }
    const auto category = prefdata::classify_agreement(pair.judgments);
    switch (category.kind) {
      case AgreementKind::diverging: ++diverging; break;
      case AgreementKind::high_agreement_pref: ++ha_pref; break;
      case AgreementKind::high_agreement_tie: ++ha_tie; break;
      case AgreementKind::other: ++other; break;
    }
    if (category.substantial) ++substantial;
    if (prefdata::aggregate_majority(pair.judgments).value == 0) ++aggregate_ties;

    // Pooled pairwise ratings for kappa (both orders keep the marginals
    // symmetric) and singleton label sets for alpha.
    const auto& js = pair.judgments;
    for (std::size_t i = 0; i < js.size(); ++i) {
      for (std::size_t k = i + 1; k < js.size(); ++k) {
        rating_pairs.emplace_back(js[i].label.value + 3, js[k].label.value + 3);
        rating_pairs.emplace_back(js[k].label.value + 3, js[i].label.value + 3);
      }
    }
    if (js.size() >= 2) {
      for (const auto& j : js) {
        alpha_units.push_back(
            {pair.id, j.annotator_id, {std::to_string(j.label.value)}});
      }
    }
  }

  ordered_json doc;
  doc["pair_count"] = pairs.size();
  doc["judgment_count"] = judgments;
  ordered_json labels = ordered_json::object();
  for (const auto& [value, count] : label_counts) {
    labels[std::to_string(value)] = count;
  }
  doc["label_counts"] = labels;
  doc["tie_fraction"] =
      judgments == 0 ? 0.0 : static_cast<double>(ties) / static_cast<double>(judgments);
  doc["categories"] = ordered_json{{"diverging", diverging},
                                   {"diverging_substantial", substantial},
                                   {"high_agreement_pref", ha_pref},
                                   {"high_agreement_tie", ha_tie},
                                   {"other", other}};
  doc["aggregate_ties"] = aggregate_ties;

  doc["cohen_kappa_quadratic"] = nullptr;
  if (rating_pairs.size() >= 2) {
    try {
      doc["cohen_kappa_quadratic"] = agreement::cohen_kappa_quadratic(rating_pairs, 5);
    } catch (const NumericError&) {
      // Degenerate marginals; leave the field null.
    }
  }
  doc["krippendorff_alpha"] = nullptr;
  std::set<std::string> alpha_items;
  for (const auto& unit : alpha_units) alpha_items.insert(unit.item_id);
  if (alpha_items.size() >= 2) {
    try {
      doc["krippendorff_alpha"] =
          agreement::krippendorff_alpha(alpha_units, agreement::masi_distance);
    } catch (const NumericError&) {
      // No variation across annotations; leave the field null.
    }
  }
  return doc;
}

}  // namespace

std::string resolve_embed_endpoint(const std::string& flag_value) {
  const char* env = std::getenv("EMBED_ENDPOINT");
  if (env != nullptr && *env != '\0') return env;
  return flag_value;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"distributional preference models over annotator disagreement", "divpref"};
  app.require_subcommand(1);

  // ---- ingest ----
  auto* ingest = app.add_subcommand("ingest", "normalize a raw dataset into canonical records");
  std::string ingest_data, ingest_out, ingest_schema;
  std::vector<std::string> ingest_fields;
  ingest->add_option("--data", ingest_data, "input dataset (jsonl)")->required();
  ingest->add_option("--out", ingest_out, "output dataset path")->required();
  ingest->add_option("--schema", ingest_schema, "record schema")
      ->required()
      ->check(CLI::IsMember({"multipref", "helpsteer2"}));
  ingest->add_option("--field", ingest_fields,
                     "field rename canonical=actual (repeatable)");
  ingest->callback([&] {
    const auto schema = ingest_schema == "multipref" ? prefdata::Schema::multipref
                                                     : prefdata::Schema::helpsteer2;
    const auto pairs =
        prefdata::ingest_dataset(ingest_data, schema, parse_field_map(ingest_fields));
    io::write_dataset(ingest_out, pairs);
    std::cout << "ingested " << pairs.size() << " pairs -> " << ingest_out << "\n";
  });

  // ---- stats ----
  auto* stats = app.add_subcommand("stats", "agreement statistics of a dataset");
  std::string stats_data, stats_out;
  stats->add_option("--data", stats_data, "dataset (jsonl)")->required();
  auto* stats_out_opt = stats->add_option("--out", stats_out, "write the report here");
  stats->callback([&] {
    const auto pairs = io::read_dataset(stats_data);
    if (pairs.empty()) throw DataError("dataset " + stats_data + " is empty");
    const auto doc = stats_json(pairs);
    if (stats_out_opt->count() > 0) {
      io::atomic_write(stats_out, json_text(doc));
      std::cout << "stats for " << pairs.size() << " pairs -> " << stats_out << "\n";
    } else {
      std::cout << json_text(doc);
    }
  });

  // ---- train ----
  auto* train = app.add_subcommand("train", "train a reward head");
  std::string train_kind, train_train, train_dev, train_out, train_config_path;
  std::string train_cdf, train_label_mode, train_features = "ngram";
  uint64_t train_seed = 0;
  double train_eta = 0.0;
  std::size_t train_dim = 0;
  train->add_option("--kind", train_kind, "head kind")
      ->required()
      ->check(CLI::IsMember(
          {"bradley_terry", "mse_regression", "mean_variance", "classification"}));
  train->add_option("--train", train_train, "training dataset (jsonl)")->required();
  train->add_option("--dev", train_dev, "development dataset (jsonl)")->required();
  train->add_option("--out", train_out, "checkpoint path")->required();
  auto* train_seed_opt = train->add_option("--seed", train_seed, "rng seed");
  auto* train_eta_opt =
      train->add_option("--eta", train_eta, "tie-driven reward correlation strength");
  auto* train_cdf_opt = train->add_option("--cdf", train_cdf, "difference cdf")
                            ->check(CLI::IsMember({"exact_normal", "logistic", "tanh"}));
  auto* train_lm_opt = train->add_option("--label-mode", train_label_mode, "label handling")
                           ->check(CLI::IsMember({"aggregated", "all"}));
  train->add_option("--features", train_features, "ngram | file:<path> | http:<url>");
  auto* train_dim_opt = train->add_option("--dim", train_dim, "feature dimension");
  train->add_option("--config", train_config_path, "training config file");
  train->callback([&] {
    trainer::TrainConfig config;
    if (!train_config_path.empty()) config = trainer::load_train_config(train_config_path);
    if (train_seed_opt->count() > 0) config.seed = train_seed;
    if (train_eta_opt->count() > 0) {
      if (train_eta < 0.0 || train_eta > 1.0) {
        throw std::invalid_argument("--eta must lie in [0, 1]");
      }
      config.eta = train_eta;
    }
    if (train_cdf_opt->count() > 0) trainer::apply_config_entry(config, "cdf_kind", train_cdf);
    if (train_lm_opt->count() > 0) {
      trainer::apply_config_entry(config, "training_label_mode", train_label_mode);
    }

    const auto kind = parse_kind(train_kind);
    auto feature_config = parse_features_flag(
        train_features,
        train_dim_opt->count() > 0 ? std::optional<std::size_t>(train_dim) : std::nullopt,
        2.0);
    const auto featurizer = build_featurizer(feature_config);
    const auto train_pairs = io::read_dataset(train_train);
    const auto dev_pairs = io::read_dataset(train_dev);

    auto result = trainer::train(kind, train_pairs, dev_pairs, *featurizer, config);

    model::Checkpoint checkpoint;
    checkpoint.head = std::move(result.head);
    if (feature_config.dim == 0) feature_config.dim = featurizer->dim();
    checkpoint.feature_config = feature_config;
    checkpoint.seed = config.seed;
    checkpoint.train_config_hash = trainer::train_config_hash(config);
    model::save_checkpoint(train_out, checkpoint);

    const auto& best = result.history.records[result.history.best_index];
    std::cout << "trained " << train_kind << " on " << train_pairs.size() << " pairs ("
              << dev_pairs.size() << " dev)\n";
    std::cout << "best dev metric " << best.dev_metric << " at step " << best.step << " ("
              << (result.history.higher_is_better ? "higher" : "lower") << " is better)\n";
    std::cout << "checkpoint -> " << train_out << "\n";
  });

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a test set");
  std::string eval_model, eval_test, eval_dev, eval_out, eval_features, eval_div = "product";
  double eval_lambda = 1.0, eval_bin_width = 0.05;
  std::size_t eval_dim = 0;
  eval->add_option("--model", eval_model, "checkpoint path")->required();
  eval->add_option("--test", eval_test, "test dataset (jsonl)")->required();
  eval->add_option("--out", eval_out, "report path")->required();
  auto* eval_dev_opt =
      eval->add_option("--dev", eval_dev, "tune lambda on this dataset before reporting");
  eval->add_option("--lambda", eval_lambda, "divergence spread weight (when --dev is absent)");
  eval->add_option("--bin-width", eval_bin_width, "histogram bin width");
  eval->add_option("--divisiveness", eval_div, "extreme-score combination")
      ->check(CLI::IsMember({"product", "sum"}));
  auto* eval_feat_opt = eval->add_option("--features", eval_features,
                                         "override the checkpoint's featurizer");
  auto* eval_dim_opt = eval->add_option("--dim", eval_dim, "feature dimension");
  eval->callback([&] {
    const auto checkpoint = model::load_checkpoint(eval_model);
    const auto feature_config =
        eval_feat_opt->count() > 0
            ? parse_features_flag(eval_features,
                                  eval_dim_opt->count() > 0
                                      ? std::optional<std::size_t>(eval_dim)
                                      : std::nullopt,
                                  checkpoint.feature_config.response_weight)
            : checkpoint.feature_config;
    const auto featurizer = build_featurizer(feature_config);
    check_feature_dim(*featurizer, checkpoint.head);

    const auto pairs = io::read_dataset(eval_test);
    if (pairs.empty()) throw DataError("test set " + eval_test + " is empty");
    const auto feats = features::featurize_pairs(*featurizer, pairs);
    check_computed_dim(feats, checkpoint.head);

    const auto mode = parse_divisiveness(eval_div);
    double lambda = eval_lambda;
    if (eval_dev_opt->count() > 0) {
      const auto dev_pairs = io::read_dataset(eval_dev);
      const auto dev_feats = features::featurize_pairs(*featurizer, dev_pairs);
      lambda = trainer::tune_lambda(checkpoint.head, dev_pairs, dev_feats,
                                    trainer::kDefaultLambdaGrid, mode);
    }

    const auto report =
        evals::evaluate(checkpoint.head, pairs, feats, lambda, eval_bin_width, mode);
    io::atomic_write(eval_out, json_text(report_json(report)));
    std::cout << "evaluated " << report.pair_count
              << " pairs: preference_accuracy=" << report.preference_accuracy;
    if (report.diverging_auroc.has_value()) {
      std::cout << " diverging_auroc=" << *report.diverging_auroc;
    }
    std::cout << " lambda=" << report.lambda_used << "\n";
    std::cout << "report -> " << eval_out << "\n";
  });

  // ---- rank-divisive ----
  auto* rank = app.add_subcommand("rank-divisive", "rank benchmark prompts by divisiveness");
  std::string rank_model, rank_benchmark, rank_out, rank_features, rank_div = "product";
  double rank_fraction = 0.05;
  std::size_t rank_dim = 0;
  rank->add_option("--model", rank_model, "classification checkpoint")->required();
  rank->add_option("--benchmark", rank_benchmark, "benchmark file (jsonl)")->required();
  rank->add_option("--out", rank_out, "ranking path")->required();
  rank->add_option("--top-fraction", rank_fraction, "fraction of prompts to flag");
  rank->add_option("--divisiveness", rank_div, "extreme-score combination")
      ->check(CLI::IsMember({"product", "sum"}));
  auto* rank_feat_opt =
      rank->add_option("--features", rank_features, "override the checkpoint's featurizer");
  auto* rank_dim_opt = rank->add_option("--dim", rank_dim, "feature dimension");
  rank->callback([&] {
    const auto checkpoint = model::load_checkpoint(rank_model);
    if (checkpoint.head.kind != model::HeadKind::classification) {
      throw DataError("rank-divisive needs a classification checkpoint");
    }
    const auto feature_config =
        rank_feat_opt->count() > 0
            ? parse_features_flag(rank_features,
                                  rank_dim_opt->count() > 0
                                      ? std::optional<std::size_t>(rank_dim)
                                      : std::nullopt,
                                  checkpoint.feature_config.response_weight)
            : checkpoint.feature_config;
    const auto featurizer = build_featurizer(feature_config);
    check_feature_dim(*featurizer, checkpoint.head);

    const auto benchmark = io::read_benchmark(rank_benchmark);
    const auto ranking = evals::rank_prompts(benchmark, checkpoint.head, *featurizer,
                                             rank_fraction, parse_divisiveness(rank_div));
    io::atomic_write(rank_out, json_text(ranking_json(ranking)));
    std::size_t flagged = 0;
    for (const auto& entry : ranking.entries) flagged += entry.flagged ? 1 : 0;
    std::cout << "ranked " << ranking.entries.size() << " prompts, flagged " << flagged
              << " -> " << rank_out << "\n";
  });

  // ---- export-hist ----
  auto* hist = app.add_subcommand("export-hist", "export histogram rows as csv");
  std::string hist_model, hist_data, hist_out;
  double hist_bin_width = 0.05;
  hist->add_option("--model", hist_model, "checkpoint path")->required();
  hist->add_option("--data", hist_data, "dataset (jsonl)")->required();
  hist->add_option("--out", hist_out, "csv path")->required();
  hist->add_option("--bin-width", hist_bin_width, "histogram bin width");
  hist->callback([&] {
    const auto checkpoint = model::load_checkpoint(hist_model);
    const auto featurizer = build_featurizer(checkpoint.feature_config);
    check_feature_dim(*featurizer, checkpoint.head);
    const auto pairs = io::read_dataset(hist_data);
    if (pairs.empty()) throw DataError("dataset " + hist_data + " is empty");
    const auto feats = features::featurize_pairs(*featurizer, pairs);
    check_computed_dim(feats, checkpoint.head);
    const auto bins = evals::histogram_export(checkpoint.head, pairs, feats, hist_bin_width);
    std::string csv = "bin_lower,percent\n";
    for (const auto& bin : bins) {
      csv += ordered_json(bin.lower).dump() + "," + ordered_json(bin.percent).dump() + "\n";
    }
    io::atomic_write(hist_out, csv);
    std::cout << bins.size() << " bins -> " << hist_out << "\n";
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace divpref::cli
