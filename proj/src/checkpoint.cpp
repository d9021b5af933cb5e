#include "divpref/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "divpref/dataset_io.hpp"
#include "divpref/errors.hpp"

namespace divpref::model {

namespace {

using nlohmann::ordered_json;

const char* kind_name(HeadKind kind) {
  switch (kind) {
    case HeadKind::bradley_terry: return "bradley_terry";
    case HeadKind::mse_regression: return "mse_regression";
    case HeadKind::mean_variance: return "mean_variance";
    case HeadKind::classification: return "classification";
  }
  throw std::invalid_argument("unknown head kind");
}

HeadKind kind_from_name(const std::string& name) {
  if (name == "bradley_terry") return HeadKind::bradley_terry;
  if (name == "mse_regression") return HeadKind::mse_regression;
  if (name == "mean_variance") return HeadKind::mean_variance;
  if (name == "classification") return HeadKind::classification;
  throw DataError("checkpoint has unknown head kind '" + name + "'");
}

const char* feature_kind_name(features::FeatureConfig::Kind kind) {
  switch (kind) {
    case features::FeatureConfig::Kind::ngram: return "ngram";
    case features::FeatureConfig::Kind::file: return "file";
    case features::FeatureConfig::Kind::http: return "http";
  }
  throw std::invalid_argument("unknown featurizer kind");
}

features::FeatureConfig::Kind feature_kind_from_name(const std::string& name) {
  if (name == "ngram") return features::FeatureConfig::Kind::ngram;
  if (name == "file") return features::FeatureConfig::Kind::file;
  if (name == "http") return features::FeatureConfig::Kind::http;
  throw DataError("checkpoint has unknown featurizer kind '" + name + "'");
}

ordered_json matrix_json(const std::vector<double>& data, int rows, int cols) {
  ordered_json out = ordered_json::array();
  for (int r = 0; r < rows; ++r) {
    ordered_json row = ordered_json::array();
    for (int c = 0; c < cols; ++c) row.push_back(data[static_cast<std::size_t>(r) * cols + c]);
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<double> matrix_from_json(const ordered_json& value, int rows, int cols,
                                     const char* name) {
  if (!value.is_array() || static_cast<int>(value.size()) != rows) {
    throw DataError(std::string("checkpoint field ") + name + " has wrong row count");
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  for (const auto& row : value) {
    if (!row.is_array() || static_cast<int>(row.size()) != cols) {
      throw DataError(std::string("checkpoint field ") + name + " has wrong column count");
    }
    for (const auto& v : row) {
      if (!v.is_number()) {
        throw DataError(std::string("checkpoint field ") + name + " has a non-numeric entry");
      }
      out.push_back(v.get<double>());
    }
  }
  return out;
}

std::vector<double> vector_from_json(const ordered_json& value, int size, const char* name) {
  if (!value.is_array() || static_cast<int>(value.size()) != size) {
    throw DataError(std::string("checkpoint field ") + name + " has wrong length");
  }
  std::vector<double> out;
  out.reserve(size);
  for (const auto& v : value) {
    if (!v.is_number()) {
      throw DataError(std::string("checkpoint field ") + name + " has a non-numeric entry");
    }
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& checkpoint) {
  validate_head(checkpoint.head);
  const auto& head = checkpoint.head;
  ordered_json doc;
  doc["kind"] = kind_name(head.kind);
  doc["d"] = head.d;
  doc["h"] = head.h;
  doc["o"] = head.o;
  doc["seed"] = checkpoint.seed;
  doc["W1"] = matrix_json(head.w1, head.h, head.d);
  doc["b1"] = head.b1;
  doc["W2"] = matrix_json(head.w2, head.o, head.h);
  doc["b2"] = head.b2;
  doc["feature_config"] = {
      {"kind", feature_kind_name(checkpoint.feature_config.kind)},
      {"dim", checkpoint.feature_config.dim},
      {"response_weight", checkpoint.feature_config.response_weight},
      {"location", checkpoint.feature_config.location},
  };
  doc["train_config_hash"] = checkpoint.train_config_hash;
  return doc.dump(2) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw DataError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw DataError("checkpoint must be a JSON object");
  for (const char* field : {"kind", "d", "h", "o", "seed", "W1", "b1", "W2", "b2",
                            "feature_config", "train_config_hash"}) {
    if (!doc.contains(field)) {
      throw DataError(std::string("checkpoint lacks field '") + field + "'");
    }
  }
  Checkpoint checkpoint;
  auto& head = checkpoint.head;
  head.kind = kind_from_name(doc["kind"].get<std::string>());
  head.d = doc["d"].get<int>();
  head.h = doc["h"].get<int>();
  head.o = doc["o"].get<int>();
  if (head.d <= 0 || head.h <= 0 || head.o != output_width(head.kind)) {
    throw DataError("checkpoint dimensions are inconsistent with its head kind");
  }
  head.w1 = matrix_from_json(doc["W1"], head.h, head.d, "W1");
  head.b1 = vector_from_json(doc["b1"], head.h, "b1");
  head.w2 = matrix_from_json(doc["W2"], head.o, head.h, "W2");
  head.b2 = vector_from_json(doc["b2"], head.o, "b2");
  checkpoint.seed = doc["seed"].get<uint64_t>();

  const auto& fc = doc["feature_config"];
  if (!fc.is_object()) throw DataError("checkpoint feature_config must be an object");
  for (const char* field : {"kind", "dim", "response_weight", "location"}) {
    if (!fc.contains(field)) {
      throw DataError(std::string("checkpoint feature_config lacks field '") + field + "'");
    }
  }
  checkpoint.feature_config.kind = feature_kind_from_name(fc["kind"].get<std::string>());
  checkpoint.feature_config.dim = fc["dim"].get<std::size_t>();
  checkpoint.feature_config.response_weight = fc["response_weight"].get<double>();
  checkpoint.feature_config.location = fc["location"].get<std::string>();
  checkpoint.train_config_hash = doc["train_config_hash"].get<std::string>();
  validate_head(head);
  return checkpoint;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  io::atomic_write(path, checkpoint_to_json(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return checkpoint_from_json(buffer.str());
}

}  // namespace divpref::model
