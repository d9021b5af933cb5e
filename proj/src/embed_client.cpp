#include "divpref/embed_client.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "divpref/dataset_io.hpp"
#include "divpref/errors.hpp"

namespace divpref::features {

namespace {

using nlohmann::json;

// "http://host:port/some/path" -> {"http://host:port", "/some/path"}
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("embedding endpoint must include a scheme: " + endpoint);
  }
  const auto path_start = endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return {endpoint, "/"};
  }
  return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

bool transient_status(int status) {
  return status == 429 || (status >= 500 && status <= 599);
}

std::vector<FeatureVector> parse_embedding_response(const std::string& body,
                                                    std::size_t expected_count) {
  json parsed;
  try {
    parsed = json::parse(body);
  } catch (const json::exception& e) {
    throw DataError(std::string("embedding service returned malformed JSON: ") + e.what());
  }
  if (!parsed.is_object() || !parsed.contains("data") || !parsed["data"].is_array()) {
    throw DataError("embedding service response lacks a 'data' array");
  }
  const auto& data = parsed["data"];
  if (data.size() != expected_count) {
    throw DataError("embedding service returned " + std::to_string(data.size()) +
                    " vectors for " + std::to_string(expected_count) + " inputs");
  }
  std::vector<FeatureVector> out;
  out.reserve(data.size());
  for (const auto& entry : data) {
    if (!entry.is_object() || !entry.contains("embedding") || !entry["embedding"].is_array()) {
      throw DataError("embedding service entry lacks an 'embedding' array");
    }
    FeatureVector vec;
    vec.reserve(entry["embedding"].size());
    for (const auto& v : entry["embedding"]) {
      if (!v.is_number()) throw DataError("embedding service returned a non-numeric component");
      vec.push_back(v.get<double>());
    }
    if (vec.empty()) throw DataError("embedding service returned an empty vector");
    out.push_back(std::move(vec));
  }
  return out;
}

}  // namespace

std::vector<FeatureVector> fetch_embeddings(const std::string& endpoint,
                                            std::span<const std::string> texts,
                                            const FetchOptions& options) {
  if (texts.empty()) return {};
  auto [base, path] = split_endpoint(endpoint);
  httplib::Client client(base);
  const auto secs = static_cast<time_t>(options.timeout_seconds);
  const auto usecs =
      static_cast<time_t>((options.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  json payload;
  payload["input"] = json::array();
  for (const auto& t : texts) payload["input"].push_back(t);
  const std::string body = payload.dump();

  std::string last_failure = "connection failed";
  const int attempts = 1 + std::max(0, options.retries);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      const double wait = options.backoff_base_seconds * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
    auto res = client.Post(path, body, "application/json");
    if (!res) {
      last_failure = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      return parse_embedding_response(res->body, texts.size());
    }
    if (transient_status(res->status)) {
      last_failure = "status " + std::to_string(res->status);
      continue;
    }
    throw DataError("embedding service request to " + endpoint + " failed with status " +
                    std::to_string(res->status));
  }
  throw DataError("embedding service request to " + endpoint + " failed after " +
                  std::to_string(attempts) + " attempts (last: " + last_failure + ")");
}

HttpEmbeddingFeaturizer::HttpEmbeddingFeaturizer(std::string endpoint, std::size_t dim,
                                                 FetchOptions options)
    : endpoint_(std::move(endpoint)), dim_(dim), options_(options) {}

FeatureVector HttpEmbeddingFeaturizer::featurize(const FeatureQuery& query) const {
  auto batch = featurize_batch(std::span<const FeatureQuery>(&query, 1));
  return std::move(batch.front());
}

std::vector<FeatureVector> HttpEmbeddingFeaturizer::featurize_batch(
    std::span<const FeatureQuery> queries) const {
  if (queries.empty()) return {};
  std::vector<std::string> texts;
  texts.reserve(queries.size());
  for (const auto& q : queries) {
    if (q.prompt == nullptr || q.response == nullptr) {
      throw std::invalid_argument("HttpEmbeddingFeaturizer: query lacks text");
    }
    texts.push_back(*q.prompt + "\n" + *q.response);
  }
  auto vectors = fetch_embeddings(endpoint_, texts, options_);
  for (const auto& vec : vectors) {
    if (dim_ == 0) dim_ = vec.size();
    if (vec.size() != dim_) {
      throw DataError("embedding service returned a " + std::to_string(vec.size()) +
                      "-dim vector, expected " + std::to_string(dim_));
    }
  }
  return vectors;
}

std::unique_ptr<Featurizer> make_featurizer(const FeatureConfig& config) {
  switch (config.kind) {
    case FeatureConfig::Kind::ngram:
      return std::make_unique<NgramFeaturizer>(config.dim, config.response_weight);
    case FeatureConfig::Kind::file: {
      auto table = io::read_embeddings(config.location);
      auto featurizer = std::make_unique<EmbeddingTableFeaturizer>(std::move(table));
      if (config.dim != 0 && featurizer->dim() != config.dim) {
        throw DataError("embedding file " + config.location + " has dimension " +
                        std::to_string(featurizer->dim()) + ", expected " +
                        std::to_string(config.dim));
      }
      return featurizer;
    }
    case FeatureConfig::Kind::http:
      return std::make_unique<HttpEmbeddingFeaturizer>(config.location, config.dim);
  }
  throw std::invalid_argument("make_featurizer: unknown featurizer kind");
}

}  // namespace divpref::features
