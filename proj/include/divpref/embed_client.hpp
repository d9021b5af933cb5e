#pragma once

#include <span>
#include <string>
#include <vector>

#include "divpref/features.hpp"

namespace divpref::features {

struct FetchOptions {
  double timeout_seconds = 30.0;
  // Number of re-attempts after the first try.
  int retries = 3;
  // First retry waits this long; each further retry doubles the wait.
  double backoff_base_seconds = 1.0;
};

// POSTs {"input": [text, ...]} to `endpoint` and expects
// {"data": [{"embedding": [real, ...]}, ...]} with one entry per input, in
// input order. 2xx is success; 429 and 5xx (and connection failures) are
// transient and retried with exponential backoff; other statuses fail
// immediately. Exhausted retries raise an error carrying the last status.
std::vector<FeatureVector> fetch_embeddings(const std::string& endpoint,
                                            std::span<const std::string> texts,
                                            const FetchOptions& options = {});

// Featurizes text by calling an embedding service; the payload per query is
// prompt + "\n" + response. `dim` 0 means "accept whatever dimension the
// service returns" (fixed after the first batch).
class HttpEmbeddingFeaturizer final : public Featurizer {
 public:
  HttpEmbeddingFeaturizer(std::string endpoint, std::size_t dim, FetchOptions options = {});
  std::size_t dim() const override { return dim_; }
  FeatureVector featurize(const FeatureQuery& query) const override;
  std::vector<FeatureVector> featurize_batch(std::span<const FeatureQuery> queries) const override;
  bool prefer_precompute() const override { return true; }
  const std::string& endpoint() const { return endpoint_; }

 private:
  std::string endpoint_;
  mutable std::size_t dim_ = 0;
  FetchOptions options_;
};

}  // namespace divpref::features
