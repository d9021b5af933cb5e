#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "divpref/types.hpp"

namespace divpref::features {

using FeatureVector = std::vector<double>;

// Disjoint hash namespaces: identical text never collides across fields or
// gram kinds.
enum class HashSpace : uint64_t {
  prompt_word = 1,
  prompt_char = 2,
  response_word = 3,
  response_char = 4,
};

// Published 64-bit basis of the feature hash. Part of the format contract:
// vectors produced elsewhere agree bucket-for-bucket only with this seed.
inline constexpr uint64_t kFeatureHashSeed = 0x9e3779b97f4a7c15ull;

// Seeded FNV-1a over the gram bytes, basis mixed with the namespace tag.
uint64_t feature_hash(std::string_view gram, HashSpace space);

// Hashed word 1-2 grams plus character 3-5 grams of prompt and response.
// Words are whitespace-separated, character grams run over the raw bytes.
// Response grams accumulate `response_weight` per occurrence, prompt grams
// 1.0. The result is L2-normalized (all-zero for empty inputs). `dim` must be
// a power of two.
FeatureVector featurize_ngram(const std::string& prompt, const std::string& response,
                              std::size_t dim = 16384, double response_weight = 2.0);

// What a featurizer gets to look at: a stable key (used by precomputed
// embedding tables) and, when available, the raw text.
struct FeatureQuery {
  std::string key;
  const std::string* prompt = nullptr;
  const std::string* response = nullptr;
};

class Featurizer {
 public:
  virtual ~Featurizer() = default;
  virtual std::size_t dim() const = 0;
  virtual FeatureVector featurize(const FeatureQuery& query) const = 0;
  // Batched hook, used by network featurizers; the default just loops.
  virtual std::vector<FeatureVector> featurize_batch(std::span<const FeatureQuery> queries) const;
  // True when vectors are expensive and should be computed once and cached.
  virtual bool prefer_precompute() const { return false; }
};

class NgramFeaturizer final : public Featurizer {
 public:
  explicit NgramFeaturizer(std::size_t dim = 16384, double response_weight = 2.0);
  std::size_t dim() const override { return dim_; }
  FeatureVector featurize(const FeatureQuery& query) const override;

 private:
  std::size_t dim_;
  double response_weight_;
};

// Serves vectors from an in-memory id -> vector table (typically loaded from
// an embedding file). Lookup is by FeatureQuery::key; a missing key is a data
// error.
class EmbeddingTableFeaturizer final : public Featurizer {
 public:
  explicit EmbeddingTableFeaturizer(std::map<std::string, FeatureVector> table);
  std::size_t dim() const override { return dim_; }
  FeatureVector featurize(const FeatureQuery& query) const override;

 private:
  std::map<std::string, FeatureVector> table_;
  std::size_t dim_ = 0;
};

// Featurizer description persisted inside checkpoints so evaluation can
// rebuild the exact same feature space.
struct FeatureConfig {
  enum class Kind { ngram, file, http };
  Kind kind = Kind::ngram;
  std::size_t dim = 16384;
  double response_weight = 2.0;
  std::string location;  // file path or service endpoint; empty for ngram
};

std::unique_ptr<Featurizer> make_featurizer(const FeatureConfig& config);

// Lookup keys for dataset pairs are "<pair id>#a" and "<pair id>#b";
// benchmark responses use "<prompt_id>#<system>".
FeatureQuery pair_query(const PreferencePair& pair, Side side);

struct PairFeatures {
  FeatureVector a;
  FeatureVector b;
};

std::vector<PairFeatures> featurize_pairs(const Featurizer& featurizer,
                                          std::span<const PreferencePair> pairs);

}  // namespace divpref::features
