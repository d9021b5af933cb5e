#include "divpref/features.hpp"

#include <cmath>
#include <stdexcept>

#include "divpref/errors.hpp"

namespace divpref::features {

namespace {

constexpr uint64_t kFnvPrime = 0x100000001b3ull;

void add_word_grams(std::string_view text, HashSpace space, double weight, std::size_t mask,
                    std::vector<double>& acc) {
  std::vector<std::string_view> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    std::size_t end = pos;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
    if (end > pos) tokens.push_back(text.substr(pos, end - pos));
    pos = end;
  }
  for (const auto& tok : tokens) {
    acc[feature_hash(tok, space) & mask] += weight;
  }
  std::string bigram;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    bigram.assign(tokens[i]);
    bigram.push_back('\x1f');
    bigram.append(tokens[i + 1]);
    acc[feature_hash(bigram, space) & mask] += weight;
  }
}

void add_char_grams(std::string_view text, HashSpace space, double weight, std::size_t mask,
                    std::vector<double>& acc) {
  for (std::size_t n = 3; n <= 5; ++n) {
    if (text.size() < n) break;
    for (std::size_t i = 0; i + n <= text.size(); ++i) {
      acc[feature_hash(text.substr(i, n), space) & mask] += weight;
    }
  }
}

}  // namespace

uint64_t feature_hash(std::string_view gram, HashSpace space) {
  uint64_t h = kFeatureHashSeed ^ (kFnvPrime * static_cast<uint64_t>(space));
  for (const char c : gram) {
    h ^= static_cast<unsigned char>(c);
    h *= kFnvPrime;
  }
  return h;
}

FeatureVector featurize_ngram(const std::string& prompt, const std::string& response,
                              std::size_t dim, double response_weight) {
  if (dim == 0 || (dim & (dim - 1)) != 0) {
    throw std::invalid_argument("featurize_ngram: dim must be a power of two");
  }
  if (response_weight <= 0.0) {
    throw std::invalid_argument("featurize_ngram: response_weight must be positive");
  }
  FeatureVector vec(dim, 0.0);
  const std::size_t mask = dim - 1;
  add_word_grams(prompt, HashSpace::prompt_word, 1.0, mask, vec);
  add_char_grams(prompt, HashSpace::prompt_char, 1.0, mask, vec);
  add_word_grams(response, HashSpace::response_word, response_weight, mask, vec);
  add_char_grams(response, HashSpace::response_char, response_weight, mask, vec);

  double norm_sq = 0.0;
  for (const double v : vec) norm_sq += v * v;
  if (norm_sq > 0.0) {
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& v : vec) v *= inv;
  }
  return vec;
}

std::vector<FeatureVector> Featurizer::featurize_batch(
    std::span<const FeatureQuery> queries) const {
  std::vector<FeatureVector> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(featurize(q));
  return out;
}

NgramFeaturizer::NgramFeaturizer(std::size_t dim, double response_weight)
    : dim_(dim), response_weight_(response_weight) {
  if (dim == 0 || (dim & (dim - 1)) != 0) {
    throw std::invalid_argument("NgramFeaturizer: dim must be a power of two");
  }
}

FeatureVector NgramFeaturizer::featurize(const FeatureQuery& query) const {
  if (query.prompt == nullptr || query.response == nullptr) {
    throw std::invalid_argument("NgramFeaturizer: query lacks text");
  }
  return featurize_ngram(*query.prompt, *query.response, dim_, response_weight_);
}

EmbeddingTableFeaturizer::EmbeddingTableFeaturizer(std::map<std::string, FeatureVector> table)
    : table_(std::move(table)) {
  if (table_.empty()) {
    throw std::invalid_argument("EmbeddingTableFeaturizer: empty table");
  }
  dim_ = table_.begin()->second.size();
  for (const auto& [id, vec] : table_) {
    if (vec.size() != dim_) {
      throw std::invalid_argument("EmbeddingTableFeaturizer: inconsistent dimensions");
    }
  }
}

FeatureVector EmbeddingTableFeaturizer::featurize(const FeatureQuery& query) const {
  auto it = table_.find(query.key);
  if (it == table_.end()) {
    throw DataError("no embedding for id '" + query.key + "'");
  }
  return it->second;
}

FeatureQuery pair_query(const PreferencePair& pair, Side side) {
  FeatureQuery q;
  q.key = pair.id + (side == Side::a ? "#a" : "#b");
  q.prompt = &pair.prompt;
  q.response = side == Side::a ? &pair.response_a : &pair.response_b;
  return q;
}

std::vector<PairFeatures> featurize_pairs(const Featurizer& featurizer,
                                          std::span<const PreferencePair> pairs) {
  std::vector<FeatureQuery> queries;
  queries.reserve(pairs.size() * 2);
  for (const auto& pair : pairs) {
    queries.push_back(pair_query(pair, Side::a));
    queries.push_back(pair_query(pair, Side::b));
  }
  auto vectors = featurizer.featurize_batch(queries);
  std::vector<PairFeatures> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out[i].a = std::move(vectors[2 * i]);
    out[i].b = std::move(vectors[2 * i + 1]);
  }
  return out;
}

}  // namespace divpref::features
