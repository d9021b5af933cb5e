#include "divpref/dataset_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "divpref/errors.hpp"

namespace divpref {

using nlohmann::json;

namespace prefdata {

const std::string& FieldMap::actual(const std::string& canonical) const {
  auto it = names.find(canonical);
  return it == names.end() ? canonical : it->second;
}

}  // namespace prefdata

namespace io {

namespace {

[[noreturn]] void line_error(const std::filesystem::path& path, std::size_t line,
                             const std::string& what) {
  throw DataError(path.string() + " line " + std::to_string(line) + ": " + what);
}

std::string require_string(const json& obj, const std::string& field,
                           const std::filesystem::path& path, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end() || !it->is_string()) {
    line_error(path, line, "missing or non-string field '" + field + "'");
  }
  return it->get<std::string>();
}

int require_int(const json& obj, const std::string& field, const std::filesystem::path& path,
                std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end() || !it->is_number_integer()) {
    line_error(path, line, "missing or non-integer field '" + field + "'");
  }
  return it->get<int>();
}

PreferencePair parse_pair(const json& rec, const prefdata::FieldMap& fm,
                          const std::filesystem::path& path, std::size_t line) {
  if (!rec.is_object()) line_error(path, line, "record is not a JSON object");
  PreferencePair pair;
  pair.id = require_string(rec, fm.actual("id"), path, line);
  pair.prompt = require_string(rec, fm.actual("prompt"), path, line);
  pair.response_a = require_string(rec, fm.actual("response_a"), path, line);
  pair.response_b = require_string(rec, fm.actual("response_b"), path, line);

  auto jit = rec.find(fm.actual("judgments"));
  if (jit == rec.end() || !jit->is_array() || jit->empty()) {
    line_error(path, line, "field '" + fm.actual("judgments") + "' must be a non-empty array");
  }
  std::set<std::string> seen;
  bool all_scored = true;
  for (const json& jj : *jit) {
    if (!jj.is_object()) line_error(path, line, "judgment is not a JSON object");
    AnnotatorJudgment judgment;
    judgment.annotator_id = require_string(jj, fm.actual("annotator"), path, line);
    if (!seen.insert(judgment.annotator_id).second) {
      line_error(path, line, "duplicate annotator '" + judgment.annotator_id + "'");
    }
    const bool has_scores = jj.contains(fm.actual("score_a")) || jj.contains(fm.actual("score_b"));
    const bool has_label = jj.contains(fm.actual("label"));
    if (has_scores) {
      const int sa = require_int(jj, fm.actual("score_a"), path, line);
      const int sb = require_int(jj, fm.actual("score_b"), path, line);
      if (sa < 1 || sa > 5 || sb < 1 || sb > 5) {
        line_error(path, line, "score outside 1..5");
      }
      judgment.raw_scores = LikertScores{sa, sb};
      judgment.label = prefdata::label_from_scores(sa, sb);
      if (has_label && require_int(jj, fm.actual("label"), path, line) != judgment.label.value) {
        line_error(path, line, "label disagrees with the score gap");
      }
    } else if (has_label) {
      const int v = require_int(jj, fm.actual("label"), path, line);
      if (v < -2 || v > 2) line_error(path, line, "label outside -2..+2");
      judgment.label = PreferenceLabel{v};
      all_scored = false;
    } else {
      line_error(path, line, "judgment carries neither a label nor scores");
    }
    pair.judgments.push_back(std::move(judgment));
  }

  auto sit = rec.find(fm.actual("source"));
  if (sit != rec.end()) {
    if (!sit->is_string()) line_error(path, line, "non-string 'source'");
    const std::string s = sit->get<std::string>();
    if (s == "multipref") pair.source = Source::multipref_like;
    else if (s == "helpsteer2") pair.source = Source::helpsteer2_like;
    else line_error(path, line, "unknown source '" + s + "'");
  } else {
    pair.source = all_scored ? Source::helpsteer2_like : Source::multipref_like;
  }
  return pair;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

std::vector<PreferencePair> read_dataset(const std::filesystem::path& path,
                                         const prefdata::FieldMap& field_map) {
  std::vector<PreferencePair> pairs;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    json rec;
    try {
      rec = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      line_error(path, i + 1, std::string("malformed JSON (") + e.what() + ")");
    }
    pairs.push_back(parse_pair(rec, field_map, path, i + 1));
  }
  return pairs;
}

void write_dataset(const std::filesystem::path& path, std::span<const PreferencePair> pairs) {
  std::string out;
  for (const auto& pair : pairs) {
    json judgments = json::array();
    for (const auto& j : pair.judgments) {
      if (j.raw_scores) {
        judgments.push_back({{"annotator", j.annotator_id},
                             {"score_a", j.raw_scores->score_a},
                             {"score_b", j.raw_scores->score_b}});
      } else {
        judgments.push_back({{"annotator", j.annotator_id}, {"label", j.label.value}});
      }
    }
    const char* source = pair.source == Source::multipref_like    ? "multipref"
                         : pair.source == Source::helpsteer2_like ? "helpsteer2"
                                                                  : "other";
    // "other" is not part of the interchange vocabulary; refuse to emit it.
    if (pair.source == Source::other) {
      throw std::invalid_argument("write_dataset: pair '" + pair.id + "' has no source");
    }
    const json rec = {{"id", pair.id},
                      {"prompt", pair.prompt},
                      {"response_a", pair.response_a},
                      {"response_b", pair.response_b},
                      {"source", source},
                      {"judgments", judgments}};
    out += rec.dump();
    out += '\n';
  }
  atomic_write(path, out);
}

std::map<std::string, std::vector<double>> read_embeddings(const std::filesystem::path& path) {
  std::map<std::string, std::vector<double>> table;
  const auto lines = read_lines(path);
  std::size_t dim = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    json rec;
    try {
      rec = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      line_error(path, i + 1, std::string("malformed JSON (") + e.what() + ")");
    }
    const std::string id = require_string(rec, "id", path, i + 1);
    auto vit = rec.find("vector");
    if (vit == rec.end() || !vit->is_array() || vit->empty()) {
      line_error(path, i + 1, "field 'vector' must be a non-empty array");
    }
    std::vector<double> vec;
    vec.reserve(vit->size());
    for (const json& v : *vit) {
      if (!v.is_number()) line_error(path, i + 1, "non-numeric vector entry");
      vec.push_back(v.get<double>());
    }
    if (dim == 0) dim = vec.size();
    if (vec.size() != dim) {
      line_error(path, i + 1, "vector dimension " + std::to_string(vec.size()) +
                                  " does not match " + std::to_string(dim));
    }
    if (!table.emplace(id, std::move(vec)).second) {
      line_error(path, i + 1, "duplicate id '" + id + "'");
    }
  }
  return table;
}

void write_embeddings(const std::filesystem::path& path,
                      const std::map<std::string, std::vector<double>>& table) {
  std::string out;
  for (const auto& [id, vec] : table) {
    const json rec = {{"id", id}, {"vector", vec}};
    out += rec.dump();
    out += '\n';
  }
  atomic_write(path, out);
}

std::vector<BenchmarkPrompt> read_benchmark(const std::filesystem::path& path) {
  std::vector<BenchmarkPrompt> prompts;
  std::set<std::string> seen_ids;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    json rec;
    try {
      rec = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      line_error(path, i + 1, std::string("malformed JSON (") + e.what() + ")");
    }
    BenchmarkPrompt p;
    p.prompt_id = require_string(rec, "prompt_id", path, i + 1);
    if (!seen_ids.insert(p.prompt_id).second) {
      line_error(path, i + 1, "duplicate prompt_id '" + p.prompt_id + "'");
    }
    p.prompt = require_string(rec, "prompt", path, i + 1);
    auto rit = rec.find("responses");
    if (rit == rec.end() || !rit->is_array() || rit->empty()) {
      line_error(path, i + 1, "field 'responses' must be a non-empty array");
    }
    std::set<std::string> systems;
    for (const json& rr : *rit) {
      if (!rr.is_object()) line_error(path, i + 1, "response is not a JSON object");
      BenchmarkResponse resp;
      resp.system = require_string(rr, "system", path, i + 1);
      resp.text = require_string(rr, "text", path, i + 1);
      if (!systems.insert(resp.system).second) {
        line_error(path, i + 1, "duplicate system '" + resp.system + "'");
      }
      p.responses.push_back(std::move(resp));
    }
    prompts.push_back(std::move(p));
  }
  return prompts;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw DataError("cannot replace " + path.string() + ": " + ec.message());
  }
}

}  // namespace io

namespace prefdata {

std::vector<PreferencePair> ingest_dataset(const std::filesystem::path& path, Schema schema,
                                           const FieldMap& field_map) {
  auto pairs = io::read_dataset(path, field_map);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& pair = pairs[i];
    for (const auto& j : pair.judgments) {
      const bool scored = j.raw_scores.has_value();
      if (schema == Schema::helpsteer2 && !scored) {
        throw DataError(path.string() + ": pair '" + pair.id +
                        "' has a label-only judgment but the schema expects scores");
      }
      if (schema == Schema::multipref && scored) {
        throw DataError(path.string() + ": pair '" + pair.id +
                        "' has score judgments but the schema expects direct labels");
      }
    }
    const Source expected =
        schema == Schema::multipref ? Source::multipref_like : Source::helpsteer2_like;
    if (pair.source != expected) {
      throw DataError(path.string() + ": pair '" + pair.id +
                      "' declares a source that contradicts the requested schema");
    }
  }
  return pairs;
}

}  // namespace prefdata

}  // namespace divpref
