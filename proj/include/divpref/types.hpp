#pragma once

#include <optional>
#include <string>
#include <vector>

namespace divpref {

// Signed 5-way preference between the two responses of a pair. Positive
// favors response A, negative favors response B:
//   -2 B significant, -1 B slight, 0 tie, +1 A slight, +2 A significant.
struct PreferenceLabel {
  int value = 0;
};

inline bool label_valid(PreferenceLabel l) { return l.value >= -2 && l.value <= 2; }
inline int label_sign(PreferenceLabel l) { return (l.value > 0) - (l.value < 0); }
inline int label_strength(PreferenceLabel l) { return l.value < 0 ? -l.value : l.value; }

// Per-response 1-5 scores given by one annotator.
struct LikertScores {
  int score_a = 0;
  int score_b = 0;
};

struct AnnotatorJudgment {
  std::string annotator_id;
  PreferenceLabel label;
  // Present when the judgment came from per-response scores rather than a
  // direct comparison; the label is then derived from the score gap.
  std::optional<LikertScores> raw_scores;
};

enum class Source { multipref_like, helpsteer2_like, other };

struct PreferencePair {
  std::string id;
  std::string prompt;
  std::string response_a;
  std::string response_b;
  std::vector<AnnotatorJudgment> judgments;  // at least one
  Source source = Source::other;
};

enum class Side { a, b };

enum class AgreementKind { high_agreement_pref, high_agreement_tie, diverging, other };

struct AgreementCategory {
  AgreementKind kind = AgreementKind::other;
  bool substantial = false;  // significant votes on both sides; diverging only
};

// One system's response to a benchmark prompt.
struct BenchmarkResponse {
  std::string system;
  std::string text;
};

struct BenchmarkPrompt {
  std::string prompt_id;
  std::string prompt;
  std::vector<BenchmarkResponse> responses;  // at least one
};

}  // namespace divpref
