#ifndef MHA_PRESELECT_HPP
#define MHA_PRESELECT_HPP

#include <optional>
#include <span>
#include <unordered_set>
#include <vector>

#include "mha/core.hpp"
#include "mha/lm.hpp"
#include "mha/victim.hpp"

namespace mha {

enum class Mode { black, white };
enum class SlotKind { replace, insert };

using WordSet = std::unordered_set<TokenId>;

/// Forward and backward language models used for pre-selection.
struct LmPair {
  const LanguageModel& forward;
  const LanguageModel& backward;
};

/// Where a candidate word goes: between `prefix` and `suffix`. For a
/// replacement slot `current` is the word being replaced.
struct Slot {
  std::span<const TokenId> prefix;
  std::span<const TokenId> suffix;
  std::optional<TokenId> current;
};

/// Slot for replacing w_m: prefix w_1..w_{m-1}, suffix w_{m+1}..w_n.
Slot replacement_slot(const Sentence& x, std::size_t position);
/// Slot for inserting before w_m (m may be n+1): suffix w_m..w_n.
Slot insertion_slot(const Sentence& x, std::size_t position);

/// Victim gradient information for white-box scoring.
struct GradientContext {
  std::span<const double> gradient;  // dL/de_m at the current sentence
  const Matrix& embeddings;
};

struct ScoredWord {
  TokenId word = 0;
  double score = 0.0;  // log S^B in black mode, S^W in white mode
};

struct CandidateSet {
  std::size_t position = 0;
  Mode mode = Mode::black;
  SlotKind kind = SlotKind::replace;
  std::vector<ScoredWord> words;  // descending score, ties by ascending id

  bool contains(TokenId word) const;
  std::vector<TokenId> ids() const;
  std::size_t size() const { return words.size(); }
};

struct PreselectOptions {
  std::size_t k = 30;
  Mode mode = Mode::black;
  std::size_t vocab_size = 0;
  const WordSet* forbidden = nullptr;
  /// Words added even when they miss the top-k (reverse-move bookkeeping).
  std::span<const TokenId> force_include = {};
};

/// a.b / (|a||b|), 0 when either norm is 0.
double cosine_sim(std::span<const double> a, std::span<const double> b);

/// log S^B(w|x) = log LM(w | prefix) + log LM_b(w | suffix).
double score_black(TokenId word, const Slot& slot, const LmPair& lms);
double score_black(TokenId word, const Sentence& x, std::size_t position, const LmPair& lms);

/// S^W(w|x) = S^B(w|x) * cos(dL/de_m, e_m - e_w). Requires slot.current.
double score_white(TokenId word, const Slot& slot, const LmPair& lms, const GradientContext& grad);
double score_white(TokenId word, const Sentence& x, std::size_t position, const LmPair& lms,
                   const GradientContext& grad);

/// Scores every vocabulary id for one slot (OpenMP-parallel). Specials get
/// -inf and NaN is never produced.
std::vector<double> score_vocabulary(const Slot& slot, Mode mode, std::size_t vocab_size,
                                     const LmPair& lms, const GradientContext* grad);
/// Serial reference for score_vocabulary.
std::vector<double> score_vocabulary_serial(const Slot& slot, Mode mode, std::size_t vocab_size,
                                            const LmPair& lms, const GradientContext* grad);

/// Top-k eligible words for the slot. Replacement slots always contain the
/// current word. Specials and forbidden words are never selected by score;
/// force-included words bypass that filter.
CandidateSet build_candidates(const Sentence& x, std::size_t position, SlotKind kind,
                              const PreselectOptions& opts, const LmPair& lms,
                              const GradientContext* grad = nullptr);

}  // namespace mha

#endif  // MHA_PRESELECT_HPP
