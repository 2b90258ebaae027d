#ifndef MHA_SAMPLER_HPP
#define MHA_SAMPLER_HPP

#include <cstdint>
#include <optional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mha/core.hpp"
#include "mha/lm.hpp"
#include "mha/preselect.hpp"
#include "mha/random.hpp"
#include "mha/victim.hpp"

namespace mha {

enum class EditKind { replace, insert, remove };

std::string_view to_string(EditKind kind);
std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view s);

struct MHConfig {
  double p_replace = 0.5;
  double p_insert = 0.25;
  double p_delete = 0.25;
  std::size_t candidates = 30;
  std::size_t max_proposals = 200;
  // Proposals with LM(x') < t_lm * LM(x) or C(y~|x') < t_c * C(y~|x) are
  // rejected before the acceptance coin. A threshold of 0 disables its check.
  double t_lm = 0.8;
  double t_c = 0.9;
  std::size_t min_len = 3;
  double max_len_factor = 2.0;
  Mode mode = Mode::black;
  std::uint64_t seed = 0;
  WordSet forbidden_words;
  bool record_trace = false;

  void validate() const;
  /// The configuration actually run: white mode is replacement-only.
  MHConfig effective() const;
};

/// Language models plus the vocabulary size candidates are drawn from.
struct AttackModels {
  LmPair lms;
  std::size_t vocab_size = 0;
};

/// A sentence with its cached stationary-score ingredients.
struct ScoredSentence {
  Sentence sentence;
  double log_lm = 0.0;
  Distribution proba;
  double log_pi = 0.0;  // log LM(x) + log C(target|x)
};

struct Proposal {
  EditKind kind = EditKind::replace;
  std::size_t position = 0;
  std::optional<TokenId> word;  // absent for deletions
  ScoredSentence proposed;
  double log_g_forward = 0.0;  // log g(x'|x)
  double log_g_reverse = 0.0;  // log g(x|x')
};

struct ChainState {
  ScoredSentence current;
  std::vector<bool> locked;  // aligned with current.sentence
  std::size_t index = 1;     // traversal position, 1-based
  std::size_t proposals = 0;
  std::size_t accepted = 0;
};

struct TraceRecord {
  std::size_t step = 0;
  EditKind kind = EditKind::replace;
  std::size_t position = 0;
  double alpha = 0.0;
  bool gated = false;  // rejected directly by the constraint gate
  bool accepted = false;
  double log_pi = 0.0;  // of the chain state after the step
  std::uint64_t invocations = 0;  // cumulative
  // Gate inputs, kept so traces can be audited offline.
  double log_lm_before = 0.0;
  double log_lm_after = 0.0;
  double log_c_before = 0.0;
  double log_c_after = 0.0;
};

struct AttackResult {
  bool success = false;
  Sentence final_sentence;
  std::size_t proposals = 0;
  std::uint64_t invocations = 0;
  std::size_t accepted = 0;
  std::vector<TraceRecord> trace;
};

/// Proposal distribution over a candidate set.
struct CandidateDistribution {
  std::vector<TokenId> words;
  std::vector<double> log_probs;

  /// 0 for words outside the candidate set.
  double probability(TokenId word) const;
};

/// log pi(x|target) up to a constant: log LM(x) + log C(target|x). One
/// classifier invocation.
double stationary_logscore(const Sentence& x, ClassId target, const LanguageModel& lm_forward,
                           const ClassifierInterface& clf);

/// T_r over Q: pi(x with w_m -> w) normalised over Q. |Q| invocations.
CandidateDistribution replacement_proposal_dist(const Sentence& x, std::size_t position,
                                                const CandidateSet& candidates, ClassId target,
                                                const LanguageModel& lm_forward,
                                                const ClassifierInterface& clf);

/// min{1, pi(x') g(x|x') / (pi(x) g(x'|x))} from log inputs.
double hastings_alpha(double log_pi_x, double log_pi_xp, double log_g_forward, double log_g_reverse);

/// True iff LM(x') >= t_lm LM(x) and C(x') >= t_c C(x), compared in log space.
bool constraint_gate(double log_lm_x, double log_lm_xp, double log_c_x, double log_c_xp, double t_lm,
                     double t_c);

/// One Metropolis-Hastings chain over sentences for a single attack task.
/// Sequential; owns its RNG and counts its own classifier invocations.
class MHChain {
 public:
  /// Black-box chain. cfg.mode must be black.
  MHChain(const AttackTask& task, const MHConfig& cfg, const AttackModels& models,
          const ClassifierInterface& clf);
  /// White-box chain (either mode).
  MHChain(const AttackTask& task, const MHConfig& cfg, const AttackModels& models,
          const WhiteBoxClassifier& clf);

  const ChainState& state() const { return state_; }
  const MHConfig& config() const { return cfg_; }
  std::uint64_t invocations() const { return invocations_; }
  std::size_t max_length() const { return max_len_; }

  /// Next editable position at or after the traversal index.
  std::size_t edit_position() const;

  /// Draws a proposal at the traversal word. Consumes randomness and
  /// classifier invocations; the chain state is unchanged.
  Proposal propose();

  /// propose() + constraint gate + acceptance coin + traversal advance.
  TraceRecord step();

  /// g(x|x') for a replacement recomputed from scratch on x' (old word
  /// force-included). Does not touch the chain's invocation count.
  double reverse_replacement_logprob(const Sentence& proposed, std::size_t position,
                                     TokenId old_word) const;

  /// Effective mixture weights at a given length after length-bound fallbacks.
  double kind_weight(EditKind kind, std::size_t length) const;

 private:
  MHChain(const AttackTask& task, const MHConfig& cfg, const AttackModels& models,
          const ClassifierInterface& clf, const WhiteBoxClassifier* white);

  class Evaluator;

  ScoredSentence score(const Sentence& x, const ClassifierInterface& clf,
                       std::uint64_t* counter) const;
  PreselectOptions preselect_options(std::span<const TokenId> force) const;

  Proposal propose_replace(std::size_t m, Evaluator& eval);
  Proposal propose_insert(std::size_t m, Evaluator& eval);
  Proposal propose_delete(std::size_t m, Evaluator& eval);
  double replacement_reverse(const ScoredSentence& proposed, std::size_t m, TokenId old_word,
                             Evaluator& eval) const;

  AttackTask task_;
  MHConfig cfg_;
  AttackModels models_;
  const ClassifierInterface& clf_;
  const WhiteBoxClassifier* white_;
  Rng rng_;
  std::size_t max_len_;
  std::uint64_t invocations_ = 0;
  ChainState state_;
};

/// Runs the chain until the victim's argmax on an accepted state equals the
/// target, or cfg.max_proposals proposals have been made.
AttackResult run_mh_attack(const AttackTask& task, const MHConfig& cfg, const AttackModels& models,
                           const ClassifierInterface& clf);
AttackResult run_mh_attack(const AttackTask& task, const MHConfig& cfg, const AttackModels& models,
                           const WhiteBoxClassifier& clf);

}  // namespace mha

#endif  // MHA_SAMPLER_HPP
