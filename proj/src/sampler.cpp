#include "mha/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mha/math.hpp"

namespace mha {

std::string_view to_string(EditKind kind) {
  switch (kind) {
    case EditKind::replace: return "replace";
    case EditKind::insert: return "insert";
    case EditKind::remove: return "delete";
  }
  return "?";
}

std::string_view to_string(Mode mode) { return mode == Mode::black ? "black" : "white"; }

Mode parse_mode(std::string_view s) {
  if (s == "black" || s == "bmha") return Mode::black;
  if (s == "white" || s == "wmha") return Mode::white;
  throw std::invalid_argument("unknown attack mode '" + std::string(s) + "'");
}

// ------------------------------------------------------------------- config

void MHConfig::validate() const {
  for (double p : {p_replace, p_insert, p_delete}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("MHConfig: mixture weight outside [0,1]");
  }
  if (std::abs(p_replace + p_insert + p_delete - 1.0) > 1e-9) {
    throw std::invalid_argument("MHConfig: p_r + p_i + p_d must equal 1");
  }
  if (candidates < 1) throw std::invalid_argument("MHConfig: candidate count must be >= 1");
  if (!(t_lm >= 0.0 && t_lm <= 1.0) || !(t_c >= 0.0 && t_c <= 1.0)) {
    throw std::invalid_argument("MHConfig: thresholds must lie in [0, 1]");
  }
  if (min_len < 1) throw std::invalid_argument("MHConfig: min_len must be >= 1");
  if (!(max_len_factor >= 1.0)) throw std::invalid_argument("MHConfig: max_len_factor must be >= 1");
}

MHConfig MHConfig::effective() const {
  MHConfig out = *this;
  if (mode == Mode::white) {
    out.p_replace = 1.0;
    out.p_insert = 0.0;
    out.p_delete = 0.0;
  }
  return out;
}

// ------------------------------------------------------------ free functions

double CandidateDistribution::probability(TokenId word) const {
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i] == word) return std::exp(log_probs[i]);
  }
  return 0.0;
}

namespace {

double log_target(const Distribution& p, ClassId target) { return std::log(p[target]); }

}  // namespace

double stationary_logscore(const Sentence& x, ClassId target, const LanguageModel& lm_forward,
                           const ClassifierInterface& clf) {
  if (x.empty()) throw std::invalid_argument("stationary_logscore: empty sentence");
  if (target >= clf.num_classes()) throw std::out_of_range("stationary_logscore: invalid target");
  const double log_lm = sentence_logprob(lm_forward, x);
  return log_lm + log_target(clf.predict_proba(x), target);
}

CandidateDistribution replacement_proposal_dist(const Sentence& x, std::size_t position,
                                                const CandidateSet& candidates, ClassId target,
                                                const LanguageModel& lm_forward,
                                                const ClassifierInterface& clf) {
  if (candidates.words.empty()) throw std::invalid_argument("replacement_proposal_dist: empty Q");
  CandidateDistribution out;
  out.words = candidates.ids();
  out.log_probs.reserve(out.words.size());
  for (TokenId w : out.words) {
    out.log_probs.push_back(stationary_logscore(replace_word(x, position, w), target, lm_forward, clf));
  }
  const double norm = log_sum_exp(out.log_probs);
  if (norm == kNegInf) throw std::domain_error("replacement_proposal_dist: all candidates have pi = 0");
  for (auto& v : out.log_probs) v -= norm;
  return out;
}

double hastings_alpha(double log_pi_x, double log_pi_xp, double log_g_forward, double log_g_reverse) {
  if (std::isnan(log_pi_x) || std::isnan(log_pi_xp) || std::isnan(log_g_forward) ||
      std::isnan(log_g_reverse)) {
    throw std::invalid_argument("hastings_alpha: NaN input");
  }
  if (log_g_forward == kNegInf) {
    throw std::invalid_argument("hastings_alpha: forward proposal probability is zero");
  }
  if (log_pi_xp == kNegInf || log_g_reverse == kNegInf) return 0.0;
  if (log_pi_x == kNegInf) return 1.0;
  const double log_ratio = (log_pi_xp + log_g_reverse) - (log_pi_x + log_g_forward);
  if (log_ratio >= 0.0) return 1.0;
  return std::exp(log_ratio);
}

bool constraint_gate(double log_lm_x, double log_lm_xp, double log_c_x, double log_c_xp, double t_lm,
                     double t_c) {
  return log_lm_xp >= std::log(t_lm) + log_lm_x && log_c_xp >= std::log(t_c) + log_c_x;
}

// -------------------------------------------------------------------- chain

/// Per-proposal cache: each distinct sentence is sent to the victim at most
/// once while one proposal (forward and reverse sets) is being built.
class MHChain::Evaluator {
 public:
  Evaluator(const MHChain& chain, std::uint64_t* counter) : chain_(chain), counter_(counter) {}

  const ScoredSentence& get(const Sentence& x) {
    auto it = memo_.find(x);
    if (it == memo_.end()) it = memo_.emplace(x, chain_.score(x, chain_.clf_, counter_)).first;
    return it->second;
  }

  /// Log-normalised pi over the sentences produced by `make(w)` for w in Q.
  template <typename Make>
  std::vector<double> log_dist(const CandidateSet& q, Make make, double* log_norm) {
    std::vector<double> lp;
    lp.reserve(q.size());
    for (const auto& c : q.words) lp.push_back(get(make(c.word)).log_pi);
    *log_norm = log_sum_exp(lp);
    if (*log_norm == kNegInf) throw std::domain_error("MHChain: every candidate has pi = 0");
    for (auto& v : lp) v -= *log_norm;
    return lp;
  }

 private:
  const MHChain& chain_;
  std::uint64_t* counter_;
  std::unordered_map<Sentence, ScoredSentence, SentenceHash> memo_;
};

MHChain::MHChain(const AttackTask& task, const MHConfig& cfg, const AttackModels& models,
                 const ClassifierInterface& clf)
    : MHChain(task, cfg, models, clf, nullptr) {}

MHChain::MHChain(const AttackTask& task, const MHConfig& cfg, const AttackModels& models,
                 const WhiteBoxClassifier& clf)
    : MHChain(task, cfg, models, clf, &clf) {}

MHChain::MHChain(const AttackTask& task, const MHConfig& cfg, const AttackModels& models,
                 const ClassifierInterface& clf, const WhiteBoxClassifier* white)
    : task_(task),
      cfg_(cfg.effective()),
      models_(models),
      clf_(clf),
      white_(white),
      rng_(cfg.seed) {
  cfg_.validate();
  task_.validate(clf.num_classes());
  if (cfg_.mode == Mode::white && !white_) {
    throw std::invalid_argument("white-box attack requires a white-box classifier");
  }
  if (models_.vocab_size <= kNumSpecials) throw std::invalid_argument("MHChain: vocabulary too small");
  const std::size_t n0 = task_.example.sentence.size();
  max_len_ = std::max(n0, static_cast<std::size_t>(std::floor(cfg_.max_len_factor * static_cast<double>(n0))));
  state_.current = score(task_.example.sentence, clf_, &invocations_);
  state_.locked.assign(n0, false);
  for (std::size_t p : task_.forbidden_positions) state_.locked[p - 1] = true;
  state_.index = 1;
}

ScoredSentence MHChain::score(const Sentence& x, const ClassifierInterface& clf,
                              std::uint64_t* counter) const {
  ScoredSentence s;
  s.sentence = x;
  s.log_lm = sentence_logprob(models_.lms.forward, x);
  s.proba = clf.predict_proba(x);
  if (counter) ++*counter;
  s.log_pi = s.log_lm + log_target(s.proba, task_.target_label);
  return s;
}

PreselectOptions MHChain::preselect_options(std::span<const TokenId> force) const {
  PreselectOptions opts;
  opts.k = cfg_.candidates;
  opts.mode = cfg_.mode;
  opts.vocab_size = models_.vocab_size;
  opts.forbidden = &cfg_.forbidden_words;
  opts.force_include = force;
  return opts;
}

double MHChain::kind_weight(EditKind kind, std::size_t length) const {
  const bool can_delete = length > cfg_.min_len && length >= 2;
  const bool can_insert = length < max_len_;
  switch (kind) {
    case EditKind::replace:
      return cfg_.p_replace + (can_delete ? 0.0 : cfg_.p_delete) + (can_insert ? 0.0 : cfg_.p_insert);
    case EditKind::insert: return can_insert ? cfg_.p_insert : 0.0;
    case EditKind::remove: return can_delete ? cfg_.p_delete : 0.0;
  }
  return 0.0;
}

std::size_t MHChain::edit_position() const {
  const std::size_t n = state_.current.sentence.size();
  std::size_t m = state_.index;
  for (std::size_t tries = 0; tries < n; ++tries) {
    if (!state_.locked[m - 1]) return m;
    m = traversal_next(m, n);
  }
  throw std::runtime_error("MHChain: every position is forbidden");
}

double MHChain::replacement_reverse(const ScoredSentence& proposed, std::size_t m, TokenId old_word,
                                   Evaluator& eval) const {
  const Sentence& xp = proposed.sentence;
  const TokenId force[] = {old_word};
  std::vector<double> grad;
  std::optional<GradientContext> gctx;
  if (cfg_.mode == Mode::white) {
    grad = white_->grad_from_proba(proposed.proba, xp, task_.target_label, m);
    gctx.emplace(GradientContext{grad, white_->embeddings()});
  }
  const auto q = build_candidates(xp, m, SlotKind::replace, preselect_options(force), models_.lms,
                                  gctx ? &*gctx : nullptr);
  double norm = 0.0;
  eval.log_dist(q, [&](TokenId w) { return replace_word(xp, m, w); }, &norm);
  const double log_pi_x = eval.get(replace_word(xp, m, old_word)).log_pi;
  return std::log(kind_weight(EditKind::replace, xp.size())) + (log_pi_x - norm);
}

double MHChain::reverse_replacement_logprob(const Sentence& proposed, std::size_t position,
                                            TokenId old_word) const {
  Evaluator eval(*this, nullptr);
  return replacement_reverse(eval.get(proposed), position, old_word, eval);
}

Proposal MHChain::propose_replace(std::size_t m, Evaluator& eval) {
  const ScoredSentence& cur = state_.current;
  const Sentence& x = cur.sentence;
  std::vector<double> grad;
  std::optional<GradientContext> gctx;
  if (cfg_.mode == Mode::white) {
    grad = white_->grad_from_proba(cur.proba, x, task_.target_label, m);
    gctx.emplace(GradientContext{grad, white_->embeddings()});
  }
  const auto q = build_candidates(x, m, SlotKind::replace, preselect_options({}), models_.lms,
                                  gctx ? &*gctx : nullptr);
  double norm = 0.0;
  const auto lp = eval.log_dist(q, [&](TokenId w) { return replace_word(x, m, w); }, &norm);
  const std::size_t pick = sample_log_probs(rng_, lp);
  const TokenId word = q.words[pick].word;

  Proposal p;
  p.kind = EditKind::replace;
  p.position = m;
  p.word = word;
  p.proposed = eval.get(replace_word(x, m, word));
  p.log_g_forward = std::log(kind_weight(EditKind::replace, x.size())) + lp[pick];
  p.log_g_reverse = replacement_reverse(p.proposed, m, x.word(m), eval);
  return p;
}

Proposal MHChain::propose_insert(std::size_t m, Evaluator& eval) {
  const Sentence& x = state_.current.sentence;
  auto opts = preselect_options({});
  opts.mode = Mode::black;
  const auto q = build_candidates(x, m, SlotKind::insert, opts, models_.lms);
  double norm = 0.0;
  const auto lp = eval.log_dist(q, [&](TokenId w) { return insert_word(x, m, w); }, &norm);
  const std::size_t pick = sample_log_probs(rng_, lp);
  const TokenId word = q.words[pick].word;

  Proposal p;
  p.kind = EditKind::insert;
  p.position = m;
  p.word = word;
  p.proposed = eval.get(insert_word(x, m, word));
  p.log_g_forward = std::log(kind_weight(EditKind::insert, x.size())) + lp[pick];
  // The reverse move deletes position m of x', which is deterministic.
  p.log_g_reverse = std::log(kind_weight(EditKind::remove, x.size() + 1));
  return p;
}

Proposal MHChain::propose_delete(std::size_t m, Evaluator& eval) {
  const Sentence& x = state_.current.sentence;
  const TokenId removed = x.word(m);
  Proposal p;
  p.kind = EditKind::remove;
  p.position = m;
  p.proposed = eval.get(delete_word(x, m));
  p.log_g_forward = std::log(kind_weight(EditKind::remove, x.size()));

  // Reverse: re-insert at m of x', with the removed word force-included.
  const Sentence& xp = p.proposed.sentence;
  const TokenId force[] = {removed};
  auto opts = preselect_options(force);
  opts.mode = Mode::black;
  const auto q = build_candidates(xp, m, SlotKind::insert, opts, models_.lms);
  double norm = 0.0;
  eval.log_dist(q, [&](TokenId w) { return insert_word(xp, m, w); }, &norm);
  const double log_pi_x = eval.get(x).log_pi;
  p.log_g_reverse = std::log(kind_weight(EditKind::insert, xp.size())) + (log_pi_x - norm);
  return p;
}

Proposal MHChain::propose() {
  const std::size_t m = edit_position();
  const std::size_t n = state_.current.sentence.size();
  EditKind kind = EditKind::replace;
  if (cfg_.mode == Mode::black) {
    const double u = uniform01(rng_);
    if (u < cfg_.p_replace) {
      kind = EditKind::replace;
    } else if (u < cfg_.p_replace + cfg_.p_insert) {
      kind = EditKind::insert;
    } else {
      kind = EditKind::remove;
    }
    // Length-bound fallbacks.
    if (kind_weight(kind, n) == 0.0) kind = EditKind::replace;
  }
  Evaluator eval(*this, &invocations_);
  switch (kind) {
    case EditKind::insert: return propose_insert(m, eval);
    case EditKind::remove: return propose_delete(m, eval);
    case EditKind::replace: break;
  }
  return propose_replace(m, eval);
}

TraceRecord MHChain::step() {
  Proposal p = propose();
  const ScoredSentence& cur = state_.current;
  const ClassId target = task_.target_label;

  TraceRecord rec;
  rec.step = ++state_.proposals;
  rec.kind = p.kind;
  rec.position = p.position;
  rec.log_lm_before = cur.log_lm;
  rec.log_lm_after = p.proposed.log_lm;
  rec.log_c_before = log_target(cur.proba, target);
  rec.log_c_after = log_target(p.proposed.proba, target);

  const bool eligible = constraint_gate(rec.log_lm_before, rec.log_lm_after, rec.log_c_before,
                                        rec.log_c_after, cfg_.t_lm, cfg_.t_c);
  rec.gated = !eligible;
  if (eligible) {
    rec.alpha = hastings_alpha(cur.log_pi, p.proposed.log_pi, p.log_g_forward, p.log_g_reverse);
    rec.accepted = uniform01(rng_) < rec.alpha;
  }

  const std::size_t n = state_.current.sentence.size();
  const std::size_t m = p.position;
  if (rec.accepted) {
    ++state_.accepted;
    state_.current = std::move(p.proposed);
    auto at = state_.locked.begin() + static_cast<std::ptrdiff_t>(m - 1);
    switch (p.kind) {
      case EditKind::replace:
        state_.index = traversal_next(m, n);
        break;
      case EditKind::insert:
        state_.locked.insert(at, false);
        // The traversal word moved to m+1.
        state_.index = traversal_next(m + 1, n + 1);
        break;
      case EditKind::remove:
        state_.locked.erase(at);
        state_.index = m <= n - 1 ? m : 1;
        break;
    }
  } else {
    state_.index = traversal_next(m, n);
  }
  rec.log_pi = state_.current.log_pi;
  rec.invocations = invocations_;
  return rec;
}

// ------------------------------------------------------------------- attack

namespace {

AttackResult run_chain(MHChain& chain, ClassId target) {
  AttackResult result;
  const auto finish = [&](bool success) {
    result.success = success;
    result.final_sentence = chain.state().current.sentence;
    result.proposals = chain.state().proposals;
    result.accepted = chain.state().accepted;
    result.invocations = chain.invocations();
    return result;
  };
  if (argmax(chain.state().current.proba) == target) return finish(true);
  while (chain.state().proposals < chain.config().max_proposals) {
    TraceRecord rec = chain.step();
    const bool accepted = rec.accepted;
    if (chain.config().record_trace) result.trace.push_back(rec);
    if (accepted && argmax(chain.state().current.proba) == target) return finish(true);
  }
  return finish(false);
}

}  // namespace

AttackResult run_mh_attack(const AttackTask& task, const MHConfig& cfg, const AttackModels& models,
                           const ClassifierInterface& clf) {
  MHChain chain(task, cfg, models, clf);
  return run_chain(chain, task.target_label);
}

AttackResult run_mh_attack(const AttackTask& task, const MHConfig& cfg, const AttackModels& models,
                           const WhiteBoxClassifier& clf) {
  MHChain chain(task, cfg, models, clf);
  return run_chain(chain, task.target_label);
}

}  // namespace mha
