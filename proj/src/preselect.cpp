#include "mha/preselect.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mha/math.hpp"

namespace mha {

Slot replacement_slot(const Sentence& x, std::size_t position) {
  const TokenId current = x.word(position);
  return Slot{x.prefix(position), x.suffix_from(position + 1), current};
}

Slot insertion_slot(const Sentence& x, std::size_t position) {
  return Slot{x.prefix(position), x.suffix_from(position), std::nullopt};
}

bool CandidateSet::contains(TokenId word) const {
  return std::any_of(words.begin(), words.end(), [&](const ScoredWord& s) { return s.word == word; });
}

std::vector<TokenId> CandidateSet::ids() const {
  std::vector<TokenId> out;
  out.reserve(words.size());
  for (const auto& s : words) out.push_back(s.word);
  return out;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_sim: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double score_black(TokenId word, const Slot& slot, const LmPair& lms) {
  if (lms.forward.direction() != Direction::forward ||
      lms.backward.direction() != Direction::backward) {
    throw std::invalid_argument("score_black: direction-mismatched language models");
  }
  return lms.forward.cond_logprob(word, slot.prefix) + lms.backward.cond_logprob(word, slot.suffix);
}

double score_black(TokenId word, const Sentence& x, std::size_t position, const LmPair& lms) {
  return score_black(word, replacement_slot(x, position), lms);
}

namespace {

double change_cosine(TokenId word, TokenId current, const GradientContext& grad) {
  const Matrix& e = grad.embeddings;
  if (grad.gradient.size() != e.cols) {
    throw std::invalid_argument("score_white: gradient/embedding dimension mismatch");
  }
  if (word >= e.rows || current >= e.rows) {
    throw std::out_of_range("score_white: token outside embedding table");
  }
  const auto em = e.row(current);
  const auto ew = e.row(word);
  double dot = 0.0, ng = 0.0, nd = 0.0;
  for (std::size_t j = 0; j < e.cols; ++j) {
    const double delta = em[j] - ew[j];
    dot += grad.gradient[j] * delta;
    ng += grad.gradient[j] * grad.gradient[j];
    nd += delta * delta;
  }
  if (ng == 0.0 || nd == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(ng) * std::sqrt(nd)), -1.0, 1.0);
}

double score_one(TokenId word, const Slot& slot, Mode mode, const LmPair& lms,
                 const GradientContext* grad) {
  const double log_sb = score_black(word, slot, lms);
  if (mode == Mode::black) return log_sb;
  return std::exp(log_sb) * change_cosine(word, *slot.current, *grad);
}

void check_white(const Slot& slot, Mode mode, const GradientContext* grad) {
  if (mode != Mode::white) return;
  if (!grad) throw std::invalid_argument("white-box scoring requires a gradient context");
  if (!slot.current) throw std::invalid_argument("white-box scoring requires a replacement slot");
}

}  // namespace

double score_white(TokenId word, const Slot& slot, const LmPair& lms, const GradientContext& grad) {
  check_white(slot, Mode::white, &grad);
  return score_one(word, slot, Mode::white, lms, &grad);
}

double score_white(TokenId word, const Sentence& x, std::size_t position, const LmPair& lms,
                   const GradientContext& grad) {
  return score_white(word, replacement_slot(x, position), lms, grad);
}

std::vector<double> score_vocabulary(const Slot& slot, Mode mode, std::size_t vocab_size,
                                     const LmPair& lms, const GradientContext* grad) {
  check_white(slot, mode, grad);
  std::vector<double> scores(vocab_size, kNegInf);
  const auto n = static_cast<std::ptrdiff_t>(vocab_size);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(kNumSpecials); i < n; ++i) {
    scores[static_cast<std::size_t>(i)] =
        score_one(static_cast<TokenId>(i), slot, mode, lms, grad);
  }
  return scores;
}

std::vector<double> score_vocabulary_serial(const Slot& slot, Mode mode, std::size_t vocab_size,
                                            const LmPair& lms, const GradientContext* grad) {
  check_white(slot, mode, grad);
  std::vector<double> scores(vocab_size, kNegInf);
  for (std::size_t i = kNumSpecials; i < vocab_size; ++i) {
    scores[i] = score_one(static_cast<TokenId>(i), slot, mode, lms, grad);
  }
  return scores;
}

CandidateSet build_candidates(const Sentence& x, std::size_t position, SlotKind kind,
                              const PreselectOptions& opts, const LmPair& lms,
                              const GradientContext* grad) {
  if (opts.k < 1) throw std::invalid_argument("build_candidates: K must be >= 1");
  if (opts.mode == Mode::white && kind != SlotKind::replace) {
    throw std::invalid_argument("build_candidates: white-box scoring supports replacement only");
  }
  const Slot slot = kind == SlotKind::replace ? replacement_slot(x, position)
                                              : insertion_slot(x, position);
  const auto scores = score_vocabulary(slot, opts.mode, opts.vocab_size, lms, grad);

  std::vector<ScoredWord> pool;
  pool.reserve(opts.vocab_size);
  for (std::size_t i = kNumSpecials; i < opts.vocab_size; ++i) {
    const auto id = static_cast<TokenId>(i);
    if (opts.forbidden && opts.forbidden->contains(id)) continue;
    pool.push_back({id, scores[i]});
  }
  if (pool.empty()) throw std::invalid_argument("build_candidates: empty candidate pool");

  auto better = [](const ScoredWord& a, const ScoredWord& b) {
    return a.score > b.score || (a.score == b.score && a.word < b.word);
  };
  const std::size_t keep = std::min(opts.k, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(), better);
  pool.resize(keep);

  CandidateSet out{position, opts.mode, kind, std::move(pool)};
  auto force = [&](TokenId id) {
    if (out.contains(id)) return;
    const double s = id < opts.vocab_size ? score_one(id, slot, opts.mode, lms, grad) : kNegInf;
    out.words.push_back({id, s});
  };
  if (slot.current) force(*slot.current);
  for (TokenId id : opts.force_include) force(id);
  std::sort(out.words.begin(), out.words.end(), better);
  return out;
}

}  // namespace mha
