#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "mha/math.hpp"
#include "mha/preselect.hpp"
#include "mha/random.hpp"

namespace mha {
namespace {

constexpr TokenId a = 3, b = 4, c = 5;

Vocabulary abc() { return Vocabulary::from_tokens(std::vector<std::string>{"a", "b", "c"}); }

class FlatModel final : public LanguageModel {
 public:
  explicit FlatModel(Direction d) : d_(d) {}
  Direction direction() const override { return d_; }
  double cond_logprob(TokenId, std::span<const TokenId>) const override { return std::log(0.25); }
  std::size_t alphabet_size() const override { return 4; }

 private:
  Direction d_;
};

TEST(Cosine, Conventions) {
  EXPECT_DOUBLE_EQ(cosine_sim(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_NEAR(cosine_sim(std::vector<double>{1, 2}, std::vector<double>{2, 4}), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(cosine_sim(std::vector<double>{0, 0}, std::vector<double>{1, 1}), 0.0);
  EXPECT_NEAR(cosine_sim(std::vector<double>{1, 2}, std::vector<double>{-1, -2}), -1.0, 1e-15);
  EXPECT_THROW(cosine_sim(std::vector<double>{1}, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST(ScoreBlack, HandCountedBigrams) {
  // Forward: a -> {b, c}, so P(b|a) = (1+1)/(2+4) = 1/3.
  // Backward: c is preceded by b twice and a once, so P_b(b|c) = (2+1)/(3+4) = 3/7.
  const std::vector<Sentence> corpus = {Sentence{a, b, c}, Sentence{a, c}, Sentence{b, c}};
  const auto f = train_ngram(corpus, 2, 1.0, Direction::forward, abc());
  const auto bw = train_ngram(corpus, 2, 1.0, Direction::backward, abc());
  const LmPair lms{f, bw};
  EXPECT_NEAR(std::exp(score_black(b, Sentence{a, a, c}, 2, lms)), 1.0 / 7.0, 1e-12);
  const LmPair swapped{bw, f};
  EXPECT_THROW(score_black(b, Sentence{a, a, c}, 2, swapped), std::invalid_argument);
}

TEST(ScoreWhite, CosineScalesBlackScore) {
  const FlatModel f(Direction::forward), bw(Direction::backward);
  const LmPair lms{f, bw};
  Matrix e(6, 2, 0.0);
  e(3, 0) = 1.0;  // a
  e(4, 1) = 1.0;  // b
  e(5, 0) = 2.0;  // c
  const Sentence x{a, a, c};
  const double sb = std::exp(score_black(b, x, 2, lms));
  EXPECT_NEAR(sb, 1.0 / 16.0, 1e-15);
  // e_a - e_b = (1, -1).
  const std::vector<double> aligned = {1.0, -1.0};
  EXPECT_NEAR(score_white(b, x, 2, lms, GradientContext{aligned, e}), sb, 1e-15);
  const std::vector<double> opposite = {-1.0, 1.0};
  EXPECT_NEAR(score_white(b, x, 2, lms, GradientContext{opposite, e}), -sb, 1e-15);
  // Self candidate: e_m - e_m = 0.
  EXPECT_EQ(score_white(a, x, 2, lms, GradientContext{aligned, e}), 0.0);
  const std::vector<double> zero = {0.0, 0.0};
  EXPECT_EQ(score_white(b, x, 2, lms, GradientContext{zero, e}), 0.0);
}

TEST(BuildCandidates, TiesBreakByAscendingId) {
  const FlatModel f(Direction::forward), bw(Direction::backward);
  const LmPair lms{f, bw};
  PreselectOptions opts;
  opts.k = 3;
  opts.vocab_size = 12;
  const auto q = build_candidates(Sentence{9, 10, 11}, 3, SlotKind::insert, opts, lms);
  EXPECT_EQ(q.ids(), (std::vector<TokenId>{3, 4, 5}));
}

TEST(BuildCandidates, CurrentWordAndForcedWordsAreIncluded) {
  const FlatModel f(Direction::forward), bw(Direction::backward);
  const LmPair lms{f, bw};
  PreselectOptions opts;
  opts.k = 2;
  opts.vocab_size = 12;
  const TokenId force[] = {10};
  opts.force_include = force;
  const auto q = build_candidates(Sentence{9, 11, 8}, 2, SlotKind::replace, opts, lms);
  EXPECT_EQ(q.ids(), (std::vector<TokenId>{3, 4, 10, 11}));
  EXPECT_TRUE(q.contains(11));
  EXPECT_FALSE(q.contains(9));
}

TEST(BuildCandidates, ForbiddenAndSpecialsExcluded) {
  const FlatModel f(Direction::forward), bw(Direction::backward);
  const LmPair lms{f, bw};
  WordSet forbidden = {3, 4};
  PreselectOptions opts;
  opts.k = 100;
  opts.vocab_size = 7;
  opts.forbidden = &forbidden;
  const auto q = build_candidates(Sentence{5, 6}, 1, SlotKind::insert, opts, lms);
  EXPECT_EQ(q.ids(), (std::vector<TokenId>{5, 6}));
  forbidden = {3, 4, 5, 6};
  EXPECT_THROW(build_candidates(Sentence{5, 6}, 1, SlotKind::insert, opts, lms), std::invalid_argument);
}

TEST(BuildCandidates, WhiteModeIsReplacementOnly) {
  const auto& world = testing::toy_world();
  const auto lms = world.models().lms;
  const std::vector<double> g(8, 1.0);
  const GradientContext gc{g, world.victim.classifier.embeddings()};
  PreselectOptions opts;
  opts.mode = Mode::white;
  opts.vocab_size = world.corpus.vocab.size();
  EXPECT_THROW(build_candidates(Sentence{5, 6, 7}, 1, SlotKind::insert, opts, lms, &gc),
               std::invalid_argument);
  EXPECT_THROW(build_candidates(Sentence{5, 6, 7}, 1, SlotKind::replace, opts, lms, nullptr),
               std::invalid_argument);
}

// Exhaustive oracle: score every eligible word independently and rank.
std::vector<TokenId> oracle_top_k(const Sentence& x, std::size_t m, SlotKind kind, std::size_t k,
                                  Mode mode, const LmPair& lms, const WordSet& forbidden,
                                  std::size_t vocab, const GradientContext* gc) {
  std::vector<std::pair<double, TokenId>> all;
  for (TokenId w = kNumSpecials; w < vocab; ++w) {
    if (forbidden.contains(w)) continue;
    double s = 0;
    if (kind == SlotKind::insert) {
      s = lms.forward.cond_logprob(w, x.prefix(m)) + lms.backward.cond_logprob(w, x.suffix_from(m));
    } else if (mode == Mode::black) {
      s = lms.forward.cond_logprob(w, x.prefix(m)) + lms.backward.cond_logprob(w, x.suffix_from(m + 1));
    } else {
      const double sb = std::exp(lms.forward.cond_logprob(w, x.prefix(m)) +
                                 lms.backward.cond_logprob(w, x.suffix_from(m + 1)));
      const auto em = gc->embeddings.row(x.word(m));
      const auto ew = gc->embeddings.row(w);
      double dot = 0, ng = 0, nd = 0;
      for (std::size_t j = 0; j < em.size(); ++j) {
        dot += gc->gradient[j] * (em[j] - ew[j]);
        ng += gc->gradient[j] * gc->gradient[j];
        nd += (em[j] - ew[j]) * (em[j] - ew[j]);
      }
      s = ng == 0 || nd == 0 ? 0.0 : sb * dot / std::sqrt(ng * nd);
    }
    all.emplace_back(-s, w);
  }
  std::sort(all.begin(), all.end());
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
  if (kind == SlotKind::replace && std::find(out.begin(), out.end(), x.word(m)) == out.end()) {
    out.push_back(x.word(m));
  }
  std::sort(out.begin(), out.end());
  return out;
}

TEST(BuildCandidates, MatchesExhaustiveOracle) {
  const auto& world = testing::toy_world();
  const auto lms = world.models().lms;
  const auto& clf = world.victim.classifier;
  Rng rng(21);
  for (int t = 0; t < 300; ++t) {
    const auto& ex = world.corpus.test[uniform_index(rng, world.corpus.test.size())];
    const Sentence& x = ex.sentence;
    const auto kind = uniform_index(rng, 2) ? SlotKind::insert : SlotKind::replace;
    const Mode mode = kind == SlotKind::replace && uniform_index(rng, 2) ? Mode::white : Mode::black;
    const std::size_t m = 1 + uniform_index(rng, x.size() + (kind == SlotKind::insert ? 1 : 0));
    const std::size_t k = 1 + uniform_index(rng, 40);
    std::vector<double> grad;
    std::optional<GradientContext> gc;
    if (mode == Mode::white) {
      grad = clf.grad_from_proba(clf.proba_uncounted(x), x, 1 - ex.label, m);
      gc.emplace(GradientContext{grad, clf.embeddings()});
    }
    PreselectOptions opts;
    opts.k = k;
    opts.mode = mode;
    opts.vocab_size = world.corpus.vocab.size();
    opts.forbidden = &world.corpus.forbidden;
    const auto q = build_candidates(x, m, kind, opts, lms, gc ? &*gc : nullptr);
    auto ids = q.ids();
    std::sort(ids.begin(), ids.end());
    ASSERT_EQ(ids, oracle_top_k(x, m, kind, k, mode, lms, world.corpus.forbidden,
                                world.corpus.vocab.size(), gc ? &*gc : nullptr));
    for (std::size_t i = 1; i < q.words.size(); ++i) {
      const auto& p = q.words[i - 1];
      const auto& n = q.words[i];
      ASSERT_TRUE(p.score > n.score || (p.score == n.score && p.word < n.word));
    }
  }
}

TEST(BuildCandidates, SaturatesAtEligibleVocabulary) {
  const auto& world = testing::toy_world();
  PreselectOptions opts;
  opts.k = 1000;
  opts.vocab_size = world.corpus.vocab.size();
  opts.forbidden = &world.corpus.forbidden;
  const auto q = build_candidates(Sentence{5, 6, 7}, 2, SlotKind::insert, opts, world.models().lms);
  EXPECT_EQ(q.size(), world.corpus.vocab.size() - kNumSpecials - world.corpus.forbidden.size());
}

TEST(ScoreVocabulary, ParallelMatchesSerial) {
  const auto& world = testing::toy_world();
  const auto lms = world.models().lms;
  const auto& clf = world.victim.classifier;
  for (std::size_t i = 0; i < 50; ++i) {
    const Sentence& x = world.corpus.test[i].sentence;
    const std::size_t m = 1 + i % x.size();
    const auto slot = replacement_slot(x, m);
    const auto grad = clf.grad_from_proba(clf.proba_uncounted(x), x, 0, m);
    const GradientContext gc{grad, clf.embeddings()};
    for (Mode mode : {Mode::black, Mode::white}) {
      const auto par = score_vocabulary(slot, mode, world.corpus.vocab.size(), lms, &gc);
      const auto ser = score_vocabulary_serial(slot, mode, world.corpus.vocab.size(), lms, &gc);
      ASSERT_EQ(par, ser);
      for (TokenId s = 0; s < kNumSpecials; ++s) ASSERT_EQ(par[s], kNegInf);
      for (double v : par) ASSERT_FALSE(std::isnan(v));
    }
  }
}

}  // namespace
}  // namespace mha
