#include <gtest/gtest.h>

#include <algorithm>

#include "fixtures.hpp"
#include "mha/genetic.hpp"
#include "mha/random.hpp"

namespace mha {
namespace {

class ConstClassifier final : public ClassifierInterface {
 public:
  // Predicts `label` for `original` and `other` for everything else.
  ConstClassifier(Sentence original, ClassId label, ClassId other)
      : original_(std::move(original)), label_(label), other_(other) {}
  std::size_t num_classes() const override { return 2; }

 protected:
  Distribution compute_proba(const Sentence& x) const override {
    Distribution d(2, 0.1);
    d[x == original_ ? label_ : other_] = 0.9;
    return d;
  }

 private:
  Sentence original_;
  ClassId label_, other_;
};

// Points on a line: token 3+i sits at x = positions[i].
Matrix line_table(const std::vector<double>& positions) {
  Matrix e(kNumSpecials + positions.size(), 2, 0.0);
  for (std::size_t i = 0; i < positions.size(); ++i) e(kNumSpecials + i, 0) = positions[i];
  return e;
}

TEST(Neighbors, MatchBruteForceScan) {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const std::size_t v = 5 + uniform_index(rng, 30);
    Matrix e(v, 3);
    for (auto& x : e.data) x = static_cast<double>(uniform_index(rng, 5));  // plenty of ties
    const auto word = static_cast<TokenId>(kNumSpecials + uniform_index(rng, v - kNumSpecials));
    const std::size_t k = 1 + uniform_index(rng, 10);
    std::vector<std::pair<double, TokenId>> all;
    for (TokenId w = kNumSpecials; w < v; ++w) {
      if (w == word) continue;
      double d = 0;
      for (std::size_t j = 0; j < 3; ++j) d += (e(w, j) - e(word, j)) * (e(w, j) - e(word, j));
      all.emplace_back(d, w);
    }
    std::sort(all.begin(), all.end());
    std::vector<TokenId> expect;
    for (std::size_t i = 0; i < std::min(k, all.size()); ++i) expect.push_back(all[i].second);
    ASSERT_EQ(nearest_neighbors(e, word, k), expect);
  }
}

TEST(Neighbors, ExcludesSelfSpecialsAndExcludedSet) {
  const Matrix e = line_table({0.0, 0.0, 1.0, 5.0});
  EXPECT_EQ(nearest_neighbors(e, 3, 1), (std::vector<TokenId>{4}));
  const WordSet skip = {4};
  EXPECT_EQ(nearest_neighbors(e, 3, 2, &skip), (std::vector<TokenId>{5, 6}));
  EXPECT_THROW(nearest_neighbors(e, 99, 1), std::out_of_range);
}

TEST(Crossover, IdentityAndMixing) {
  Rng rng(1);
  const Sentence x{3, 4, 5};
  EXPECT_EQ(crossover(x, x, rng), x);
  const Sentence y{6, 7, 8};
  for (int t = 0; t < 50; ++t) {
    const Sentence c = crossover(x, y, rng);
    for (std::size_t i = 0; i < 3; ++i) ASSERT_TRUE(c[i] == x[i] || c[i] == y[i]);
  }
  EXPECT_THROW(crossover(x, Sentence{3}, rng), std::invalid_argument);
}

TEST(Mutate, ChangesOnlyUnlockedPositions) {
  const auto& world = testing::toy_world();
  const auto& e = world.victim.classifier.embeddings();
  GeneticConfig cfg;
  cfg.forbidden_words = world.corpus.forbidden;
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    const Sentence& x = world.corpus.test[t].sentence;
    std::vector<bool> locked(x.size());
    for (std::size_t m = 1; m <= x.size(); ++m) locked[m - 1] = world.corpus.forbidden.contains(x.word(m));
    const Sentence y = mutate(x, locked, e, world.forward, cfg, rng);
    ASSERT_EQ(y.size(), x.size());
    std::size_t diffs = 0;
    for (std::size_t m = 1; m <= x.size(); ++m) {
      if (x.word(m) == y.word(m)) continue;
      ++diffs;
      ASSERT_FALSE(locked[m - 1]);
      ASSERT_FALSE(world.corpus.forbidden.contains(y.word(m)));
    }
    ASSERT_LE(diffs, 1u);
  }
}

TEST(Mutate, FilterSaturationIsNoOp) {
  // With lm_filter_top >= neighbours the draw is uniform over all neighbours.
  const Matrix e = line_table({0.0, 1.0, 2.0, 3.0});
  const auto& world = testing::toy_world();
  GeneticConfig cfg;
  cfg.neighbors = 3;
  cfg.lm_filter_top = 3;
  Rng rng(2);
  std::vector<int> hits(7);
  for (int t = 0; t < 3000; ++t) ++hits[mutate(Sentence{3}, {}, e, world.forward, cfg, rng).word(1)];
  for (TokenId w : {4, 5, 6}) EXPECT_NEAR(hits[w] / 3000.0, 1.0 / 3.0, 0.04);
  EXPECT_EQ(hits[3], 0);
}

TEST(Genetic, AdversarialPopulationSucceedsInGenerationZero) {
  const auto& world = testing::toy_world();
  const auto& ex = world.corpus.test[0];
  const ConstClassifier clf(ex.sentence, ex.label, 1 - ex.label);
  GeneticConfig cfg;
  const auto r = run_genetic_attack(AttackTask{ex, 1 - ex.label, {}}, cfg, world.victim.classifier.embeddings(),
                                    world.forward, clf);
  EXPECT_TRUE(r.attack.success);
  ASSERT_EQ(r.generations.size(), 1u);
  EXPECT_EQ(r.generations[0].generation, 0u);
  EXPECT_EQ(r.attack.invocations, 1 + cfg.population_size);
  EXPECT_EQ(clf.invocation_count(), r.attack.invocations);
}

TEST(Genetic, BudgetSmallerThanPopulation) {
  const auto& world = testing::toy_world();
  const auto& ex = world.corpus.test[0];
  GeneticConfig cfg;
  cfg.max_invocations = 10;
  const auto before = world.victim.classifier.invocation_count();
  const auto r = run_genetic_attack(AttackTask{ex, 1 - ex.label, {}}, cfg, world.victim.classifier.embeddings(),
                                    world.forward, world.victim.classifier);
  EXPECT_FALSE(r.attack.success);
  EXPECT_LE(r.attack.invocations, 10u);
  EXPECT_EQ(r.attack.invocations, world.victim.classifier.invocation_count() - before);
}

TEST(Genetic, EliteNeverWorsensAndCostsOnePopulationPerGeneration) {
  const auto& world = testing::toy_world();
  const auto& clf = world.victim.classifier;
  GeneticConfig cfg;
  cfg.forbidden_words = world.corpus.forbidden;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& ex = world.corpus.test[i];
    AttackTask task{ex, 1 - ex.label, {}};
    for (std::size_t m = 1; m <= ex.sentence.size(); ++m) {
      if (world.corpus.forbidden.contains(ex.sentence.word(m))) task.forbidden_positions.push_back(m);
    }
    cfg.seed = i;
    const auto before = clf.invocation_count();
    const auto r = run_genetic_attack(task, cfg, clf.embeddings(), world.forward, clf);
    ASSERT_EQ(r.attack.invocations, clf.invocation_count() - before);
    for (std::size_t g = 0; g < r.generations.size(); ++g) {
      ASSERT_EQ(r.generations[g].invocations, 1 + (g + 1) * cfg.population_size);
      if (g > 0) ASSERT_GE(r.generations[g].elite_fitness, r.generations[g - 1].elite_fitness);
    }
    ASSERT_EQ(r.attack.success, argmax(clf.proba_uncounted(r.attack.final_sentence)) == task.target_label);
    for (std::size_t p : task.forbidden_positions) {
      ASSERT_EQ(r.attack.final_sentence.word(p), ex.sentence.word(p));
    }
  }
}

TEST(Genetic, ConfigValidation) {
  GeneticConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.population_size = 1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace mha
