#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "mha/random.hpp"
#include "mha/victim.hpp"

namespace mha {
namespace {

// d=1, one ordinary token (id 3) with e = 2, W = [[1], [-1]], b = 0.
BagEmbedClassifier single_token() {
  Matrix e(4, 1, 0.0);
  e(3, 0) = 2.0;
  Matrix w(2, 1);
  w(0, 0) = 1.0;
  w(1, 0) = -1.0;
  return BagEmbedClassifier(e, w, {0.0, 0.0});
}

TEST(Softmax, HandValues) {
  const auto p = softmax(std::vector<double>{2.0, -2.0});
  EXPECT_NEAR(p[0], 0.98201379, 1e-8);
  EXPECT_NEAR(p[1], 0.01798621, 1e-8);
  const auto big = softmax(std::vector<double>{1000.0, 0.0});
  EXPECT_DOUBLE_EQ(big[0], 1.0);
  EXPECT_EQ(argmax(std::vector<double>{0.2, 0.5, 0.5}), 1u);
}

TEST(BagEmbed, ZeroWeightsGiveUniform) {
  Matrix e(6, 3, 0.7);
  auto clf = BagEmbedClassifier(e, Matrix(3, 3, 0.0), {0.0, 0.0, 0.0});
  for (double v : clf.predict_proba(Sentence{3, 4, 5})) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(BagEmbed, SingleTokenExample) {
  const auto clf = single_token();
  const auto p = clf.predict_proba(Sentence{3});
  EXPECT_NEAR(p[0], 0.9820, 1e-4);
  EXPECT_NEAR(p[1], 0.0180, 1e-4);
  EXPECT_NEAR(clf.target_loss(Sentence{3}, 1), 4.018, 1e-3);
  EXPECT_NEAR(clf.target_loss(Sentence{3}, 1), -std::log(p[1]), 1e-12);
  const auto g = clf.grad_embedding(Sentence{3}, 1, 1);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_NEAR(g[0], 1.9640, 1e-4);
}

TEST(BagEmbed, GradientVanishesAtOneHot) {
  const auto clf = single_token();
  const std::vector<double> onehot = {0.0, 1.0};
  for (double v : clf.grad_from_proba(onehot, Sentence{3, 3}, 1, 2)) EXPECT_EQ(v, 0.0);
}

TEST(BagEmbed, GradientCarriesMeanPoolingFactor) {
  const auto clf = single_token();
  const auto g1 = clf.grad_embedding(Sentence{3}, 1, 1);
  // Same pooled vector with n = 4: the gradient per position scales by 1/4.
  const auto g4 = clf.grad_embedding(Sentence{3, 3, 3, 3}, 1, 2);
  EXPECT_NEAR(g4[0], g1[0] / 4.0, 1e-12);
}

double finite_difference(const BagEmbedClassifier& clf, const Sentence& x, ClassId target,
                         TokenId word, std::size_t j, double h) {
  Matrix e = clf.embeddings();
  const double orig = e(word, j);
  e(word, j) = orig + h;
  const double up = -std::log(clf.proba_with(e, x)[target]);
  e(word, j) = orig - h;
  const double down = -std::log(clf.proba_with(e, x)[target]);
  return (up - down) / (2 * h);
}

TEST(BagEmbed, GradientMatchesFiniteDifferences) {
  // Only positions whose word occurs once: a repeated word's table row feeds
  // several positions, so its finite difference is the summed gradient.
  Rng rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    const auto clf = testing::random_classifier(50, 5, 3, 1000 + trial);
    std::vector<TokenId> ids(2 + uniform_index(rng, 6));
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(3 + i * 5 + uniform_index(rng, 5));
    const Sentence x(ids);
    const std::size_t m = 1 + uniform_index(rng, x.size());
    const ClassId t = uniform_index(rng, 3);
    const auto g = clf.grad_embedding(x, t, m);
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double fd = finite_difference(clf, x, t, x.word(m), j, 1e-5);
      ASSERT_NEAR(g[j], fd, 1e-7 + 1e-5 * std::abs(fd));
    }
  }
}

TEST(Invocations, CounterContract) {
  const auto clf = single_token();
  EXPECT_EQ(clf.invocation_count(), 0u);
  clf.predict_proba(Sentence{3});
  clf.predict_proba(Sentence{3});
  EXPECT_EQ(clf.invocation_count(), 2u);
  clf.target_loss(Sentence{3}, 0);
  clf.grad_embedding(Sentence{3}, 0, 1);
  EXPECT_EQ(clf.invocation_count(), 4u);
  clf.grad_from_proba(std::vector<double>{0.5, 0.5}, Sentence{3}, 0, 1);
  clf.proba_uncounted(Sentence{3});
  EXPECT_EQ(clf.invocation_count(), 4u);
  auto copy = clf;
  copy.reset_invocations();
  copy.predict_proba(Sentence{3});
  EXPECT_EQ(copy.invocation_count(), 1u);
  EXPECT_EQ(clf.invocation_count(), 4u);
}

TEST(Invocations, BatchParallelMatchesSerial) {
  const auto& world = testing::toy_world();
  const auto& clf = world.victim.classifier;
  const auto before = clf.invocation_count();
  const auto par = predict_batch(clf, world.corpus.test);
  const auto mid = clf.invocation_count();
  const auto ser = predict_batch_serial(clf, world.corpus.test);
  EXPECT_EQ(mid - before, world.corpus.test.size());
  EXPECT_EQ(clf.invocation_count() - mid, world.corpus.test.size());
  EXPECT_EQ(par, ser);
}

std::vector<LabeledExample> separable(std::size_t n, std::uint64_t seed) {
  // Class 0 uses tokens 3..7, class 1 uses 8..12.
  Rng rng(seed);
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const ClassId y = i % 2;
    std::vector<TokenId> ids(3 + uniform_index(rng, 4));
    for (auto& t : ids) t = static_cast<TokenId>(3 + 5 * y + uniform_index(rng, 5));
    out.push_back({Sentence(ids), y, 0});
  }
  return out;
}

TEST(Training, SeparableTaskReachesHighAccuracy) {
  const auto data = separable(200, 4);
  ClassifierTrainConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 200;
  cfg.seed = 2;
  const auto t = train_classifier(data, 2, 13, cfg);
  EXPECT_GE(t.train_accuracy, 0.99);
  EXPECT_EQ(accuracy(t.classifier, data), t.train_accuracy);
}

TEST(Training, DeterministicAndZeroEpochsIsInitialisation) {
  const auto data = separable(50, 8);
  ClassifierTrainConfig cfg;
  cfg.epochs = 30;
  cfg.seed = 5;
  const auto a = train_classifier(data, 2, 13, cfg);
  const auto b = train_classifier(data, 2, 13, cfg);
  EXPECT_TRUE(a.classifier.same_parameters(b.classifier));
  cfg.epochs = 0;
  const auto z = train_classifier(data, 2, 13, cfg);
  EXPECT_TRUE(z.classifier.same_parameters(BagEmbedClassifier::initialise(13, 2, cfg)));
}

TEST(Training, RejectsDegenerateData) {
  ClassifierTrainConfig cfg;
  EXPECT_THROW(train_classifier(std::vector<LabeledExample>{}, 2, 13, cfg), std::invalid_argument);
  std::vector<LabeledExample> one_class = {{Sentence{3}, 0, 0}, {Sentence{4}, 0, 0}};
  EXPECT_THROW(train_classifier(one_class, 2, 13, cfg), std::invalid_argument);
  std::vector<LabeledExample> bad_token = {{Sentence{30}, 0, 0}, {Sentence{4}, 1, 0}};
  EXPECT_THROW(train_classifier(bad_token, 2, 13, cfg), std::exception);
}

TEST(BagEmbed, SaveLoadRoundTrip) {
  const auto dir = testing::temp_dir("victim");
  const auto& clf = testing::toy_world().victim.classifier;
  clf.save(dir / "v.model");
  const auto back = BagEmbedClassifier::load(dir / "v.model");
  EXPECT_TRUE(back.same_parameters(clf));
  EXPECT_EQ(back.labels(), clf.labels());
  EXPECT_EQ(back.proba_uncounted(Sentence{5, 6, 7}), clf.proba_uncounted(Sentence{5, 6, 7}));
}

TEST(BagEmbed, ConstructorValidatesShapes) {
  EXPECT_THROW(BagEmbedClassifier(Matrix(4, 2), Matrix(2, 3), {0, 0}), std::invalid_argument);
  EXPECT_THROW(BagEmbedClassifier(Matrix(4, 2), Matrix(2, 2), {0}), std::invalid_argument);
  EXPECT_THROW(BagEmbedClassifier(Matrix(4, 2), Matrix(1, 2), {0}), std::invalid_argument);
}

}  // namespace
}  // namespace mha
