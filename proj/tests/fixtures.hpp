#ifndef MHA_TESTS_FIXTURES_HPP
#define MHA_TESTS_FIXTURES_HPP

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mha/harness.hpp"
#include "mha/lm.hpp"
#include "mha/toy_corpus.hpp"
#include "mha/victim.hpp"

namespace mha::testing {

// Trained toy victim plus attack and evaluation LMs. Built once per process.
struct ToyWorld {
  ToyCorpus corpus;
  ClassifierTrainConfig train_cfg;
  TrainedClassifier victim;
  NGramLM forward;
  NGramLM backward;
  NGramLM eval;

  ToyWorld()
      : corpus(make_toy_corpus()),
        train_cfg(victim_config()),
        victim(train_classifier(corpus.train, 2, corpus.vocab.size(), train_cfg, corpus.labels)),
        forward(train_ngram(corpus.lm_corpus, 3, 0.01, Direction::forward, corpus.vocab)),
        backward(train_ngram(corpus.lm_corpus, 3, 0.01, Direction::backward, corpus.vocab)),
        eval(train_ngram(corpus.heldout, 3, 0.01, Direction::forward, corpus.vocab)) {}

  ToyWorld(const ToyWorld&) = delete;
  ToyWorld& operator=(const ToyWorld&) = delete;

  static ClassifierTrainConfig victim_config() {
    ClassifierTrainConfig c;
    c.dim = 8;
    c.epochs = 200;
    c.learning_rate = 0.3;
    c.seed = 11;
    return c;
  }

  AttackModels models() const { return AttackModels{{forward, backward}, corpus.vocab.size()}; }

  CampaignConfig campaign(Attacker a, std::size_t n, std::uint64_t seed) const {
    CampaignConfig c;
    c.attacker = a;
    c.sample_n = n;
    c.seed = seed;
    c.forbidden_words = corpus.forbidden;
    return c;
  }
};

inline const ToyWorld& toy_world() {
  static const ToyWorld world;
  return world;
}

// Random classifier with explicit shapes, for gradient and accounting checks.
inline BagEmbedClassifier random_classifier(std::size_t vocab, std::size_t dim, std::size_t classes,
                                            std::uint64_t seed, double scale = 1.0) {
  ClassifierTrainConfig c;
  c.dim = dim;
  c.seed = seed;
  c.init_scale = scale;
  auto clf = BagEmbedClassifier::initialise(vocab, classes, c);
  // initialise() leaves the bias at zero; give it some spread too.
  std::mt19937_64 rng(seed ^ 0x5eed);
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> b(classes);
  for (auto& v : b) v = u(rng);
  return BagEmbedClassifier(clf.embeddings(), clf.weights(), b);
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mha_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace mha::testing

#endif  // MHA_TESTS_FIXTURES_HPP
