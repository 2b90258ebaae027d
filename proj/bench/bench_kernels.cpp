// Serial vs OpenMP timings for the hot loops: vocabulary scoring, batched
// prediction and whole campaigns. Run with OMP_NUM_THREADS to vary threads.
//
//   bench_kernels [vocab_size=20000] [repeats=20]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "mha/harness.hpp"
#include "mha/preselect.hpp"
#include "mha/random.hpp"
#include "mha/toy_corpus.hpp"

using namespace mha;

namespace {

template <class F>
double best_of(int repeats, F&& f) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const char* what, double serial, double parallel) {
  std::printf("%-34s %10.3f ms %10.3f ms %7.2fx\n", what, 1e3 * serial, 1e3 * parallel, serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t vocab_size = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 20000;
  const int repeats = argc > 2 ? std::atoi(argv[2]) : 20;
  std::printf("threads %d, vocabulary %zu, best of %d\n\n", omp_get_max_threads(), vocab_size, repeats);
  std::printf("%-34s %13s %13s %8s\n", "kernel", "serial", "parallel", "speedup");

  // Synthetic large vocabulary: random sentences, trigram LMs, random victim.
  std::vector<std::string> words;
  for (std::size_t i = kNumSpecials; i < vocab_size; ++i) words.push_back("w" + std::to_string(i));
  const auto vocab = Vocabulary::from_tokens(words);
  Rng rng(1);
  std::vector<Sentence> corpus;
  for (int s = 0; s < 50000; ++s) {
    std::vector<TokenId> ids(5 + uniform_index(rng, 10));
    for (auto& id : ids) id = static_cast<TokenId>(kNumSpecials + uniform_index(rng, vocab_size - kNumSpecials));
    corpus.emplace_back(ids);
  }
  const auto fwd = train_ngram(corpus, 3, 0.01, Direction::forward, vocab);
  const auto bwd = train_ngram(corpus, 3, 0.01, Direction::backward, vocab);
  const LmPair lms{fwd, bwd};
  ClassifierTrainConfig cc;
  cc.dim = 64;
  const auto clf = BagEmbedClassifier::initialise(vocab_size, 2, cc);

  const Sentence& x = corpus.front();
  const auto slot = replacement_slot(x, 2);
  const auto grad = clf.grad_from_proba(clf.proba_uncounted(x), x, 1, 2);
  const GradientContext gc{grad, clf.embeddings()};
  for (Mode mode : {Mode::black, Mode::white}) {
    const double s = best_of(repeats, [&] { score_vocabulary_serial(slot, mode, vocab_size, lms, &gc); });
    const double p = best_of(repeats, [&] { score_vocabulary(slot, mode, vocab_size, lms, &gc); });
    row(mode == Mode::black ? "score_vocabulary (black)" : "score_vocabulary (white)", s, p);
  }

  std::vector<LabeledExample> batch;
  for (std::size_t i = 0; i < 20000; ++i) batch.push_back({corpus[i], 0, 0});
  {
    const double s = best_of(repeats, [&] { predict_batch_serial(clf, batch); });
    const double p = best_of(repeats, [&] { predict_batch(clf, batch); });
    row("predict_batch (20000 sentences)", s, p);
  }

  // Whole campaigns on the toy task.
  const auto toy = make_toy_corpus();
  ClassifierTrainConfig tc;
  tc.seed = 11;
  const auto victim = train_classifier(toy.train, 2, toy.vocab.size(), tc, toy.labels).classifier;
  const auto tf = train_ngram(toy.lm_corpus, 3, 0.01, Direction::forward, toy.vocab);
  const auto tb = train_ngram(toy.lm_corpus, 3, 0.01, Direction::backward, toy.vocab);
  const AttackModels models{{tf, tb}, toy.vocab.size()};
  for (Attacker a : {Attacker::bmha, Attacker::wmha, Attacker::genetic}) {
    CampaignConfig cfg;
    cfg.attacker = a;
    cfg.sample_n = 100;
    cfg.seed = 5;
    cfg.forbidden_words = toy.forbidden;
    cfg.parallel = false;
    const double s = best_of(3, [&] { run_campaign(cfg, toy.test, models, victim); });
    cfg.parallel = true;
    const double p = best_of(3, [&] { run_campaign(cfg, toy.test, models, victim); });
    row(("campaign " + std::string(to_string(a)) + " (100 examples)").c_str(), s, p);
  }
  return 0;
}
