#ifndef MHA_TOY_CORPUS_HPP
#define MHA_TOY_CORPUS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "mha/core.hpp"
#include "mha/preselect.hpp"

namespace mha {

// A two-class review-like language of 5-8 word sentences over a ~40 word
// vocabulary. Each sentence has one sentiment word (decisive for the label,
// and forbidden to attackers) and up to four "cue" slots whose word choice
// leans towards the label with probability cue_bias. The unlabelled LM and
// held-out corpora draw cue words independently of sentiment, so swapping
// cue words within a slot keeps a sentence fluent.
struct ToyCorpusConfig {
  std::size_t train_size = 2000;
  std::size_t test_size = 1000;
  std::size_t lm_size = 20000;
  std::size_t heldout_size = 5000;
  double cue_bias = 0.8;
  std::uint64_t seed = 7;
};

struct ToyCorpus {
  Vocabulary vocab;
  std::vector<std::string> labels;  // {"neg", "pos"}
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
  std::vector<Sentence> lm_corpus;  // unlabelled, for the attack LMs
  std::vector<Sentence> heldout;    // unlabelled, for the evaluation LM
  std::vector<std::string> forbidden_tokens;
  WordSet forbidden;
};

ToyCorpus make_toy_corpus(const ToyCorpusConfig& cfg = {});

}  // namespace mha

#endif  // MHA_TOY_CORPUS_HPP
