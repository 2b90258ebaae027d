#include "mha/toy_corpus.hpp"

#include <array>

#include "mha/random.hpp"

namespace mha {

namespace {

using Words = std::vector<std::string>;

struct CueSlot {
  Words neg;
  Words pos;
  Words neutral;
  double present;       // probability the slot appears at all
  double cue_fraction;  // probability a present slot carries a cue word
};

const Words kDeterminers = {"the", "this", "that", "a"};
const Words kVerbs = {"was", "is", "seemed", "felt", "looked"};
const std::array<Words, 2> kSentiment = {Words{"bad", "awful", "dull", "poor"},
                                         Words{"good", "great", "fine", "lovely"}};

const CueSlot kAdjective{{"old", "cheap"}, {"new", "classic"}, {}, 0.35, 1.0};
const CueSlot kNoun{{"plot", "script"}, {"cast", "music"}, {"film", "movie", "show"}, 1.0, 0.6};
const CueSlot kIntensifier{{"rather", "quite"}, {"truly", "really"}, {"very", "so"}, 1.0, 0.6};
const CueSlot kTail{{"though", "anyway"}, {"overall", "indeed"}, {"today", "again"}, 1.0, 0.6};

const std::string& pick(Rng& rng, const Words& w) { return w[uniform_index(rng, w.size())]; }

/// Fills one cue slot. `lean` is the class the cue leans to, or -1 for a
/// label-independent draw.
void fill(Rng& rng, const CueSlot& slot, int lean, double bias, Words& out) {
  if (uniform01(rng) >= slot.present) return;
  if (slot.neutral.empty() || uniform01(rng) < slot.cue_fraction) {
    int side = 0;
    if (lean < 0) {
      side = uniform01(rng) < 0.5 ? 1 : 0;
    } else {
      side = uniform01(rng) < bias ? lean : 1 - lean;
    }
    out.push_back(pick(rng, side ? slot.pos : slot.neg));
  } else {
    out.push_back(pick(rng, slot.neutral));
  }
}

Words sentence(Rng& rng, int label, bool labelled, double bias) {
  for (;;) {
    Words w;
    const int lean = labelled ? label : -1;
    w.push_back(pick(rng, kDeterminers));
    fill(rng, kAdjective, lean, bias, w);
    fill(rng, kNoun, lean, bias, w);
    w.push_back(pick(rng, kVerbs));
    fill(rng, kIntensifier, lean, bias, w);
    w.push_back(pick(rng, kSentiment[static_cast<std::size_t>(label)]));
    fill(rng, kTail, lean, bias, w);
    if (uniform01(rng) < 0.5) w.emplace_back(".");
    if (w.size() >= 5 && w.size() <= 8) return w;
  }
}

Sentence to_sentence(const Words& words, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (const auto& w : words) ids.push_back(vocab.lookup(w));
  return Sentence(std::move(ids));
}

}  // namespace

ToyCorpus make_toy_corpus(const ToyCorpusConfig& cfg) {
  ToyCorpus c;
  c.labels = {"neg", "pos"};
  auto add_all = [&](const Words& ws) {
    for (const auto& w : ws) c.vocab.add(w);
  };
  add_all(kDeterminers);
  for (const CueSlot* s : {&kAdjective, &kNoun, &kIntensifier, &kTail}) {
    add_all(s->neg);
    add_all(s->pos);
    add_all(s->neutral);
  }
  add_all(kVerbs);
  for (const auto& side : kSentiment) {
    add_all(side);
    for (const auto& w : side) {
      c.forbidden_tokens.push_back(w);
      c.forbidden.insert(c.vocab.lookup(w));
    }
  }
  c.vocab.add(".");

  Rng rng(cfg.seed);
  auto labelled = [&](std::size_t n) {
    std::vector<LabeledExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int label = static_cast<int>(i % 2);
      out.push_back({to_sentence(sentence(rng, label, true, cfg.cue_bias), c.vocab),
                     static_cast<ClassId>(label), 0});
    }
    return out;
  };
  auto unlabelled = [&](std::size_t n) {
    std::vector<Sentence> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int label = uniform01(rng) < 0.5 ? 1 : 0;
      out.push_back(to_sentence(sentence(rng, label, false, cfg.cue_bias), c.vocab));
    }
    return out;
  };
  c.train = labelled(cfg.train_size);
  c.test = labelled(cfg.test_size);
  c.lm_corpus = unlabelled(cfg.lm_size);
  c.heldout = unlabelled(cfg.heldout_size);
  return c;
}

}  // namespace mha
