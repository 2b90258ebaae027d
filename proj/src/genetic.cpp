#include "mha/genetic.hpp"

#include <algorithm>
#include <stdexcept>

namespace mha {

void GeneticConfig::validate() const {
  if (population_size < 2) throw std::invalid_argument("GeneticConfig: population size must be >= 2");
  if (neighbors < 1) throw std::invalid_argument("GeneticConfig: neighbours must be >= 1");
  if (lm_filter_top < 1) throw std::invalid_argument("GeneticConfig: lm_filter_top must be >= 1");
}

std::vector<TokenId> nearest_neighbors(const Matrix& embeddings, TokenId word, std::size_t count,
                                       const WordSet* excluded) {
  if (word >= embeddings.rows) throw std::out_of_range("nearest_neighbors: token outside table");
  const auto origin = embeddings.row(word);
  std::vector<std::pair<double, TokenId>> dist;
  for (std::size_t i = kNumSpecials; i < embeddings.rows; ++i) {
    const auto id = static_cast<TokenId>(i);
    if (id == word || (excluded && excluded->contains(id))) continue;
    const auto row = embeddings.row(i);
    double d2 = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) d2 += (row[j] - origin[j]) * (row[j] - origin[j]);
    dist.emplace_back(d2, id);
  }
  const std::size_t keep = std::min(count, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(keep), dist.end());
  std::vector<TokenId> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(dist[i].second);
  return out;
}

Sentence mutate(const Sentence& x, const std::vector<bool>& locked, const Matrix& embeddings,
                const LanguageModel& lm_forward, const GeneticConfig& cfg, Rng& rng) {
  if (x.empty()) throw std::invalid_argument("mutate: empty sentence");
  if (!locked.empty() && locked.size() != x.size()) throw std::invalid_argument("mutate: mask size");
  std::vector<std::size_t> open;
  for (std::size_t m = 1; m <= x.size(); ++m) {
    if (locked.empty() || !locked[m - 1]) open.push_back(m);
  }
  if (open.empty()) throw std::invalid_argument("mutate: no eligible position");
  const std::size_t m = open[uniform_index(rng, open.size())];

  auto neighbours = nearest_neighbors(embeddings, x.word(m), cfg.neighbors, &cfg.forbidden_words);
  if (neighbours.empty()) return x;
  if (cfg.lm_filter_top < neighbours.size()) {
    const auto prefix = x.prefix(m);
    std::vector<std::pair<double, TokenId>> scored;
    for (TokenId w : neighbours) scored.emplace_back(lm_forward.cond_logprob(w, prefix), w);
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    neighbours.clear();
    for (std::size_t i = 0; i < cfg.lm_filter_top; ++i) neighbours.push_back(scored[i].second);
  }
  return replace_word(x, m, neighbours[uniform_index(rng, neighbours.size())]);
}

Sentence crossover(const Sentence& a, const Sentence& b, Rng& rng) {
  if (a.size() != b.size()) throw std::invalid_argument("crossover: length mismatch");
  std::vector<TokenId> ids(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) ids[i] = uniform01(rng) < 0.5 ? a[i] : b[i];
  return Sentence(std::move(ids));
}

GeneticResult run_genetic_attack(const AttackTask& task, const GeneticConfig& cfg,
                                 const Matrix& embeddings, const LanguageModel& lm_forward,
                                 const ClassifierInterface& clf) {
  cfg.validate();
  task.validate(clf.num_classes());
  const ClassId target = task.target_label;
  const Sentence& original = task.example.sentence;
  Rng rng(cfg.seed);

  GeneticResult out;
  AttackResult& res = out.attack;
  res.final_sentence = original;
  auto query = [&](const Sentence& s) {
    ++res.invocations;
    return clf.predict_proba(s);
  };
  if (argmax(query(original)) == target) {
    res.success = true;
    return out;
  }

  std::vector<bool> locked(original.size(), false);
  for (std::size_t p : task.forbidden_positions) locked[p - 1] = true;

  const std::size_t g = cfg.population_size;
  std::vector<Sentence> population;
  population.reserve(g);
  for (std::size_t i = 0; i < g; ++i) {
    population.push_back(mutate(original, locked, embeddings, lm_forward, cfg, rng));
  }

  std::vector<double> fitness(g);
  for (std::size_t gen = 0; gen < cfg.max_generations; ++gen) {
    if (cfg.max_invocations && res.invocations + g > cfg.max_invocations) break;
    std::size_t winner = g;
    for (std::size_t i = 0; i < g; ++i) {
      const auto p = query(population[i]);
      fitness[i] = p[target];
      if (winner == g && argmax(p) == target) winner = i;
    }
    res.proposals = gen + 1;
    const std::size_t elite =
        static_cast<std::size_t>(std::max_element(fitness.begin(), fitness.end()) - fitness.begin());
    out.generations.push_back({gen, fitness[elite], res.invocations});
    if (winner != g) {
      res.success = true;
      res.final_sentence = population[winner];
      return out;
    }
    res.final_sentence = population[elite];

    std::vector<Sentence> next;
    next.reserve(g);
    next.push_back(population[elite]);
    double total = 0.0;
    for (double f : fitness) total += f;
    std::vector<double> weights = fitness;
    if (!(total > 0.0)) std::fill(weights.begin(), weights.end(), 1.0);
    while (next.size() < g) {
      const std::size_t a = sample_weighted(rng, weights);
      const std::size_t b = sample_weighted(rng, weights);
      const Sentence child = crossover(population[a], population[b], rng);
      next.push_back(mutate(child, locked, embeddings, lm_forward, cfg, rng));
    }
    population = std::move(next);
  }
  return out;
}

}  // namespace mha
