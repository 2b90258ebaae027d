#ifndef MHA_GENETIC_HPP
#define MHA_GENETIC_HPP

#include <cstdint>
#include <vector>

#include "mha/core.hpp"
#include "mha/lm.hpp"
#include "mha/preselect.hpp"
#include "mha/random.hpp"
#include "mha/sampler.hpp"
#include "mha/victim.hpp"

namespace mha {

// Simplified population-based baseline: nearest-embedding word swaps
// filtered by a forward LM, fitness C(target|x), elite of one,
// fitness-proportional parents.
struct GeneticConfig {
  std::size_t population_size = 20;
  std::size_t max_generations = 20;
  std::size_t neighbors = 8;
  std::size_t lm_filter_top = 4;
  std::uint64_t seed = 0;
  std::uint64_t max_invocations = 0;  // 0 = unlimited
  WordSet forbidden_words;

  void validate() const;
};

/// The `count` vocabulary words closest to E[word] by Euclidean distance,
/// ascending distance then ascending id. Excludes `word`, specials and
/// `excluded`.
std::vector<TokenId> nearest_neighbors(const Matrix& embeddings, TokenId word, std::size_t count,
                                       const WordSet* excluded = nullptr);

/// Swaps one uniformly chosen unlocked position for a uniformly chosen word
/// among the LM-filtered embedding neighbours. `locked` may be empty.
Sentence mutate(const Sentence& x, const std::vector<bool>& locked, const Matrix& embeddings,
                const LanguageModel& lm_forward, const GeneticConfig& cfg, Rng& rng);

/// Uniform crossover: each position from a or b with probability 1/2.
Sentence crossover(const Sentence& a, const Sentence& b, Rng& rng);

/// Per-generation record, kept for invariant checks.
struct GenerationStats {
  std::size_t generation = 0;
  double elite_fitness = 0.0;
  std::uint64_t invocations = 0;  // cumulative
};

struct GeneticResult {
  AttackResult attack;
  std::vector<GenerationStats> generations;
};

GeneticResult run_genetic_attack(const AttackTask& task, const GeneticConfig& cfg,
                                 const Matrix& embeddings, const LanguageModel& lm_forward,
                                 const ClassifierInterface& clf);

}  // namespace mha

#endif  // MHA_GENETIC_HPP
