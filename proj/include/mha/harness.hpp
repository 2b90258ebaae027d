#ifndef MHA_HARNESS_HPP
#define MHA_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mha/core.hpp"
#include "mha/genetic.hpp"
#include "mha/lm.hpp"
#include "mha/sampler.hpp"
#include "mha/victim.hpp"

namespace mha {

/// Token placed between premise and hypothesis for pair records.
inline constexpr std::string_view kSeparatorToken = "<sep>";

/// Reads line-delimited JSON records {"text": ..., "label": ...} with an
/// optional "premise". Labels are matched against `labels` by name. Blank
/// lines are skipped; malformed records raise an error naming the line.
std::vector<LabeledExample> load_dataset(const std::filesystem::path& path, const Vocabulary& vocab,
                                         std::span<const std::string> labels);

/// Sorted distinct label names found in a dataset file.
std::vector<std::string> scan_labels(const std::filesystem::path& path);

/// Every surface word in a dataset file (text and premise), first-seen order.
std::vector<std::string> scan_words(const std::filesystem::path& path);

void save_dataset(const std::filesystem::path& path, std::span<const LabeledExample> data,
                  const Vocabulary& vocab, std::span<const std::string> labels);

enum class Attacker { bmha, wmha, genetic };

std::string_view to_string(Attacker a);
Attacker parse_attacker(std::string_view s);

struct CampaignConfig {
  Attacker attacker = Attacker::bmha;
  MHConfig mh;
  GeneticConfig genetic;
  std::size_t sample_n = 200;
  std::uint64_t seed = 0;
  WordSet forbidden_words;
  bool parallel = true;
  bool record_trace = false;
};

struct ExampleOutcome {
  std::size_t example_index = 0;  // index into the campaign dataset
  ClassId label = 0;
  ClassId target = 0;
  std::uint64_t seed = 0;
  Sentence original;
  AttackResult result;
  std::optional<double> eval_ppl;  // of the final sentence, when an eval LM is given
};

struct CurvePoint {
  std::uint64_t budget = 0;
  double success = 0.0;
};

struct RunReport {
  std::string attacker;
  std::uint64_t seed = 0;
  std::size_t sample_n = 0;
  std::size_t pool_size = 0;          // correctly classified examples
  bool sample_saturated = false;      // sample_n exceeded the pool
  std::uint64_t screening_invocations = 0;
  // Configuration echo.
  MHConfig mh;
  GeneticConfig genetic;

  std::vector<ExampleOutcome> outcomes;

  // Aggregates; see compute_aggregates().
  std::size_t attacked = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  double mean_invocations = 0.0;
  double median_invocations = 0.0;
  double mean_invocations_success = 0.0;
  std::uint64_t total_invocations = 0;  // attack invocations, excludes screening
  std::size_t total_proposals = 0;
  std::size_t total_accepted = 0;
  std::optional<double> acceptance_rate;  // M-H runs only
  std::optional<double> mean_eval_ppl;    // over successful outputs

  double wall_clock_seconds = 0.0;  // not serialised unless requested
};

/// Recomputes every aggregate from the per-example outcomes.
void compute_aggregates(RunReport& report);

/// Filters to correctly classified examples, samples sample_n of them, sets
/// targets (binary: the other class, multiclass: runner-up of the original
/// prediction) and attacks each with a derived seed. Results are kept in
/// sample order whatever the execution schedule.
RunReport run_campaign(const CampaignConfig& cfg, std::span<const LabeledExample> dataset,
                       const AttackModels& models, const BagEmbedClassifier& clf,
                       const LanguageModel* eval_lm = nullptr);

/// Target policy used by run_campaign.
ClassId choose_target(std::span<const double> proba, ClassId label);

/// Positions locked for an example: its protected prefix plus every position
/// holding a forbidden word.
std::vector<std::size_t> forbidden_positions(const LabeledExample& example, const WordSet& forbidden);

/// Point b = fraction of results that succeeded within b invocations.
std::vector<CurvePoint> invocation_success_curve(std::span<const AttackResult> results,
                                                 std::span<const std::uint64_t> budgets);
std::vector<CurvePoint> invocation_success_curve(const RunReport& report,
                                                 std::span<const std::uint64_t> budgets);

/// Successful adversarial outputs relabelled with their original labels, in
/// report order, at most `limit`.
std::vector<LabeledExample> collect_adversarial_examples(const RunReport& report, std::size_t limit = 250);

struct AdversarialTrainingResult {
  BagEmbedClassifier classifier;
  double train_accuracy = 0.0;
  double clean_accuracy = 0.0;  // on the supplied test set
  std::size_t train_size = 0;
  std::size_t adversarial_count = 0;
};

/// Retrains the victim from scratch on train + adversarial (original labels).
AdversarialTrainingResult adversarial_training(std::span<const LabeledExample> train,
                                               std::span<const LabeledExample> adversarial,
                                               std::span<const LabeledExample> test,
                                               std::size_t num_classes, std::size_t vocab_size,
                                               const ClassifierTrainConfig& cfg,
                                               std::vector<std::string> labels = {});

}  // namespace mha

#endif  // MHA_HARNESS_HPP
