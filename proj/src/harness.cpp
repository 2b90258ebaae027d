#include "mha/harness.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "mha/random.hpp"

namespace mha {

using nlohmann::json;

// ------------------------------------------------------------------ datasets

namespace {

template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(where + ": malformed record (" + e.what() + ")");
    }
    if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string() ||
        !rec.contains("label") || !(rec["label"].is_string() || rec["label"].is_number_integer())) {
      throw std::runtime_error(where + ": malformed record (need string 'text' and 'label')");
    }
    if (rec.contains("premise") && !rec["premise"].is_string()) {
      throw std::runtime_error(where + ": malformed record ('premise' must be a string)");
    }
    fn(rec, where);
  }
}

std::string label_string(const json& v) {
  return v.is_string() ? v.get<std::string>() : std::to_string(v.get<long long>());
}

}  // namespace

std::vector<LabeledExample> load_dataset(const std::filesystem::path& path, const Vocabulary& vocab,
                                         std::span<const std::string> labels) {
  std::vector<LabeledExample> out;
  for_each_record(path, [&](const json& rec, const std::string& where) {
    const auto name = label_string(rec["label"]);
    const auto it = std::find(labels.begin(), labels.end(), name);
    if (it == labels.end()) throw std::runtime_error(where + ": unknown label '" + name + "'");
    LabeledExample ex;
    ex.label = static_cast<ClassId>(it - labels.begin());
    try {
      const Sentence text = tokenize(rec["text"].get<std::string>(), vocab);
      if (rec.contains("premise")) {
        const auto sep = vocab.find(kSeparatorToken);
        if (!sep) throw std::runtime_error("vocabulary has no " + std::string(kSeparatorToken) + " token");
        const Sentence premise = tokenize(rec["premise"].get<std::string>(), vocab);
        std::vector<TokenId> ids(premise.ids().begin(), premise.ids().end());
        ids.push_back(*sep);
        ex.protected_prefix = ids.size();
        ids.insert(ids.end(), text.ids().begin(), text.ids().end());
        ex.sentence = Sentence(std::move(ids));
      } else {
        ex.sentence = text;
      }
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
    out.push_back(std::move(ex));
  });
  return out;
}

std::vector<std::string> scan_labels(const std::filesystem::path& path) {
  std::set<std::string> names;
  for_each_record(path, [&](const json& rec, const std::string&) { names.insert(label_string(rec["label"])); });
  return {names.begin(), names.end()};
}

std::vector<std::string> scan_words(const std::filesystem::path& path) {
  std::vector<std::string> words;
  std::unordered_set<std::string> seen;
  auto take = [&](const std::string& text) {
    for (auto& w : split_words(text)) {
      if (seen.insert(w).second) words.push_back(w);
    }
  };
  bool pairs = false;
  for_each_record(path, [&](const json& rec, const std::string&) {
    if (rec.contains("premise")) {
      pairs = true;
      take(rec["premise"].get<std::string>());
    }
    take(rec["text"].get<std::string>());
  });
  if (pairs && seen.insert(std::string(kSeparatorToken)).second) words.emplace_back(kSeparatorToken);
  return words;
}

void save_dataset(const std::filesystem::path& path, std::span<const LabeledExample> data,
                  const Vocabulary& vocab, std::span<const std::string> labels) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  for (const auto& ex : data) {
    json rec;
    if (ex.protected_prefix > 0) {
      const auto ids = ex.sentence.ids();
      rec["premise"] = detokenize(Sentence(std::vector<TokenId>(ids.begin(), ids.begin() +
                                                                static_cast<std::ptrdiff_t>(ex.protected_prefix - 1))),
                                  vocab);
      rec["text"] = detokenize(Sentence(std::vector<TokenId>(
                                   ids.begin() + static_cast<std::ptrdiff_t>(ex.protected_prefix), ids.end())),
                               vocab);
    } else {
      rec["text"] = detokenize(ex.sentence, vocab);
    }
    rec["label"] = labels[ex.label];
    out << rec.dump() << '\n';
  }
}

// ----------------------------------------------------------------- campaign

std::string_view to_string(Attacker a) {
  switch (a) {
    case Attacker::bmha: return "bmha";
    case Attacker::wmha: return "wmha";
    case Attacker::genetic: return "genetic";
  }
  return "?";
}

Attacker parse_attacker(std::string_view s) {
  if (s == "bmha") return Attacker::bmha;
  if (s == "wmha") return Attacker::wmha;
  if (s == "genetic") return Attacker::genetic;
  throw std::invalid_argument("unknown attacker '" + std::string(s) + "' (expected bmha, wmha or genetic)");
}

ClassId choose_target(std::span<const double> proba, ClassId label) {
  if (proba.size() < 2) throw std::invalid_argument("choose_target: need at least two classes");
  if (proba.size() == 2) return label == 0 ? 1 : 0;
  const ClassId predicted = argmax(proba);
  ClassId best = predicted == 0 ? 1 : 0;
  for (ClassId k = 0; k < proba.size(); ++k) {
    if (k != predicted && proba[k] > proba[best]) best = k;
  }
  if (best == label) {
    // Runner-up coincides with the true label only when the prediction was
    // wrong; campaigns screen those out, but keep the contract total.
    best = predicted;
  }
  return best;
}

std::vector<std::size_t> forbidden_positions(const LabeledExample& example, const WordSet& forbidden) {
  std::vector<std::size_t> out;
  for (std::size_t m = 1; m <= example.sentence.size(); ++m) {
    if (m <= example.protected_prefix || forbidden.contains(example.sentence.word(m))) out.push_back(m);
  }
  return out;
}

void compute_aggregates(RunReport& r) {
  r.attacked = r.outcomes.size();
  r.successes = 0;
  r.total_invocations = 0;
  r.total_proposals = 0;
  r.total_accepted = 0;
  std::vector<std::uint64_t> inv;
  std::uint64_t success_inv = 0;
  double ppl_sum = 0.0;
  std::size_t ppl_n = 0;
  for (const auto& o : r.outcomes) {
    const auto& res = o.result;
    inv.push_back(res.invocations);
    r.total_invocations += res.invocations;
    r.total_proposals += res.proposals;
    r.total_accepted += res.accepted;
    if (res.success) {
      ++r.successes;
      success_inv += res.invocations;
      if (o.eval_ppl) {
        ppl_sum += *o.eval_ppl;
        ++ppl_n;
      }
    }
  }
  const auto n = static_cast<double>(r.attacked);
  r.success_rate = r.attacked ? static_cast<double>(r.successes) / n : 0.0;
  r.mean_invocations = r.attacked ? static_cast<double>(r.total_invocations) / n : 0.0;
  r.mean_invocations_success =
      r.successes ? static_cast<double>(success_inv) / static_cast<double>(r.successes) : 0.0;
  std::sort(inv.begin(), inv.end());
  if (inv.empty()) {
    r.median_invocations = 0.0;
  } else if (inv.size() % 2) {
    r.median_invocations = static_cast<double>(inv[inv.size() / 2]);
  } else {
    r.median_invocations =
        (static_cast<double>(inv[inv.size() / 2 - 1]) + static_cast<double>(inv[inv.size() / 2])) / 2.0;
  }
  r.acceptance_rate.reset();
  if (r.attacker != to_string(Attacker::genetic) && r.total_proposals > 0) {
    r.acceptance_rate = static_cast<double>(r.total_accepted) / static_cast<double>(r.total_proposals);
  }
  r.mean_eval_ppl.reset();
  if (ppl_n) r.mean_eval_ppl = ppl_sum / static_cast<double>(ppl_n);
}

RunReport run_campaign(const CampaignConfig& cfg, std::span<const LabeledExample> dataset,
                       const AttackModels& models, const BagEmbedClassifier& clf,
                       const LanguageModel* eval_lm) {
  const auto started = std::chrono::steady_clock::now();
  RunReport report;
  report.attacker = std::string(to_string(cfg.attacker));
  report.seed = cfg.seed;
  report.sample_n = cfg.sample_n;
  report.mh = cfg.mh;
  report.mh.mode = cfg.attacker == Attacker::wmha ? Mode::white : Mode::black;
  report.mh.forbidden_words.insert(cfg.forbidden_words.begin(), cfg.forbidden_words.end());
  report.mh.record_trace = cfg.record_trace;
  report.genetic = cfg.genetic;
  report.genetic.forbidden_words.insert(cfg.forbidden_words.begin(), cfg.forbidden_words.end());
  if (report.attacker == "genetic") {
    report.genetic.validate();
  } else {
    report.mh.effective().validate();
  }

  if (dataset.empty()) throw std::invalid_argument("run_campaign: empty dataset");
  const std::uint64_t before = clf.invocation_count();
  const auto screening = cfg.parallel ? predict_batch(clf, dataset) : predict_batch_serial(clf, dataset);
  report.screening_invocations = clf.invocation_count() - before;

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (argmax(screening[i]) == dataset[i].label) pool.push_back(i);
  }
  if (pool.empty()) throw std::runtime_error("run_campaign: no correctly classified examples");
  report.pool_size = pool.size();
  report.sample_saturated = cfg.sample_n > pool.size();
  Rng rng(derive_seed(cfg.seed, 0xC0FFEE));
  shuffle(rng, std::span<std::size_t>(pool));
  pool.resize(std::min(cfg.sample_n, pool.size()));
  std::sort(pool.begin(), pool.end());

  report.outcomes.resize(pool.size());
  std::vector<std::exception_ptr> errors(pool.size());
  const auto count = static_cast<std::ptrdiff_t>(pool.size());
  const ClassifierInterface& black_box = clf;

#pragma omp parallel for schedule(dynamic) if (cfg.parallel)
  for (std::ptrdiff_t k = 0; k < count; ++k) {
    const auto slot = static_cast<std::size_t>(k);
    try {
      const std::size_t idx = pool[slot];
      const LabeledExample& ex = dataset[idx];
      ExampleOutcome& o = report.outcomes[slot];
      o.example_index = idx;
      o.label = ex.label;
      o.target = choose_target(screening[idx], ex.label);
      o.seed = derive_seed(cfg.seed, idx);
      o.original = ex.sentence;
      AttackTask task{ex, o.target, {}};
      if (cfg.attacker == Attacker::genetic) {
        task.forbidden_positions = forbidden_positions(ex, report.genetic.forbidden_words);
        GeneticConfig g = report.genetic;
        g.seed = o.seed;
        o.result = run_genetic_attack(task, g, clf.embeddings(), models.lms.forward, black_box).attack;
      } else {
        task.forbidden_positions = forbidden_positions(ex, report.mh.forbidden_words);
        MHConfig m = report.mh;
        m.seed = o.seed;
        o.result = cfg.attacker == Attacker::wmha ? run_mh_attack(task, m, models, clf)
                                                  : run_mh_attack(task, m, models, black_box);
      }
      if (eval_lm) o.eval_ppl = sentence_perplexity(*eval_lm, o.result.final_sentence);
    } catch (...) {
      errors[slot] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  compute_aggregates(report);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

// -------------------------------------------------------------------- curves

std::vector<CurvePoint> invocation_success_curve(std::span<const AttackResult> results,
                                                 std::span<const std::uint64_t> budgets) {
  if (!std::is_sorted(budgets.begin(), budgets.end())) {
    throw std::invalid_argument("invocation_success_curve: budgets must be ascending");
  }
  std::vector<CurvePoint> out;
  out.reserve(budgets.size());
  for (std::uint64_t b : budgets) {
    std::size_t hits = 0;
    for (const auto& r : results) {
      if (r.success && r.invocations <= b) ++hits;
    }
    out.push_back({b, results.empty() ? 0.0
                                      : static_cast<double>(hits) / static_cast<double>(results.size())});
  }
  return out;
}

std::vector<CurvePoint> invocation_success_curve(const RunReport& report,
                                                 std::span<const std::uint64_t> budgets) {
  std::vector<AttackResult> results;
  results.reserve(report.outcomes.size());
  for (const auto& o : report.outcomes) results.push_back(o.result);
  return invocation_success_curve(results, budgets);
}

// ------------------------------------------------------ adversarial training

std::vector<LabeledExample> collect_adversarial_examples(const RunReport& report, std::size_t limit) {
  std::vector<LabeledExample> out;
  for (const auto& o : report.outcomes) {
    if (out.size() >= limit) break;
    if (!o.result.success) continue;
    out.push_back(LabeledExample{o.result.final_sentence, o.label, 0});
  }
  return out;
}

AdversarialTrainingResult adversarial_training(std::span<const LabeledExample> train,
                                               std::span<const LabeledExample> adversarial,
                                               std::span<const LabeledExample> test,
                                               std::size_t num_classes, std::size_t vocab_size,
                                               const ClassifierTrainConfig& cfg,
                                               std::vector<std::string> labels) {
  if (train.empty()) throw std::invalid_argument("adversarial_training: empty training set");
  if (test.empty()) throw std::invalid_argument("adversarial_training: empty test set");
  std::vector<LabeledExample> mixed(train.begin(), train.end());
  mixed.insert(mixed.end(), adversarial.begin(), adversarial.end());
  auto trained = train_classifier(mixed, num_classes, vocab_size, cfg, std::move(labels));
  const double clean = accuracy(trained.classifier, test);
  return AdversarialTrainingResult{std::move(trained.classifier), trained.train_accuracy, clean,
                                   mixed.size(), adversarial.size()};
}

}  // namespace mha
