// mha: train models, run attack campaigns and summarise the results.
//
// Every flag can also come from a plain-text file given with --config, one
// `key: value` per line ("seed: 3", "mode: wmha", "trace: true"). Keys under a
// `[subcommand]` header only apply to that subcommand. Flags on the command
// line win over the file.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mha/harness.hpp"
#include "mha/lm.hpp"
#include "mha/report.hpp"
#include "mha/toy_corpus.hpp"
#include "mha/victim.hpp"

namespace fs = std::filesystem;
using namespace mha;

namespace {

// ------------------------------------------------------------ config file

struct ConfigArgs {
  std::string path;
  std::vector<std::string> rest;  // argv without --config
};

ConfigArgs take_config_flag(int argc, char** argv) {
  ConfigArgs out;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) {
      out.path = argv[++i];
    } else if (a.rfind("--config=", 0) == 0) {
      out.path = a.substr(9);
    } else {
      out.rest.push_back(a);
    }
  }
  return out;
}

// Rewrites the config file as `--key=value` arguments placed right after the
// subcommand name, so anything typed later on the command line overrides it.
// Keys that only some other subcommand understands are skipped; keys nobody
// understands are an error.
std::vector<std::string> expand_config(const ConfigArgs& args, CLI::App& app) {
  if (args.path.empty()) return args.rest;
  std::ifstream in(args.path);
  if (!in) throw std::runtime_error("cannot open config file " + args.path);
  CLI::ConfigBase parser;
  parser.valueSeparator(':');
  const auto items = parser.from_config(in);

  std::vector<std::string> out = args.rest;
  const auto sub = std::find_if(out.begin(), out.end(), [](const std::string& s) { return s[0] != '-'; });
  if (sub == out.end()) return out;
  const std::string command = *sub;
  const CLI::App* chosen = app.get_subcommand_no_throw(command);
  auto knows = [](const CLI::App* a, const std::string& name) {
    return a != nullptr && a->get_option_no_throw("--" + name) != nullptr;
  };
  std::vector<std::string> injected;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    if (!item.parents.empty() && item.parents.front() != command) continue;
    if (!knows(&app, item.name) && !knows(chosen, item.name)) {
      bool elsewhere = false;
      for (const auto* s : app.get_subcommands({})) elsewhere = elsewhere || knows(s, item.name);
      if (!elsewhere) throw std::runtime_error("unknown config key '" + item.name + "' in " + args.path);
      continue;
    }
    std::string value;
    for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
    injected.push_back("--" + item.name + "=" + value);
  }
  out.insert(sub + 1, injected.begin(), injected.end());
  return out;
}

// ---------------------------------------------------------------- helpers

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// Plain text, one sentence per line, or a .jsonl dataset (its text fields).
std::vector<std::string> corpus_texts(const fs::path& p) {
  std::vector<std::string> texts;
  const bool jsonl = p.extension() == ".jsonl";
  for (const auto& line : read_lines(p)) {
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!jsonl) {
      texts.push_back(line);
      continue;
    }
    const auto j = nlohmann::json::parse(line);
    if (j.contains("premise")) texts.push_back(j["premise"].get<std::string>());
    texts.push_back(j.at("text").get<std::string>());
  }
  return texts;
}

WordSet load_forbidden(const fs::path& p, const Vocabulary& vocab) {
  WordSet out;
  if (p.empty()) return out;
  std::size_t unknown = 0;
  for (const auto& line : read_lines(p)) {
    const auto words = split_words(line);
    if (words.empty()) continue;
    if (const auto id = vocab.find(words.front())) {
      out.insert(*id);
    } else {
      ++unknown;
    }
  }
  if (unknown) std::fprintf(stderr, "note: %zu forbidden word(s) not in the vocabulary\n", unknown);
  return out;
}

std::vector<std::string> victim_labels(const BagEmbedClassifier& clf, const fs::path& dataset) {
  if (!clf.labels().empty()) return clf.labels();
  return scan_labels(dataset);
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

// ---------------------------------------------------------------- options

struct CoreOptions {
  std::string mode = "bmha";
  std::size_t max_proposals = 200;
  std::size_t candidates = 30;
  double pr = 0.5, pi = 0.25, pd = 0.25;
  double tlm = 0.8, tc = 0.9;
  std::uint64_t seed = 0;
  std::string forbidden;
  std::string dataset;
  std::string out = ".";
};

struct PathOptions {
  std::string vocab;
  std::string victim;
  std::string lm_forward;
  std::string lm_backward;
  std::string eval_lm;
  std::string test;
  std::string report;
};

struct AttackOptions {
  std::size_t n = 200;
  bool trace = false;
  bool timing = false;
  bool serial = false;
  std::size_t population = 20;
  std::size_t generations = 20;
  std::size_t neighbors = 8;
  std::size_t lm_filter = 4;
  std::uint64_t max_invocations = 0;
};

struct LmOptions {
  int order = 3;
  double k = 0.01;
  std::string name = "lm";
};

struct TrainOptions {
  ClassifierTrainConfig cfg = [] {
    ClassifierTrainConfig c;
    c.seed = 11;
    return c;
  }();
  std::size_t limit = 250;
};

void add_train_flags(CLI::App* app, TrainOptions& t) {
  app->add_option("--dim", t.cfg.dim, "Embedding size")->capture_default_str();
  app->add_option("--epochs", t.cfg.epochs, "Full-batch gradient steps")->capture_default_str();
  app->add_option("--lr", t.cfg.learning_rate, "Learning rate")->capture_default_str();
  app->add_option("--init-scale", t.cfg.init_scale)->capture_default_str();
}

// ------------------------------------------------------------ subcommands

int cmd_make_toy(const CoreOptions& core) {
  ToyCorpusConfig tc;
  tc.seed = core.seed ? core.seed : tc.seed;
  const auto toy = make_toy_corpus(tc);
  const fs::path dir = core.out;
  fs::create_directories(dir);
  toy.vocab.save(dir / "vocab.txt");
  save_dataset(dir / "train.jsonl", toy.train, toy.vocab, toy.labels);
  save_dataset(dir / "test.jsonl", toy.test, toy.vocab, toy.labels);
  auto dump = [&](const char* name, const std::vector<Sentence>& xs) {
    std::string s;
    for (const auto& x : xs) s += detokenize(x, toy.vocab) + "\n";
    write_text(dir / name, s);
  };
  dump("lm.txt", toy.lm_corpus);
  dump("heldout.txt", toy.heldout);
  std::string f;
  for (const auto& w : toy.forbidden_tokens) f += w + "\n";
  write_text(dir / "forbidden.txt", f);
  std::printf("wrote toy corpus to %s (vocab %zu, train %zu, test %zu)\n", dir.c_str(), toy.vocab.size(),
              toy.train.size(), toy.test.size());
  return 0;
}

int cmd_train_lm(const CoreOptions& core, const PathOptions& paths, const LmOptions& lm) {
  if (core.dataset.empty()) throw std::runtime_error("train-lm needs --dataset (text or .jsonl)");
  const fs::path dir = core.out;
  fs::create_directories(dir);
  const auto texts = corpus_texts(core.dataset);
  Vocabulary vocab;
  if (!paths.vocab.empty()) {
    vocab = Vocabulary::load(paths.vocab);
  } else {
    for (const auto& t : texts) {
      for (const auto& w : split_words(t)) vocab.add(w);
    }
    vocab.save(dir / "vocab.txt");
    std::printf("built vocabulary of %zu tokens -> %s\n", vocab.size(), (dir / "vocab.txt").c_str());
  }
  std::vector<Sentence> corpus;
  corpus.reserve(texts.size());
  for (const auto& t : texts) {
    auto x = tokenize(t, vocab);
    if (!x.empty()) corpus.push_back(std::move(x));
  }
  for (Direction d : {Direction::forward, Direction::backward}) {
    const auto model = train_ngram(corpus, lm.order, lm.k, d, vocab);
    const fs::path p = dir / (lm.name + "." + std::string(to_string(d)) + ".txt");
    model.save(p);
    std::printf("%s model: order %d, k %g, %zu sentences", to_string(d).data(), lm.order, lm.k, corpus.size());
    if (d == Direction::forward) std::printf(", train PPL %.3f", perplexity(model, corpus));
    std::printf(" -> %s\n", p.c_str());
  }
  return 0;
}

int cmd_train_victim(const CoreOptions& core, const PathOptions& paths, TrainOptions t) {
  if (core.dataset.empty() || paths.vocab.empty()) {
    throw std::runtime_error("train-victim needs --dataset and --vocab");
  }
  const auto vocab = Vocabulary::load(paths.vocab);
  const auto labels = scan_labels(core.dataset);
  const auto train = load_dataset(core.dataset, vocab, labels);
  if (core.seed) t.cfg.seed = core.seed;
  const auto r = train_classifier(train, labels.size(), vocab.size(), t.cfg, labels);
  const fs::path dir = core.out;
  fs::create_directories(dir);
  r.classifier.save(dir / "victim.txt");
  std::printf("victim: %zu examples, %zu classes, train acc %.4f, loss %.4f", train.size(), labels.size(),
              r.train_accuracy, r.final_loss);
  if (!paths.test.empty()) {
    const auto test = load_dataset(paths.test, vocab, labels);
    std::printf(", test acc %.4f", accuracy(r.classifier, test));
  }
  std::printf(" -> %s\n", (dir / "victim.txt").c_str());
  return 0;
}

CampaignConfig campaign_config(const CoreOptions& core, const AttackOptions& a, const WordSet& forbidden) {
  CampaignConfig c;
  c.attacker = parse_attacker(core.mode);
  c.sample_n = a.n;
  c.seed = core.seed;
  c.forbidden_words = forbidden;
  c.parallel = !a.serial;
  c.record_trace = a.trace;
  c.mh.max_proposals = core.max_proposals;
  c.mh.candidates = core.candidates;
  c.mh.p_replace = core.pr;
  c.mh.p_insert = core.pi;
  c.mh.p_delete = core.pd;
  c.mh.t_lm = core.tlm;
  c.mh.t_c = core.tc;
  c.genetic.population_size = a.population;
  c.genetic.max_generations = a.generations;
  c.genetic.neighbors = a.neighbors;
  c.genetic.lm_filter_top = a.lm_filter;
  c.genetic.max_invocations = a.max_invocations;
  return c;
}

void print_summary(const RunReport& r) {
  std::printf("%-8s attacked %zu (pool %zu%s)  success %.3f  mean inv %.1f  median inv %.1f", r.attacker.c_str(),
              r.attacked, r.pool_size, r.sample_saturated ? ", saturated" : "", r.success_rate,
              r.mean_invocations, r.median_invocations);
  if (r.acceptance_rate) std::printf("  acceptance %.3f", *r.acceptance_rate);
  if (r.mean_eval_ppl) std::printf("  eval PPL %.2f", *r.mean_eval_ppl);
  std::printf("  screening %llu\n", static_cast<unsigned long long>(r.screening_invocations));
}

int cmd_attack(const CoreOptions& core, const PathOptions& paths, const AttackOptions& a) {
  for (const auto* req : {&core.dataset, &paths.vocab, &paths.victim, &paths.lm_forward, &paths.lm_backward}) {
    if (req->empty()) {
      throw std::runtime_error("attack needs --dataset, --vocab, --victim, --lm-forward and --lm-backward");
    }
  }
  const auto vocab = Vocabulary::load(paths.vocab);
  const auto clf = BagEmbedClassifier::load(paths.victim);
  const auto data = load_dataset(core.dataset, vocab, victim_labels(clf, core.dataset));
  const auto fwd = NGramLM::load(paths.lm_forward);
  const auto bwd = NGramLM::load(paths.lm_backward);
  std::optional<NGramLM> eval;
  if (!paths.eval_lm.empty()) eval = NGramLM::load(paths.eval_lm);
  const auto cfg = campaign_config(core, a, load_forbidden(core.forbidden, vocab));

  const auto t0 = std::chrono::steady_clock::now();
  auto r = run_campaign(cfg, data, AttackModels{{fwd, bwd}, vocab.size()}, clf, eval ? &*eval : nullptr);
  r.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ReportOptions opts;
  opts.write_trace = a.trace;
  opts.include_timing = a.timing;
  opts.vocab = &vocab;
  const auto files = write_report(r, core.out, opts);
  print_summary(r);
  std::printf("wrote %s, %s%s%s\n", files.report.c_str(), files.curve.c_str(), files.trace ? ", " : "",
              files.trace ? files.trace->c_str() : "");
  return 0;
}

std::vector<std::uint64_t> parse_budgets(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(std::stoull(item));
  }
  return out;
}

int cmd_curve(const PathOptions& paths, const std::string& budgets, const std::string& out) {
  if (paths.report.empty()) throw std::runtime_error("curve needs --report");
  const auto r = read_report(paths.report);
  const auto b = budgets.empty() ? default_budgets(r) : parse_budgets(budgets);
  const auto curve = invocation_success_curve(r, b);
  if (!out.empty()) {
    write_curve_csv(out, curve);
    std::printf("wrote %s\n", out.c_str());
    return 0;
  }
  std::printf("budget,success\n");
  for (const auto& p : curve) std::printf("%llu,%.6f\n", static_cast<unsigned long long>(p.budget), p.success);
  return 0;
}

int cmd_adv_train(const CoreOptions& core, const PathOptions& paths, TrainOptions t) {
  if (core.dataset.empty() || paths.vocab.empty() || paths.report.empty()) {
    throw std::runtime_error("adv-train needs --dataset, --vocab and --report");
  }
  const auto vocab = Vocabulary::load(paths.vocab);
  const auto labels = scan_labels(core.dataset);
  const auto train = load_dataset(core.dataset, vocab, labels);
  std::vector<LabeledExample> test;
  if (!paths.test.empty()) test = load_dataset(paths.test, vocab, labels);
  const auto adv = collect_adversarial_examples(read_report(paths.report), t.limit);
  if (core.seed) t.cfg.seed = core.seed;
  const auto r = adversarial_training(train, adv, test, labels.size(), vocab.size(), t.cfg, labels);
  const fs::path dir = core.out;
  fs::create_directories(dir);
  r.classifier.save(dir / "victim.txt");
  nlohmann::json summary = {{"train_size", r.train_size},
                            {"adversarial_count", r.adversarial_count},
                            {"train_accuracy", r.train_accuracy}};
  if (!test.empty()) summary["clean_accuracy"] = r.clean_accuracy;
  write_text(dir / "adv_train.json", summary.dump(2) + "\n");
  std::printf("retrained on %zu + %zu adversarial examples: train acc %.4f", train.size(), r.adversarial_count,
              r.train_accuracy);
  if (!test.empty()) std::printf(", clean test acc %.4f", r.clean_accuracy);
  std::printf(" -> %s\n", (dir / "victim.txt").c_str());
  return 0;
}

int cmd_report(const std::vector<std::string>& reports) {
  if (reports.empty()) throw std::runtime_error("report needs at least one report.json");
  for (const auto& p : reports) print_summary(read_report(p));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metropolis-Hastings adversarial text attacks", "mha"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;
  app.add_option("--config", config_path, "key: value file mirroring the flags");

  CoreOptions core;
  PathOptions paths;
  AttackOptions atk;
  LmOptions lm;
  TrainOptions train;
  std::string budgets, curve_out;
  std::vector<std::string> report_files;

  app.add_option("--mode", core.mode, "bmha, wmha or genetic")
      ->check(CLI::IsMember({"bmha", "wmha", "genetic"}))
      ->capture_default_str();
  app.add_option("--max-proposals", core.max_proposals)->capture_default_str();
  app.add_option("--candidates", core.candidates, "Pre-selected words per proposal")->capture_default_str();
  app.add_option("--pr", core.pr, "Replacement probability")->capture_default_str();
  app.add_option("--pi", core.pi, "Insertion probability")->capture_default_str();
  app.add_option("--pd", core.pd, "Deletion probability")->capture_default_str();
  app.add_option("--tlm", core.tlm, "Fluency gate, 0 disables")->capture_default_str();
  app.add_option("--tc", core.tc, "Target-probability gate, 0 disables")->capture_default_str();
  app.add_option("--seed", core.seed)->capture_default_str();
  app.add_option("--forbidden", core.forbidden, "Words never edited, one per line");
  app.add_option("--dataset", core.dataset, "JSONL records with text and label");
  app.add_option("--out", core.out, "Output directory")->capture_default_str();
  app.add_option("--vocab", paths.vocab, "Vocabulary file");

  auto* make_toy = app.add_subcommand("make-toy", "Write the synthetic two-class corpus");

  auto* train_lm = app.add_subcommand("train-lm", "Train forward and backward n-gram LMs");
  train_lm->add_option("--order", lm.order)->check(CLI::Range(1, NGramLM::kMaxOrder))->capture_default_str();
  train_lm->add_option("--k", lm.k, "Add-k smoothing")->capture_default_str();
  train_lm->add_option("--name", lm.name, "Output file prefix")->capture_default_str();

  auto* train_victim = app.add_subcommand("train-victim", "Train the bag-of-embeddings classifier");
  add_train_flags(train_victim, train);
  train_victim->add_option("--test", paths.test, "Held-out dataset for reporting accuracy");

  auto* attack = app.add_subcommand("attack", "Run an attack campaign");
  attack->add_option("--victim", paths.victim)->check(CLI::ExistingFile);
  attack->add_option("--lm-forward", paths.lm_forward)->check(CLI::ExistingFile);
  attack->add_option("--lm-backward", paths.lm_backward)->check(CLI::ExistingFile);
  attack->add_option("--eval-lm", paths.eval_lm, "Forward LM for output perplexity")->check(CLI::ExistingFile);
  attack->add_option("-n,--n", atk.n, "Examples to attack")->capture_default_str();
  attack->add_flag("--trace", atk.trace, "Write trace.jsonl");
  attack->add_flag("--timing", atk.timing, "Record wall-clock time in report.json");
  attack->add_flag("--serial", atk.serial, "Attack examples one at a time");
  attack->add_option("--population", atk.population)->capture_default_str();
  attack->add_option("--generations", atk.generations)->capture_default_str();
  attack->add_option("--neighbors", atk.neighbors)->capture_default_str();
  attack->add_option("--lm-filter", atk.lm_filter)->capture_default_str();
  attack->add_option("--max-invocations", atk.max_invocations, "Genetic budget, 0 = none")->capture_default_str();

  auto* curve = app.add_subcommand("curve", "Invocation-success curve of a report");
  curve->add_option("--report", paths.report)->check(CLI::ExistingFile);
  curve->add_option("--budgets", budgets, "Comma-separated budgets (default: 20 even steps)");
  curve->add_option("--csv", curve_out, "Write CSV here instead of stdout");

  auto* adv = app.add_subcommand("adv-train", "Retrain the victim with successful adversarial outputs");
  adv->add_option("--report", paths.report)->check(CLI::ExistingFile);
  adv->add_option("--test", paths.test, "Clean test set");
  adv->add_option("--limit", train.limit, "Adversarial examples to add")->capture_default_str();
  add_train_flags(adv, train);

  auto* report = app.add_subcommand("report", "Summarise one or more report.json files");
  report->add_option("reports", report_files)->check(CLI::ExistingFile);

  try {
    auto args = expand_config(take_config_flag(argc, argv), app);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    if (*make_toy) return cmd_make_toy(core);
    if (*train_lm) return cmd_train_lm(core, paths, lm);
    if (*train_victim) return cmd_train_victim(core, paths, train);
    if (*attack) return cmd_attack(core, paths, atk);
    if (*curve) return cmd_curve(paths, budgets, curve_out);
    if (*adv) return cmd_adv_train(core, paths, train);
    if (*report) return cmd_report(report_files);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
