#include "mha/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mha {

using nlohmann::json;

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json ids_json(const Sentence& s) { return json(std::vector<TokenId>(s.ids().begin(), s.ids().end())); }

Sentence ids_from(const json& j) { return Sentence(j.get<std::vector<TokenId>>()); }

std::vector<TokenId> sorted(const WordSet& s) {
  std::vector<TokenId> v(s.begin(), s.end());
  std::sort(v.begin(), v.end());
  return v;
}

json mh_json(const MHConfig& c) {
  return json{{"p_replace", c.p_replace},
              {"p_insert", c.p_insert},
              {"p_delete", c.p_delete},
              {"candidates", c.candidates},
              {"max_proposals", c.max_proposals},
              {"t_lm", c.t_lm},
              {"t_c", c.t_c},
              {"min_len", c.min_len},
              {"max_len_factor", c.max_len_factor},
              {"mode", std::string(to_string(c.mode))},
              {"forbidden_words", sorted(c.forbidden_words)}};
}

MHConfig mh_from(const json& j) {
  MHConfig c;
  c.p_replace = j.at("p_replace").get<double>();
  c.p_insert = j.at("p_insert").get<double>();
  c.p_delete = j.at("p_delete").get<double>();
  c.candidates = j.at("candidates").get<std::size_t>();
  c.max_proposals = j.at("max_proposals").get<std::size_t>();
  c.t_lm = j.at("t_lm").get<double>();
  c.t_c = j.at("t_c").get<double>();
  c.min_len = j.at("min_len").get<std::size_t>();
  c.max_len_factor = j.at("max_len_factor").get<double>();
  c.mode = parse_mode(j.at("mode").get<std::string>());
  for (TokenId w : j.at("forbidden_words").get<std::vector<TokenId>>()) c.forbidden_words.insert(w);
  return c;
}

json genetic_json(const GeneticConfig& c) {
  return json{{"population_size", c.population_size},
              {"max_generations", c.max_generations},
              {"neighbors", c.neighbors},
              {"lm_filter_top", c.lm_filter_top},
              {"max_invocations", c.max_invocations},
              {"forbidden_words", sorted(c.forbidden_words)}};
}

GeneticConfig genetic_from(const json& j) {
  GeneticConfig c;
  c.population_size = j.at("population_size").get<std::size_t>();
  c.max_generations = j.at("max_generations").get<std::size_t>();
  c.neighbors = j.at("neighbors").get<std::size_t>();
  c.lm_filter_top = j.at("lm_filter_top").get<std::size_t>();
  c.max_invocations = j.at("max_invocations").get<std::uint64_t>();
  for (TokenId w : j.at("forbidden_words").get<std::vector<TokenId>>()) c.forbidden_words.insert(w);
  return c;
}

}  // namespace

json report_to_json(const RunReport& r, const ReportOptions& opts) {
  json outcomes = json::array();
  for (const auto& o : r.outcomes) {
    json e{{"example_index", o.example_index},
           {"label", o.label},
           {"target", o.target},
           {"seed", o.seed},
           {"success", o.result.success},
           {"proposals", o.result.proposals},
           {"accepted", o.result.accepted},
           {"invocations", o.result.invocations},
           {"original_ids", ids_json(o.original)},
           {"final_ids", ids_json(o.result.final_sentence)},
           {"eval_ppl", optional_json(o.eval_ppl)}};
    if (opts.vocab) {
      e["original"] = detokenize(o.original, *opts.vocab);
      e["final"] = detokenize(o.result.final_sentence, *opts.vocab);
    }
    outcomes.push_back(std::move(e));
  }
  json j{{"attacker", r.attacker},
         {"seed", r.seed},
         {"sample_n", r.sample_n},
         {"pool_size", r.pool_size},
         {"sample_saturated", r.sample_saturated},
         {"screening_invocations", r.screening_invocations},
         {"config", {{"mh", mh_json(r.mh)}, {"genetic", genetic_json(r.genetic)}}},
         {"aggregates",
          {{"attacked", r.attacked},
           {"successes", r.successes},
           {"success_rate", r.success_rate},
           {"mean_invocations", r.mean_invocations},
           {"median_invocations", r.median_invocations},
           {"mean_invocations_success", r.mean_invocations_success},
           {"total_invocations", r.total_invocations},
           {"total_proposals", r.total_proposals},
           {"total_accepted", r.total_accepted},
           {"acceptance_rate", optional_json(r.acceptance_rate)},
           {"mean_eval_lm_ppl", optional_json(r.mean_eval_ppl)}}},
         {"outcomes", std::move(outcomes)}};
  if (opts.include_timing) j["wall_clock_seconds"] = r.wall_clock_seconds;
  return j;
}

RunReport report_from_json(const json& j) {
  RunReport r;
  r.attacker = j.at("attacker").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.sample_n = j.at("sample_n").get<std::size_t>();
  r.pool_size = j.at("pool_size").get<std::size_t>();
  r.sample_saturated = j.at("sample_saturated").get<bool>();
  r.screening_invocations = j.at("screening_invocations").get<std::uint64_t>();
  r.mh = mh_from(j.at("config").at("mh"));
  r.genetic = genetic_from(j.at("config").at("genetic"));
  for (const auto& e : j.at("outcomes")) {
    ExampleOutcome o;
    o.example_index = e.at("example_index").get<std::size_t>();
    o.label = e.at("label").get<ClassId>();
    o.target = e.at("target").get<ClassId>();
    o.seed = e.at("seed").get<std::uint64_t>();
    o.original = ids_from(e.at("original_ids"));
    o.result.success = e.at("success").get<bool>();
    o.result.proposals = e.at("proposals").get<std::size_t>();
    o.result.accepted = e.at("accepted").get<std::size_t>();
    o.result.invocations = e.at("invocations").get<std::uint64_t>();
    o.result.final_sentence = ids_from(e.at("final_ids"));
    o.eval_ppl = optional_from(e.at("eval_ppl"));
    r.outcomes.push_back(std::move(o));
  }
  const auto& a = j.at("aggregates");
  r.attacked = a.at("attacked").get<std::size_t>();
  r.successes = a.at("successes").get<std::size_t>();
  r.success_rate = a.at("success_rate").get<double>();
  r.mean_invocations = a.at("mean_invocations").get<double>();
  r.median_invocations = a.at("median_invocations").get<double>();
  r.mean_invocations_success = a.at("mean_invocations_success").get<double>();
  r.total_invocations = a.at("total_invocations").get<std::uint64_t>();
  r.total_proposals = a.at("total_proposals").get<std::size_t>();
  r.total_accepted = a.at("total_accepted").get<std::size_t>();
  r.acceptance_rate = optional_from(a.at("acceptance_rate"));
  r.mean_eval_ppl = optional_from(a.at("mean_eval_lm_ppl"));
  if (j.contains("wall_clock_seconds")) r.wall_clock_seconds = j["wall_clock_seconds"].get<double>();
  return r;
}

std::vector<std::uint64_t> default_budgets(const RunReport& report) {
  std::uint64_t hi = 1;
  for (const auto& o : report.outcomes) hi = std::max(hi, o.result.invocations);
  std::vector<std::uint64_t> budgets;
  constexpr std::uint64_t kPoints = 20;
  for (std::uint64_t i = 1; i <= kPoints; ++i) {
    const std::uint64_t b = (hi * i + kPoints - 1) / kPoints;
    if (budgets.empty() || b > budgets.back()) budgets.push_back(b);
  }
  return budgets;
}

void write_curve_csv(const std::filesystem::path& path, std::span<const CurvePoint> curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write curve file " + path.string());
  out << "budget,success\n";
  for (const auto& p : curve) {
    out << p.budget << ',' << json(p.success).dump() << '\n';
  }
}

std::vector<CurvePoint> read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open curve file " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "budget,success") throw std::runtime_error(path.string() + ": bad curve header");
  std::vector<CurvePoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error(path.string() + ": bad curve row");
    out.push_back({std::stoull(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
  }
  return out;
}

void write_traces(const std::filesystem::path& path, const RunReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file " + path.string());
  for (const auto& o : report.outcomes) {
    for (const auto& t : o.result.trace) {
      json rec{{"example", o.example_index},
               {"step", t.step},
               {"kind", std::string(to_string(t.kind))},
               {"position", t.position},
               {"alpha", t.alpha},
               {"gated", t.gated},
               {"accepted", t.accepted},
               {"log_pi", finite_or_null(t.log_pi)},
               {"invocations", t.invocations},
               {"log_lm_before", finite_or_null(t.log_lm_before)},
               {"log_lm_after", finite_or_null(t.log_lm_after)},
               {"log_c_before", finite_or_null(t.log_c_before)},
               {"log_c_after", finite_or_null(t.log_c_after)}};
      out << rec.dump() << '\n';
    }
  }
}

ReportFiles write_report(const RunReport& report, const std::filesystem::path& dir,
                         const ReportOptions& opts) {
  std::filesystem::create_directories(dir);
  ReportFiles files{dir / "report.json", dir / "curve.csv", std::nullopt};
  {
    std::ofstream out(files.report);
    if (!out) throw std::runtime_error("cannot write report " + files.report.string());
    out << report_to_json(report, opts).dump(2) << '\n';
  }
  const auto budgets = opts.budgets.empty() ? default_budgets(report) : opts.budgets;
  write_curve_csv(files.curve, invocation_success_curve(report, budgets));
  if (opts.write_trace) {
    files.trace = dir / "trace.jsonl";
    write_traces(*files.trace, report);
  }
  return files;
}

RunReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report " + path.string());
  try {
    return report_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace mha
