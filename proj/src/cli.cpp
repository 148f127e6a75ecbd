#include "posp/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "posp/report.hpp"

namespace posp::cli {
namespace {

using json = nlohmann::json;
using sim::ConfigError;

constexpr double kProposalP = 0.5;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read " + path});
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

double number(const json& doc, const std::string& key, std::vector<std::string>& errs) {
  const auto it = doc.find(key);
  if (it == doc.end()) {
    errs.push_back(key + " is required");
    return 0.0;
  }
  if (!it->is_number()) {
    errs.push_back(key + " must be a number");
    return 0.0;
  }
  return it->get<double>();
}

json bounded(const econ::BoundedValue& v) {
  const char* kind = v.kind == econ::BoundKind::lower   ? "lower"
                     : v.kind == econ::BoundKind::upper ? "upper"
                                                        : "exact";
  return {{"value", v.value}, {"bound", kind}};
}

econ::EconomicParams econ_of(const sim::ScenarioConfig& cfg) {
  const auto& n = cfg.network;
  return econ::EconomicParams::spml(protocol::to_tokens(n.compute_cost), protocol::to_tokens(n.slash),
                                    protocol::to_tokens(n.reward), cfg.byzantine_fraction,
                                    n.challenge_prob, protocol::to_tokens(n.payment));
}

sim::ScenarioConfig with_axis(sim::ScenarioConfig cfg, Axis axis, double v) {
  switch (axis) {
    case Axis::p: cfg.network.challenge_prob = v; break;
    case Axis::r: cfg.byzantine_fraction = v; break;
    case Axis::S: cfg.network.slash = protocol::to_units(v); break;
  }
  return cfg;
}

const char* axis_name(Axis a) {
  switch (a) {
    case Axis::p: return "p";
    case Axis::r: return "r";
    case Axis::S: return "S";
  }
  return "?";
}

void print_errors(std::ostream& err, const ConfigError& e) {
  for (const auto& msg : e.errors()) err << "error: " << msg << '\n';
}

}  // namespace

AnalyzeParams parse_params(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("malformed JSON: ") + e.what()});
  }
  if (!doc.is_object()) throw ConfigError({"params must be a JSON object"});

  std::vector<std::string> errs;
  AnalyzeParams out;
  out.shorthand = doc.contains("R");
  const std::set<std::string> allowed =
      out.shorthand ? std::set<std::string>{"C", "S", "R", "r", "p", "B", "R_C"}
                    : std::set<std::string>{"B", "R_A", "R_V", "S", "C", "r", "n", "U1", "U2", "p", "R_C"};
  for (const auto& [key, value] : doc.items()) {
    if (!allowed.contains(key)) errs.push_back("unknown key " + key);
  }
  const double c = number(doc, "C", errs);
  const double r_c = doc.contains("R_C") ? number(doc, "R_C", errs) : 100.0 * c;
  out.has_p = doc.contains("p");
  const double p = out.has_p ? number(doc, "p", errs) : 0.0;
  auto& e = out.params;
  if (out.shorthand) {
    const double payment = doc.contains("B") ? number(doc, "B", errs) : 0.0;
    e = econ::EconomicParams::spml(c, number(doc, "S", errs), number(doc, "R", errs), number(doc, "r", errs),
                                   p, payment, r_c);
  } else {
    e.payment = number(doc, "B", errs);
    e.asserter_reward = number(doc, "R_A", errs);
    e.validator_reward = number(doc, "R_V", errs);
    e.slash = number(doc, "S", errs);
    e.compute_cost = c;
    e.byzantine_fraction = number(doc, "r", errs);
    const double n = number(doc, "n", errs);
    if (n != std::floor(n) || n < 1 || n > 64) errs.emplace_back("n must be an integer in [1, 64]");
    e.validators = static_cast<int>(n);
    e.unchallenged_gain = number(doc, "U1", errs);
    e.captured_gain = number(doc, "U2", errs);
    e.challenge_prob = p;
    e.opml_check_gain = r_c;
  }
  if (errs.empty()) {
    for (auto& msg : econ::validation_errors(e)) errs.push_back(std::move(msg));
  }
  if (!errs.empty()) throw ConfigError(std::move(errs));
  return out;
}

AnalyzeReport analyze(const AnalyzeParams& in) {
  const econ::EconomicParams& e = in.params;
  json doc;
  doc["params"] = {{"B", e.payment},          {"R_A", e.asserter_reward}, {"R_V", e.validator_reward},
                   {"S", e.slash},            {"C", e.compute_cost},      {"r", e.byzantine_fraction},
                   {"n", e.validators},       {"U1", e.unchallenged_gain}, {"U2", e.captured_gain},
                   {"R_C", e.opml_check_gain}};
  doc["params"]["p"] = in.has_p ? json(e.challenge_prob) : json(nullptr);

  const auto a1 = econ::check_assumption1(e);
  doc["assumption1"] = {{"holds", a1.holds}, {"violated", a1.violated}};

  const auto min_p = econ::min_challenge_probability(e);
  if (min_p) {
    doc["min_challenge_probability"] = *min_p;
    doc["min_challenge_probability_percent"] = *min_p * 100.0;
  } else {
    doc["min_challenge_probability"] = "infeasible";
    doc["min_challenge_probability_percent"] = "infeasible";
  }

  AnalyzeReport out;
  if (in.has_p) {
    const double margin = econ::theorem1_margin(e);
    doc["theorem1_margin"] = margin;
    doc["cheat_pass_probability"] = econ::cheat_pass_probability(e.challenge_prob, e.byzantine_fraction);
    out.equilibrium_holds = a1.holds && margin > 0.0;
  } else {
    doc["theorem1_margin"] = nullptr;
    doc["cheat_pass_probability"] = nullptr;
    out.equilibrium_holds = a1.holds && min_p.has_value();
  }
  doc["equilibrium_holds"] = out.equilibrium_holds;

  const double q = econ::opml_undetected_fraud_probability(e.compute_cost, e.slash, e.asserter_reward,
                                                           e.opml_check_gain);
  doc["opml"] = {{"check_gain", e.opml_check_gain},
                 {"undetected_fraud_probability", q},
                 {"undetected_fraud_percent", q * 100.0}};

  const auto m = econ::validator_payoff_matrix(e);
  json matrix = json::array();
  for (bool v : {true, false}) {
    for (bool a : {true, false}) {
      json cell = bounded(m.at(v, a));
      cell["validator"] = v ? "correct" : "incorrect";
      cell["asserter"] = a ? "correct" : "incorrect";
      matrix.push_back(cell);
    }
  }
  doc["validator_payoff_matrix"] = matrix;
  out.json = doc.dump(2) + "\n";
  return out;
}

std::vector<double> sweep_grid(double from, double to, std::uint32_t steps) {
  std::vector<double> out;
  if (steps == 0 || from > to) return out;
  if (steps == 1) return {from};
  const double h = (to - from) / (steps - 1);
  for (std::uint32_t k = 0; k < steps; ++k) out.push_back(k + 1 == steps ? to : from + h * k);
  return out;
}

std::vector<SweepRow> sweep(const sim::ScenarioConfig& cfg, const SweepOptions& options) {
  const std::vector<double> grid = sweep_grid(options.from, options.to, options.steps);
  std::vector<std::string> errs;
  for (double v : grid) {
    for (auto& msg : sim::validation_errors(with_axis(cfg, options.axis, v))) {
      errs.push_back(std::string(axis_name(options.axis)) + "=" + std::to_string(v) + ": " + msg);
    }
  }
  if (!errs.empty()) throw ConfigError(std::move(errs));

  const sim::RunOptions run_opts{cfg.trace, sim::log_level_from_env()};
  auto estimates = [&](const sim::ScenarioConfig& c) {
    sim::EstimateOptions eo;
    eo.trials = options.trials;
    eo.colluding_fraction = c.byzantine_fraction;
    eo.proposal_p = kProposalP;
    return std::make_pair(sim::estimate_strategy_payoff(c, sim::FocalStrategy::honest, eo),
                          sim::estimate_strategy_payoff(c, sim::FocalStrategy::always_fraud, eo));
  };
  // Along p the trial outcomes are shared and only their weights move.
  std::optional<std::pair<sim::PayoffEstimate, sim::PayoffEstimate>> shared;
  if (options.axis == Axis::p && !grid.empty()) shared = estimates(cfg);

  std::vector<SweepRow> rows;
  for (double v : grid) {
    const sim::ScenarioConfig c = with_axis(cfg, options.axis, v);
    SweepRow row;
    row.value = v;
    const econ::EconomicParams e = econ_of(c);
    row.margin = econ::theorem1_margin(e);
    row.min_p = econ::min_challenge_probability(e);
    row.fraud_profitable_analytic = row.margin < 0.0;
    const auto est = shared ? std::make_pair(sim::reweighted(shared->first, v), sim::reweighted(shared->second, v))
                            : estimates(c);
    row.honest_mean = est.first.mean;
    row.honest_stderr = est.first.std_error;
    row.fraud_mean = est.second.mean;
    row.fraud_stderr = est.second.std_error;
    row.fraud_profitable_empirical = row.fraud_mean > row.honest_mean;
    row.metrics = sim::run(c, run_opts).metrics;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_to_json(Axis axis, const std::vector<SweepRow>& rows) {
  json doc;
  doc["axis"] = axis_name(axis);
  doc["rows"] = json::array();
  for (const SweepRow& r : rows) {
    const auto& m = r.metrics;
    doc["rows"].push_back({
        {"value", r.value},
        {"theorem1_margin", r.margin},
        {"min_challenge_probability", r.min_p ? json(*r.min_p) : json("infeasible")},
        {"fraud_profitable_analytic", r.fraud_profitable_analytic},
        {"honest_mean", r.honest_mean},
        {"honest_stderr", r.honest_stderr},
        {"fraud_mean", r.fraud_mean},
        {"fraud_stderr", r.fraud_stderr},
        {"fraud_profitable_empirical", r.fraud_profitable_empirical},
        {"challenge_rate", m.challenge_rate},
        {"cheat_pass_rate", m.cheat_pass_rate},
        {"arbitrations", m.arbitrations},
        {"undetected_frauds", m.undetected_frauds},
        {"invariants_hold", m.invariants_hold()},
        {"trace_hash", m.trace_hash ? json(crypto::to_hex(*m.trace_hash)) : json(nullptr)},
    });
  }
  return doc.dump(2) + "\n";
}

int main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sampling-based verification protocol: analysis and simulation"};
  app.require_subcommand(1);

  std::string params_path;
  auto* analyze_cmd = app.add_subcommand("analyze", "Closed-form equilibrium analysis");
  analyze_cmd->add_option("--params", params_path, "JSON parameter file")->required();

  std::string scenario_path;
  std::string out_dir;
  auto* simulate_cmd = app.add_subcommand("simulate", "Run a scenario and write its reports");
  simulate_cmd->add_option("--scenario", scenario_path, "JSON scenario file")->required();
  simulate_cmd->add_option("--out", out_dir, "Output directory")->required();

  std::string axis;
  SweepOptions sweep_opts;
  auto* sweep_cmd = app.add_subcommand("sweep", "Vary one parameter over a grid");
  sweep_cmd->add_option("--scenario", scenario_path, "JSON scenario file")->required();
  sweep_cmd->add_option("--axis", axis, "p, r or S")->required()->check(CLI::IsMember({"p", "r", "S"}));
  sweep_cmd->add_option("--from", sweep_opts.from)->required();
  sweep_cmd->add_option("--to", sweep_opts.to)->required();
  sweep_cmd->add_option("--steps", sweep_opts.steps)->required();
  sweep_cmd->add_option("--trials", sweep_opts.trials, "Estimator trials per strategy")
      ->check(CLI::PositiveNumber);

  std::string hash;
  auto* replay_cmd = app.add_subcommand("replay", "Check a scenario's trace hash");
  replay_cmd->add_option("--scenario", scenario_path, "JSON scenario file")->required();
  replay_cmd->add_option("--hash", hash, "Expected trace hash (hex)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return invalid;
  }

  const sim::RunOptions run_opts{true, sim::log_level_from_env()};
  try {
    if (analyze_cmd->parsed()) {
      const AnalyzeReport rep = analyze(parse_params(read_file(params_path)));
      out << rep.json;
      return rep.equilibrium_holds ? ok : failed;
    }
    if (simulate_cmd->parsed()) {
      const sim::ScenarioConfig cfg = sim::load_scenario(scenario_path);
      const sim::RunResult res = sim::run(cfg, run_opts);
      std::filesystem::create_directories(out_dir);
      std::ofstream(std::filesystem::path(out_dir) / "report.json") << sim::metrics_to_json(res.metrics);
      std::ofstream(std::filesystem::path(out_dir) / "ledger.json") << sim::ledger_to_json(res.ledger);
      out << (res.metrics.trace_hash ? crypto::to_hex(*res.metrics.trace_hash) : "trace disabled") << '\n';
      if (!res.metrics.invariants_hold()) {
        err << "error: invariant violation, see report.json\n";
        return violation;
      }
      return ok;
    }
    if (sweep_cmd->parsed()) {
      sweep_opts.axis = axis == "p" ? Axis::p : axis == "r" ? Axis::r : Axis::S;
      const auto rows = sweep(sim::load_scenario(scenario_path), sweep_opts);
      out << sweep_to_json(sweep_opts.axis, rows);
      for (const auto& r : rows) {
        if (!r.metrics.invariants_hold()) return violation;
      }
      return ok;
    }
    if (replay_cmd->parsed()) {
      crypto::Digest expected;
      try {
        expected = crypto::blob_from_hex<crypto::Digest>(hash);
      } catch (const std::invalid_argument&) {
        throw ConfigError({"--hash must be 64 hex digits"});
      }
      sim::ScenarioConfig cfg = sim::load_scenario(scenario_path);
      cfg.trace = true;
      const sim::RunResult res = sim::run(cfg, run_opts);
      const std::string got = crypto::to_hex(*res.metrics.trace_hash);
      if (*res.metrics.trace_hash == expected) {
        out << "pass " << got << '\n';
        return ok;
      }
      out << "fail expected " << crypto::to_hex(expected) << " got " << got << '\n';
      return failed;
    }
  } catch (const ConfigError& e) {
    print_errors(err, e);
    return invalid;
  } catch (const protocol::ProtocolViolation& e) {
    err << "error: protocol violation: " << e.what() << '\n';
    return violation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return invalid;
  }
  return invalid;
}

}  // namespace posp::cli
