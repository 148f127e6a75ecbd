// Acceptance run: one PASS/FAIL line per criterion.
// Usage: acceptance <posp binary> <scenarios dir>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"
#include "posp/econ.hpp"
#include "posp/estimate.hpp"
#include "posp/scenario.hpp"
#include "posp/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace posp;

namespace {

std::string g_binary;
fs::path g_scenarios;
fs::path g_scratch;

// Criterion 9 accumulates over every run made by the others.
std::uint64_t g_arbitrations = 0;
std::uint64_t g_arbitration_failures = 0;

const std::map<std::string, std::string> kGolden = {
    {"honest", "4db9c2175cdf72973c8d01fc5e58cedd5f52b7dee599ea32f193f29e0874e92e"},
    {"mixed", "8e2bfc0522745b759a207c37a4d66ec802eca3d2577296d4805da325fd706252"},
    {"collusion", "1d87f11187104ed52510043c8ebf8fa68fbc862bee847e2544d6f01b33045a92"},
};

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Output {
  int code = -1;
  std::string out;
};

Output posp_cli(const std::string& args) {
  Output r;
  FILE* pipe = popen((g_binary + " " + args + " 2>&1").c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Checks each arbitration against the simulator's own recomputation: the
// slashed party's output is wrong and the rewarded party's output is right.
void audit_arbitrations(const sim::RunResult& res) {
  for (const auto& rec : res.arbitrations) {
    ++g_arbitrations;
    const auto& o = rec.outcome;
    bool ok = true;
    for (const auto& d : o.deltas) {
      if (d.account.kind != protocol::AccountKind::executor) continue;
      const bool is_asserter = d.account.index == o.asserter;
      const bool correct = is_asserter ? rec.asserter_output_correct : rec.validator_output_correct;
      if (d.reason == protocol::Reason::slash && correct) ok = false;
      if (d.reason != protocol::Reason::slash && !correct) ok = false;
    }
    if ((o.asserter_verdict == protocol::Verdict::honest) != rec.asserter_output_correct) ok = false;
    if ((o.validator_verdict == protocol::Verdict::honest) != rec.validator_output_correct) ok = false;
    if (!ok) ++g_arbitration_failures;
  }
  g_arbitration_failures += res.metrics.arbitration_violations;
}

void count_estimate(const sim::PayoffEstimate& est) {
  g_arbitrations += est.arbitrations;
  g_arbitration_failures += est.arbitration_violations;
}

// ------------------------------------------------------------ criteria

json analyze_desk(double& elapsed) {
  const fs::path params = g_scratch / "desk.json";
  std::ofstream(params) << R"({"C": 1, "S": 150, "R": 1.2, "r": 0.1})";
  const auto t0 = std::chrono::steady_clock::now();
  const Output r = posp_cli("analyze --params " + params.string());
  elapsed = seconds_since(t0);
  if (r.code != 0) throw std::runtime_error("analyze exited with " + std::to_string(r.code));
  return json::parse(r.out);
}

Verdict criterion1() {
  double elapsed = 0.0;
  const json doc = analyze_desk(elapsed);
  const double pct = doc.at("min_challenge_probability_percent").get<double>();
  const bool pass = std::fabs(pct - 0.736) <= 0.001 && elapsed < 1.0;
  return {pass, fmt("min challenge probability %.5f%% (target 0.736 +- 0.001), analyze %.3f s", pct, elapsed)};
}

Verdict criterion2() {
  double elapsed = 0.0;
  const json doc = analyze_desk(elapsed);
  const double pct = doc.at("opml").at("undetected_fraud_percent").get<double>();
  const bool pass = std::fabs(pct - 0.98) <= 0.01 && elapsed < 1.0;
  return {pass, fmt("opML undetected fraud %.5f%% (target 0.98 +- 0.01), analyze %.3f s", pct, elapsed)};
}

sim::ScenarioConfig desk_network() {
  sim::ScenarioConfig cfg;
  cfg.master_seed = crypto::derive_seed(crypto::Seed{}, "acceptance-estimator");
  cfg.network.executors = 101;
  cfg.network.fault_bound = 0;
  cfg.network.compute_cost = protocol::to_units(1.0);
  cfg.network.slash = protocol::to_units(150.0);
  cfg.network.reward = protocol::to_units(1.2);
  cfg.network.payment = protocol::to_units(3.6);
  cfg.network.timeout_penalty = protocol::to_units(15.0);
  return cfg;
}

Verdict criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  const double rho = 0.1;
  const double min_p = *econ::spml_min_p(1.0, 150.0, 1.2, rho);
  auto cfg = desk_network();
  cfg.network.challenge_prob = 1.05 * min_p;

  sim::EstimateOptions opts;
  opts.trials = 100'000;
  opts.colluding_fraction = rho;
  opts.proposal_p = 0.5;
  const auto honest = sim::estimate_strategy_payoff(cfg, sim::FocalStrategy::honest, opts);
  const auto fraud = sim::estimate_strategy_payoff(cfg, sim::FocalStrategy::always_fraud, opts);
  count_estimate(honest);
  count_estimate(fraud);

  const double se = std::hypot(honest.std_error, fraud.std_error);
  const double gap = (honest.mean - fraud.mean) / se;

  // The same trials, reweighted to half the threshold.
  const auto honest_low = sim::reweighted(honest, 0.5 * min_p);
  const auto fraud_low = sim::reweighted(fraud, 0.5 * min_p);
  const double se_low = std::hypot(honest_low.std_error, fraud_low.std_error);
  const double reversal = (fraud_low.mean - honest_low.mean) / se_low;

  const double elapsed = seconds_since(t0);
  const bool pass = gap > 5.0 && reversal > 0.0 && honest.invariant_failures == 0 &&
                    fraud.invariant_failures == 0 && elapsed < 120.0;
  return {pass, fmt("p=1.05 min_p: honest %.5f fraud %.5f gap %.1f SE; p=0.5 min_p: honest %.5f fraud "
                    "%.5f (fraud ahead by %.1f SE); %.1f s",
                    honest.mean, fraud.mean, gap, honest_low.mean, fraud_low.mean, reversal, elapsed)};
}

Verdict criterion4() {
  std::mt19937_64 rng(0x5eed0004);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int worst_set = -1;
  double worst = -1.0;
  std::uint32_t failures = 0;
  for (int k = 0; k < 1000; ++k) {
    econ::EconomicParams e;
    e.validators = 1 + static_cast<int>(rng() % 6);
    e.compute_cost = 5.0 * u(rng);
    e.asserter_reward = 10.0 * u(rng);
    e.validator_reward = 10.0 * u(rng);
    e.payment = e.asserter_reward + e.validator_reward + u(rng);
    e.slash = 500.0 * u(rng);
    e.challenge_prob = u(rng);
    e.byzantine_fraction = 0.95 * u(rng);
    e.unchallenged_gain = e.asserter_reward + 5.0 * u(rng);
    e.captured_gain = e.unchallenged_gain + 10.0 * u(rng);
    const econ::CollusionModel m{e.byzantine_fraction * u(rng), econ::Sampling::with_replacement, 0};

    const double h_gap = econ::honest_payoff_lower_bound(e, m) -
                         econ::brute_force_expected_payoff(e, m, econ::AsserterStrategy::honest);
    const double f_gap = econ::brute_force_expected_payoff(e, m, econ::AsserterStrategy::fraud) -
                         econ::fraud_payoff_upper_bound(e, m);
    const double excess = std::max(h_gap, f_gap);
    if (excess > 1e-9) ++failures;
    if (excess > worst) {
      worst = excess;
      worst_set = k;
    }
  }
  return {failures == 0,
          fmt("1000 parameter sets, %u bound violations, largest excess %.3g (set %d)", failures, worst, worst_set)};
}

Verdict criterion5() {
  const auto t0 = std::chrono::steady_clock::now();
  crypto::Seed seed = crypto::derive_seed(crypto::Seed{}, "acceptance-sampling");
  const double p = 0.00736;
  const std::uint64_t draws = 1'000'000;
  std::uint64_t hits = 0;
  for (std::uint64_t k = 0; k < draws; ++k) hits += crypto::sampled(seed, crypto::be64(k), p);
  const double mean = p * static_cast<double>(draws);
  const double sigma = std::sqrt(mean * (1.0 - p));
  const double z = (static_cast<double>(hits) - mean) / sigma;

  std::array<std::uint64_t, 10> cells{};
  const std::uint64_t bucket_draws = 100'000;
  const crypto::Seed bseed = crypto::derive_seed(crypto::Seed{}, "acceptance-bucket");
  for (std::uint64_t k = 0; k < bucket_draws; ++k) ++cells[crypto::bucket(bseed, crypto::be64(k), 10)];
  double chi2 = 0.0;
  const double expected = static_cast<double>(bucket_draws) / 10.0;
  for (auto c : cells) chi2 += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  const double critical = 27.877;  // chi-square, 9 degrees of freedom, 0.001

  const double elapsed = seconds_since(t0);
  const bool pass = std::fabs(z) <= 3.0 && chi2 < critical && elapsed < 30.0;
  return {pass, fmt("sampled %llu / 10^6 (z = %+.2f); bucket chi-square %.2f < %.3f; %.2f s",
                    static_cast<unsigned long long>(hits), z, chi2, critical, elapsed)};
}

Verdict criterion6() {
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = sim::load_scenario((g_scenarios / "mixed.json").string());
  cfg.requests = 10'000;
  cfg.trace = false;
  const auto res = sim::run(cfg);
  audit_arbitrations(res);
  const auto& m = res.metrics;

  protocol::Amount users = 0;
  for (auto u : m.users) users += u;
  protocol::Amount executors = 0;
  for (const auto& e : m.executors) executors += e.ledger_net;
  const protocol::Amount collected = static_cast<protocol::Amount>(m.settled) * cfg.network.payment;
  const bool totals = users == -collected && executors + m.burned == collected;
  const bool supply = m.supply_conserved && m.circulating == m.opening_supply - m.burned;
  const bool pass = m.settled == cfg.requests && m.conservation_violations == 0 && totals && supply &&
                    m.invariants_hold();
  return {pass, fmt("%llu requests settled, %llu per-request audit failures, credits + burn %s B per "
                    "request, supply %s; %llu arbitrations; %.1f s",
                    static_cast<unsigned long long>(m.settled),
                    static_cast<unsigned long long>(m.conservation_violations), totals ? "=" : "!=",
                    supply ? "conserved" : "NOT conserved", static_cast<unsigned long long>(m.arbitrations),
                    seconds_since(t0))};
}

Verdict criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  const double p = 0.00736;
  const double rho = 0.1;
  auto cfg = desk_network();
  cfg.master_seed = crypto::derive_seed(crypto::Seed{}, "acceptance-cheat-pass");
  cfg.network.challenge_prob = p;
  sim::EstimateOptions opts;
  opts.trials = 100'000;
  opts.colluding_fraction = rho;
  const auto est = sim::estimate_strategy_payoff(cfg, sim::FocalStrategy::always_fraud, opts);
  count_estimate(est);

  const double target = econ::cheat_pass_probability(p, rho);
  const double n = static_cast<double>(est.fraudulent);
  const double sigma = std::sqrt(target * (1.0 - target) / n);
  const double z = (est.cheat_pass_rate - target) / sigma;
  const bool pass = est.fraudulent == opts.trials && std::fabs(z) <= 3.0;
  return {pass, fmt("%llu of %llu fraudulent assertions passed: %.6f vs %.6f (z = %+.2f); %.1f s",
                    static_cast<unsigned long long>(est.passed), static_cast<unsigned long long>(est.fraudulent),
                    est.cheat_pass_rate, target, z, seconds_since(t0))};
}

Verdict criterion8() {
  std::ostringstream detail;
  bool pass = true;
  for (const auto& [name, hash] : kGolden) {
    const fs::path scenario = g_scenarios / (name + ".json");
    const Output ok = posp_cli("replay --scenario " + scenario.string() + " --hash " + hash);

    // Flip the lowest bit of the master seed.
    json doc = json::parse(std::ifstream(scenario));
    std::string seed = doc.at("seed").get<std::string>();
    const int last = std::stoi(seed.substr(seed.size() - 1), nullptr, 16) ^ 1;
    seed.back() = "0123456789abcdef"[last];
    doc["seed"] = seed;
    const fs::path flipped = g_scratch / (name + "_flipped.json");
    std::ofstream(flipped) << doc.dump();
    const Output bad = posp_cli("replay --scenario " + flipped.string() + " --hash " + hash);

    // The in-process run feeds the arbitration audit.
    const auto res = sim::run(sim::load_scenario(scenario.string()));
    audit_arbitrations(res);

    const bool this_ok = ok.code == 0 && bad.code == 1;
    pass = pass && this_ok;
    detail << name << (this_ok ? " ok" : " MISMATCH") << "; ";
  }
  detail << "seed bit flips rejected";
  return {pass, detail.str()};
}

Verdict criterion9() {
  return {g_arbitration_failures == 0 && g_arbitrations > 0,
          fmt("%llu arbitrations checked across criteria 3 and 6-8, %llu exceptions",
              static_cast<unsigned long long>(g_arbitrations),
              static_cast<unsigned long long>(g_arbitration_failures))};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: acceptance <posp binary> <scenarios dir>\n");
    return 2;
  }
  g_binary = argv[1];
  g_scenarios = argv[2];
  g_scratch = fs::temp_directory_path() / ("posp_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(g_scratch);

  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"minimum challenge probability", criterion1},
      {"opML undetected fraud probability", criterion2},
      {"equilibrium confirmation and reversal", criterion3},
      {"closed form brackets brute force", criterion4},
      {"sampling statistics", criterion5},
      {"conservation under mixed adversaries", criterion6},
      {"cheat-pass rate", criterion7},
      {"deterministic replay", criterion8},
      {"arbitration correctness", criterion9},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << i + 1 << ". " << criteria[i].first << ": " << v.detail
              << std::endl;
  }
  std::error_code ec;
  fs::remove_all(g_scratch, ec);
  std::cout << (failed == 0 ? "all criteria pass" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
