#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "posp/econ.hpp"
#include "posp/estimate.hpp"
#include "posp/scenario.hpp"
#include "posp/simulator.hpp"

using namespace posp;
using namespace posp::sim;
using protocol::Account;
using protocol::ExecutorStrategy;
using protocol::OrchestratorStrategy;

namespace {

crypto::Seed filled(std::uint8_t b) {
  crypto::Seed s;
  s.bytes.fill(b);
  return s;
}

ScenarioConfig base(std::uint32_t n, double p, std::uint64_t requests) {
  ScenarioConfig cfg;
  cfg.master_seed = filled(0x01);
  cfg.requests = requests;
  cfg.users = 2;
  cfg.model_dims = {4, 8, 3};
  cfg.network.executors = n;
  cfg.network.fault_bound = 1;
  cfg.network.challenge_prob = p;
  cfg.network.reward = protocol::to_units(1.2);
  cfg.network.payment = protocol::to_units(3.6);
  cfg.network.slash = protocol::to_units(150.0);
  cfg.network.compute_cost = protocol::to_units(1.0);
  cfg.network.timeout_penalty = protocol::to_units(15.0);
  return cfg;
}

ExecutorGroupSpec executors(ExecutorStrategy s, std::optional<std::uint32_t> count, double q = 1.0) {
  ExecutorGroupSpec spec;
  spec.strategy = s;
  spec.count = count;
  spec.q = q;
  return spec;
}

void check_invariants(const MetricsReport& m) {
  CHECK(m.arbitration_violations == 0);
  CHECK(m.conservation_violations == 0);
  CHECK(m.phase_violations == 0);
  CHECK(m.causality_violations == 0);
  CHECK(m.supply_conserved);
  CHECK(m.all_settled);
  CHECK(m.invariants_hold());
}

}  // namespace

TEST_CASE("all honest without challenges") {
  const auto res = run(base(10, 0.0, 60));
  const auto& m = res.metrics;
  check_invariants(m);
  CHECK(m.requests == 60);
  CHECK(m.concluded == 60);
  CHECK(m.settled == 60);
  CHECK(m.challenges == 0);
  CHECK(m.unchallenged == 60);
  CHECK(m.arbitrations == 0);
  CHECK(m.correct_results == 60);
  CHECK(m.burned == 60 * protocol::to_units(3.6 - 1.2));

  protocol::Amount paid = 0;
  for (const auto& e : m.executors) paid += e.ledger_net;
  CHECK(paid == 60 * protocol::to_units(1.2));
  protocol::Amount spent = 0;
  for (auto u : m.users) spent += u;
  CHECK(spent == -60 * protocol::to_units(3.6));
}

TEST_CASE("all honest with every request challenged") {
  const auto res = run(base(10, 1.0, 40));
  const auto& m = res.metrics;
  check_invariants(m);
  CHECK(m.challenges == 40);
  CHECK(m.matched == 40);
  CHECK(m.arbitrations == 0);
  CHECK(m.challenge_rate == 1.0);
  CHECK(m.burned == 40 * protocol::to_units(3.6 - 2.4));
}

TEST_CASE("a fraudulent executor is slashed in arbitration") {
  auto cfg = base(10, 1.0, 80);
  cfg.byzantine_fraction = 0.1;
  cfg.executor_adversaries = {executors(ExecutorStrategy::always_fraud, 1)};
  const auto res = run(cfg);
  const auto& m = res.metrics;
  check_invariants(m);
  const auto byz = res.behaviors.byzantine_executors();
  REQUIRE(byz.size() == 1);
  const ExecutorId cheat = byz.front();

  CHECK(m.arbitrations > 0);
  CHECK(m.arbitrations == res.arbitrations.size());
  CHECK(m.undetected_frauds == 0);
  for (const auto& rec : res.arbitrations) {
    const auto& o = rec.outcome;
    CHECK((o.asserter == cheat || o.validator == cheat));
    const bool asserter_cheated = o.asserter == cheat;
    CHECK(rec.asserter_output_correct == !asserter_cheated);
    CHECK(rec.validator_output_correct == asserter_cheated);
    CHECK((o.asserter_verdict == protocol::Verdict::honest) == rec.asserter_output_correct);
    CHECK((o.validator_verdict == protocol::Verdict::honest) == rec.validator_output_correct);
  }
  CHECK(m.executors[cheat].ledger_net ==
        -static_cast<protocol::Amount>(m.arbitrations) * cfg.network.slash);
  CHECK(m.executors[cheat].payoff < 0.0);
}

TEST_CASE("adversary budget is floor(rN)") {
  auto cfg = base(100, 0.0, 0);
  cfg.byzantine_fraction = 0.1;
  cfg.executor_adversaries = {executors(ExecutorStrategy::always_fraud, std::nullopt)};
  CHECK(assign_adversaries(cfg).byzantine_executors().size() == 10);
  CHECK(executor_budget(0.3, 10) == 3);
  CHECK(executor_budget(0.29, 10) == 2);

  cfg.executor_adversaries = {executors(ExecutorStrategy::always_fraud, 8),
                              executors(ExecutorStrategy::unresponsive, 3)};
  CHECK_THROWS_AS(assign_adversaries(cfg), ConfigError);

  cfg.executor_adversaries.clear();
  OrchestratorGroupSpec o;
  o.count = 2;
  cfg.orchestrator_adversaries = {o};
  CHECK_THROWS_AS(assign_adversaries(cfg), ConfigError);

  // Placement depends on the master seed.
  auto other = base(100, 0.0, 0);
  other.byzantine_fraction = 0.1;
  other.executor_adversaries = {executors(ExecutorStrategy::always_fraud, std::nullopt)};
  auto moved = other;
  moved.master_seed = filled(0x02);
  CHECK(assign_adversaries(other).byzantine_executors() != assign_adversaries(moved).byzantine_executors());
  CHECK(assign_adversaries(other).byzantine_executors() == assign_adversaries(other).byzantine_executors());
}

TEST_CASE("a colluding pair passes matched fraud") {
  auto cfg = base(3, 1.0, 150);
  cfg.byzantine_fraction = 0.67;
  auto spec = executors(ExecutorStrategy::collude, 2);
  spec.group = 0;
  cfg.executor_adversaries = {spec};
  const auto res = run(cfg);
  const auto& m = res.metrics;
  check_invariants(m);
  CHECK(m.undetected_frauds > 0);
  CHECK(m.fraudulent_assertions > m.undetected_frauds);
  CHECK(m.arbitrations + m.undetected_frauds == m.fraudulent_assertions);
  CHECK(m.matched >= m.undetected_frauds);
  // A pair sharing output never reaches arbitration against itself.
  const auto byz = res.behaviors.byzantine_executors();
  for (const auto& rec : res.arbitrations) {
    const bool both = std::count(byz.begin(), byz.end(), rec.outcome.asserter) &&
                      std::count(byz.begin(), byz.end(), rec.outcome.validator);
    CHECK_FALSE(both);
  }
}

TEST_CASE("runs are deterministic") {
  auto cfg = base(10, 0.3, 100);
  cfg.byzantine_fraction = 0.2;
  cfg.executor_adversaries = {executors(ExecutorStrategy::fraud_with_probability, 1, 0.5),
                              executors(ExecutorStrategy::unresponsive, 1, 0.5)};
  OrchestratorGroupSpec o;
  o.strategy = OrchestratorStrategy::equivocate;
  cfg.orchestrator_adversaries = {o};
  const auto a = run(cfg);
  const auto b = run(cfg);
  check_invariants(a.metrics);
  REQUIRE(a.metrics.trace_hash);
  CHECK(a.metrics.trace_hash == b.metrics.trace_hash);
  CHECK(a.ledger == b.ledger);
  CHECK(a.metrics.timeouts > 0);

  auto other = cfg;
  other.master_seed.bytes[31] ^= 0x01;
  CHECK(run(other).metrics.trace_hash != a.metrics.trace_hash);

  cfg.trace = false;
  CHECK_FALSE(run(cfg).metrics.trace_hash);
}

TEST_CASE("liveness with f Byzantine orchestrators") {
  for (auto strategy : {OrchestratorStrategy::withhold, OrchestratorStrategy::equivocate}) {
    CAPTURE(to_string(strategy));
    auto cfg = base(8, 0.5, 60);
    cfg.network.fault_bound = 2;
    OrchestratorGroupSpec o;
    o.strategy = strategy;
    o.count = 2;
    cfg.orchestrator_adversaries = {o};
    const auto res = run(cfg);
    check_invariants(res.metrics);
    CHECK(res.metrics.concluded == 60);
    CHECK(res.metrics.correct_results == 60);
  }
}

TEST_CASE("unresponsive executors are replaced and penalized") {
  auto cfg = base(6, 0.5, 120);
  cfg.byzantine_fraction = 0.34;
  cfg.executor_adversaries = {executors(ExecutorStrategy::unresponsive, 2, 1.0)};
  const auto res = run(cfg);
  const auto& m = res.metrics;
  check_invariants(m);
  CHECK(m.timeouts > 0);
  CHECK(m.reassignments > 0);
  CHECK(m.concluded == 120);
  for (ExecutorId e : res.behaviors.byzantine_executors()) CHECK(m.executors[e].ledger_net <= 0);
}

TEST_CASE("leaking orchestrator") {
  auto cfg = base(10, 1.0, 60);
  OrchestratorGroupSpec o;
  o.strategy = OrchestratorStrategy::leak;
  cfg.orchestrator_adversaries = {o};

  SUBCASE("without Byzantine validators the run is unchanged") {
    const auto leaked = leak_attack(cfg);
    auto honest = cfg;
    honest.orchestrator_adversaries.clear();
    check_invariants(leaked.metrics);
    CHECK(leaked.metrics.trace_hash == run(honest).metrics.trace_hash);
  }
  SUBCASE("free riders copy leaked outputs and the honest asserter stays correct") {
    cfg.byzantine_fraction = 0.3;
    cfg.executor_adversaries = {executors(ExecutorStrategy::free_rider, 3)};
    const auto res = leak_attack(cfg);
    check_invariants(res.metrics);
    CHECK(res.metrics.correct_results == 60);
    CHECK(res.metrics.arbitrations == 0);
    CHECK(res.metrics.matched == 60);
  }
  SUBCASE("requires a leak orchestrator") {
    cfg.orchestrator_adversaries.clear();
    CHECK_THROWS_AS(leak_attack(cfg), ConfigError);
  }
}

TEST_CASE("colluding user") {
  auto cfg = base(10, 0.0, 30);
  cfg.byzantine_fraction = 0.1;
  cfg.user_adversaries = {UserSpec{0, 3}};
  const auto res = run(cfg);
  const auto& m = res.metrics;
  check_invariants(m);
  CHECK(res.behaviors.executors.at(3).user_partner);
  // The partner fabricates only when it is the asserter, and nothing is challenged.
  CHECK(m.fraudulent_assertions > 0);
  CHECK(m.undetected_frauds == m.fraudulent_assertions);
  CHECK(m.correct_results + m.undetected_frauds == 30);

  cfg.network.challenge_prob = 1.0;
  const auto caught = run(cfg).metrics;
  check_invariants(caught);
  CHECK(caught.arbitrations == caught.fraudulent_assertions);
  CHECK(caught.correct_results == 30);
}

TEST_CASE("estimator exact cases") {
  auto cfg = base(11, 0.0, 0);
  EstimateOptions opts;
  opts.trials = 40;
  SUBCASE("honest without challenges earns R - C") {
    const auto est = estimate_strategy_payoff(cfg, FocalStrategy::honest, opts);
    CHECK(est.mean == doctest::Approx(0.2));
    CHECK(est.std_error == doctest::Approx(0.0));
    CHECK(est.challenged == 0);
    CHECK(est.invariant_failures == 0);
  }
  SUBCASE("fraud under certain challenge loses S") {
    cfg.network.challenge_prob = 1.0;
    const auto est = estimate_strategy_payoff(cfg, FocalStrategy::always_fraud, opts);
    CHECK(est.mean == doctest::Approx(-150.0));
    CHECK(est.arbitrations == 40);
    CHECK(est.arbitration_violations == 0);
    CHECK(est.cheat_pass_rate == 0.0);
  }
  SUBCASE("fraud without challenges passes") {
    const auto est = estimate_strategy_payoff(cfg, FocalStrategy::always_fraud, opts);
    CHECK(est.mean == doctest::Approx(1.2));
    CHECK(est.cheat_pass_rate == 1.0);
  }
  SUBCASE("option checks") {
    opts.trials = 0;
    CHECK_THROWS_AS(estimate_strategy_payoff(cfg, FocalStrategy::honest, opts), std::invalid_argument);
    opts.trials = 1;
    opts.colluding_fraction = 1.5;
    CHECK_THROWS_AS(estimate_strategy_payoff(cfg, FocalStrategy::honest, opts), std::invalid_argument);
    opts.colluding_fraction = 0.0;
    opts.proposal_p = 1.0;
    CHECK_THROWS_AS(estimate_strategy_payoff(cfg, FocalStrategy::honest, opts), std::invalid_argument);
  }
}

TEST_CASE("estimator agrees with the exact expectation") {
  auto cfg = base(11, 0.0, 0);
  const double rho = 0.1;
  const double min_p = *econ::spml_min_p(1.0, 150.0, 1.2, rho);
  cfg.network.challenge_prob = 1.05 * min_p;
  EstimateOptions opts;
  opts.trials = 3000;
  opts.colluding_fraction = rho;
  opts.proposal_p = 0.5;
  const auto est = estimate_strategy_payoff(cfg, FocalStrategy::always_fraud, opts);
  CHECK(est.sampled_p == 0.5);
  CHECK(est.arbitration_violations == 0);
  CHECK(est.invariant_failures == 0);

  // One colluder among ten others: echo probability 1/10 exactly.
  auto params = econ::EconomicParams::spml(1.0, 150.0, 1.2, rho, cfg.network.challenge_prob);
  const double exact = econ::brute_force_expected_payoff(
      params, econ::CollusionModel{rho, econ::Sampling::with_replacement, 0}, econ::AsserterStrategy::fraud);
  CHECK(std::fabs(est.mean - exact) <= 3.0 * est.std_error);

  // Reweighting to a different p follows the linear expectation.
  const auto at_zero_ish = reweighted(est, 0.001);
  const auto at_half = reweighted(est, 0.5);
  CHECK(at_half.mean == doctest::Approx(est.samples.empty() ? 0.0 : [&] {
          double s = 0.0;
          for (const auto& t : est.samples) s += t.payoff;
          return s / static_cast<double>(est.samples.size());
        }()));
  CHECK(at_zero_ish.mean > at_half.mean);
}

TEST_CASE("request inputs and seeds") {
  const auto seeds = RunSeeds::derive(filled(0x09));
  CHECK(seeds.beacon != seeds.inputs);
  CHECK(seeds.inputs != seeds.coins);
  CHECK(request_input(seeds.inputs, 0, 8) == request_input(seeds.inputs, 0, 8));
  CHECK(request_input(seeds.inputs, 0, 8) != request_input(seeds.inputs, 1, 8));
  CHECK(request_input(seeds.inputs, 3, 8).size() == 8);

  BeaconOracle beacon(filled(0x0a));
  CHECK_FALSE(beacon.drawn_at(4));
  const auto tau = beacon.get(4, 5, 17);
  CHECK(tau == BeaconOracle::seed_at(filled(0x0a), 4));
  CHECK(beacon.drawn_at(4) == 17u);
  beacon.get(4, 6, 20);
  CHECK(beacon.drawn_at(4) == 17u);
}

TEST_CASE("scenario JSON") {
  const std::string text = R"({
    "seed": "0000000000000000000000000000000000000000000000000000000000000001",
    "requests": 50, "users": 2,
    "network": {"N": 10, "f": 1, "p": 0.3},
    "economics": {"C": 1, "S": 150, "R": 1.2},
    "adversaries": {"r": 0.2, "executors": [{"strategy": "always_fraud", "count": 1},
                                            {"strategy": "unresponsive", "q": 0.5, "count": 1}],
                    "orchestrators": [{"strategy": "equivocate", "count": 1}]}
  })";
  const auto cfg = parse_scenario(text);
  CHECK(cfg.requests == 50);
  CHECK(cfg.network.executors == 10);
  CHECK(cfg.network.payment == protocol::to_units(3.6));
  CHECK(cfg.network.timeout_penalty == protocol::to_units(15.0));
  CHECK(cfg.executor_adversaries.size() == 2);
  CHECK(cfg.executor_adversaries[1].q == 0.5);
  CHECK(cfg.orchestrator_adversaries.at(0).strategy == OrchestratorStrategy::equivocate);

  const auto json = scenario_to_json(cfg);
  CHECK(scenario_to_json(parse_scenario(json)) == json);
  CHECK(run(parse_scenario(json)).metrics.trace_hash == run(cfg).metrics.trace_hash);
}

TEST_CASE("scenario validation") {
  auto errors_of = [](const std::string& text) {
    try {
      parse_scenario(text);
    } catch (const ConfigError& e) {
      return e.errors();
    }
    return std::vector<std::string>{};
  };
  const std::string seed = R"("seed": "0000000000000000000000000000000000000000000000000000000000000001")";
  CHECK(errors_of("{" + seed + "}").empty());
  CHECK_FALSE(errors_of("{}").empty());
  CHECK_FALSE(errors_of("not json").empty());
  CHECK_FALSE(errors_of("{" + seed + R"(, "bogus": 1})").empty());
  CHECK_FALSE(errors_of("{" + seed + R"(, "network": {"N": "ten"}})").empty());
  CHECK_FALSE(errors_of("{" + seed + R"(, "network": {"p": 1.5}})").empty());
  CHECK_FALSE(errors_of("{" + seed + R"(, "adversaries": {"r": 1.0}})").empty());
  CHECK_FALSE(errors_of("{" + seed + R"(, "adversaries": {"executors": [{"strategy": "sneaky"}]}})").empty());
  CHECK_FALSE(errors_of("{" + seed + R"(, "economics": {"B": 1, "R": 1.2}})").empty());
  // Several problems are reported together.
  CHECK(errors_of("{" + seed + R"(, "users": 0, "network": {"p": -1}})").size() >= 2);
}
