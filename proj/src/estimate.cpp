#include "posp/estimate.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace posp::sim {
namespace {

constexpr std::uint32_t kCoalition = 0;

// Draws `count` colluders uniformly from the executors other than `focal`.
std::vector<ExecutorId> draw_colluders(const crypto::Seed& seed, std::uint32_t n, ExecutorId focal,
                                       std::uint32_t count) {
  std::vector<ExecutorId> pool;
  for (ExecutorId e = 0; e < n; ++e) {
    if (e != focal) pool.push_back(e);
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto j = i + crypto::bucket(seed, crypto::be64(i), pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace

PayoffEstimate estimate_strategy_payoff(const ScenarioConfig& cfg, FocalStrategy strategy,
                                        const EstimateOptions& options) {
  if (options.trials == 0) throw std::invalid_argument("trials must be at least 1");
  if (!(options.colluding_fraction >= 0.0 && options.colluding_fraction <= 1.0)) {
    throw std::invalid_argument("colluding_fraction must lie in [0, 1]");
  }
  if (options.proposal_p && !(*options.proposal_p > 0.0 && *options.proposal_p < 1.0)) {
    throw std::invalid_argument("proposal_p must lie in (0, 1)");
  }

  ScenarioConfig base = cfg;
  base.requests = 1;
  base.users = 1;
  base.trace = false;
  base.executor_adversaries.clear();
  base.orchestrator_adversaries.clear();
  base.user_adversaries.clear();
  base.byzantine_fraction = 0.0;
  const double p = cfg.network.challenge_prob;
  if (options.proposal_p) base.network.challenge_prob = *options.proposal_p;
  require_valid(base);

  const auto& net = base.network;
  const std::uint32_t n = net.executors;
  const auto colluders =
      static_cast<std::uint32_t>(std::floor(options.colluding_fraction * (n - 1) + 1e-9));
  const World world = build_world(base);
  const protocol::PublicKey& pk = world.pki.users.front();
  const protocol::Epoch t_req = net.epoch_of(1 + net.message_delay) + 1;

  BehaviorTable table;
  table.orchestrators.assign(net.committee_size(), {});
  table.users.assign(1, {});
  const RunOptions quiet{false, LogLevel::off};

  PayoffEstimate out;
  out.trials = options.trials;
  out.sampled_p = base.network.challenge_prob;
  out.samples.reserve(options.trials);
  for (std::uint64_t t = 0; t < options.trials; ++t) {
    crypto::Seed trial;
    trial.bytes = crypto::prf(cfg.master_seed, crypto::be64(t)).bytes;
    const RunSeeds seeds = RunSeeds::derive(trial);

    const model::Vector x = request_input(seeds.inputs, 0, world.model.input_dim());
    const protocol::RequestId reqid = crypto::derive_reqid(pk, model::encode(x), crypto::be64(0));
    const ExecutorId focal =
        protocol::orch_select_asserter(reqid, pk, x, BeaconOracle::seed_at(seeds.beacon, t_req), n);

    table.executors.assign(n, {});
    auto& fb = table.executors[focal];
    fb.strategy = strategy == FocalStrategy::always_fraud ? protocol::ExecutorStrategy::always_fraud
                                                          : protocol::ExecutorStrategy::honest;
    std::vector<ExecutorId> coalition{focal};
    if (colluders > 0) {
      fb.group = kCoalition;
      for (ExecutorId c : draw_colluders(crypto::derive_seed(trial, "colluders"), n, focal, colluders)) {
        table.executors[c].group = kCoalition;
        coalition.push_back(c);
      }
    }

    const RunResult res = run(base, world, table, seeds, quiet);
    const MetricsReport& m = res.metrics;
    double payoff = 0.0;
    for (ExecutorId c : coalition) payoff += m.executors[c].payoff;

    const bool challenged = m.challenges > 0;
    out.samples.push_back({payoff, challenged});
    out.challenged += challenged ? 1 : 0;
    out.fraudulent += m.fraudulent_assertions;
    out.passed += m.passed_fraudulent_assertions;
    out.arbitrations += m.arbitrations;
    out.arbitration_violations += m.arbitration_violations;
    if (!m.invariants_hold()) ++out.invariant_failures;
  }

  out.cheat_pass_rate =
      out.fraudulent == 0 ? 0.0 : static_cast<double>(out.passed) / static_cast<double>(out.fraudulent);
  return reweighted(out, p);
}

PayoffEstimate reweighted(const PayoffEstimate& est, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0, 1]");
  const double q = est.sampled_p;
  const double w_chal = p == q ? 1.0 : q > 0.0 ? p / q : -1.0;
  const double w_pass = p == q ? 1.0 : q < 1.0 ? (1.0 - p) / (1.0 - q) : -1.0;
  if (w_chal < 0.0 || w_pass < 0.0) {
    throw std::invalid_argument("samples drawn at p = " + std::to_string(q) + " cannot be reweighted");
  }
  PayoffEstimate out = est;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (const TrialOutcome& s : est.samples) {
    const double v = (s.challenged ? w_chal : w_pass) * s.payoff;
    sum += v;
    sum_sq += v * v;
  }
  const auto k = static_cast<double>(est.samples.size());
  out.mean = k > 0 ? sum / k : 0.0;
  out.std_error = 0.0;
  if (k > 1) {
    const double var = std::max(0.0, (sum_sq - k * out.mean * out.mean) / (k - 1.0));
    out.std_error = std::sqrt(var / k);
  }
  return out;
}

}  // namespace posp::sim
