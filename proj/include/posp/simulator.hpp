// Deterministic discrete-event simulator. Events are ordered by
// (tick, sequence number); all randomness derives from the master seed.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "posp/contracts.hpp"
#include "posp/scenario.hpp"

namespace posp::sim {

enum class LogLevel { off, summary, events };

/// Reads POSP_LOG (off | summary | events); unset or unknown means off.
LogLevel log_level_from_env();

/// Immutable material shared by every run of a scenario: the model and the
/// key pairs of all nodes.
struct World {
  model::ToyModel model;
  std::vector<crypto::KeyPair> user_keys;
  std::vector<crypto::KeyPair> orchestrator_keys;
  std::vector<crypto::KeyPair> executor_keys;
  protocol::Pki pki;
};

World build_world(const ScenarioConfig& cfg);

/// Per-run randomness: beacon root, request inputs and node coins.
struct RunSeeds {
  crypto::Seed beacon;
  crypto::Seed inputs;
  crypto::Seed coins;

  static RunSeeds derive(const crypto::Seed& parent);
};

struct RunOptions {
  bool trace = true;
  LogLevel log = LogLevel::off;
};

/// Lazily drawn per-epoch seeds tau_t = prf(root, be64(t)).
class BeaconOracle {
 public:
  explicit BeaconOracle(const crypto::Seed& root) : root_(root) {}

  /// Throws protocol::ProtocolViolation when t > current.
  const crypto::Seed& get(protocol::Epoch t, protocol::Epoch current, std::uint64_t event);
  /// Event index at which epoch t was first drawn.
  std::optional<std::uint64_t> drawn_at(protocol::Epoch t) const;

  static crypto::Seed seed_at(const crypto::Seed& root, protocol::Epoch t);

 private:
  crypto::Seed root_;
  std::map<protocol::Epoch, std::pair<crypto::Seed, std::uint64_t>> seeds_;
};

struct NodePayoff {
  Amount ledger_net = 0;          // settled balance change
  std::uint64_t evaluations = 0;  // honest forward() runs
  double payoff = 0.0;            // tokens, ledger_net - C * evaluations
};

struct MetricsReport {
  std::uint64_t requests = 0;
  std::uint64_t concluded = 0;
  std::uint64_t settled = 0;
  std::uint64_t results_delivered = 0;
  std::uint64_t correct_results = 0;
  std::uint64_t unchallenged = 0;
  std::uint64_t challenges = 0;
  std::uint64_t matched = 0;
  std::uint64_t arbitrations = 0;
  std::uint64_t undetected_frauds = 0;
  std::uint64_t detected_frauds = 0;
  std::uint64_t fraudulent_assertions = 0;
  std::uint64_t passed_fraudulent_assertions = 0;
  std::uint64_t timeouts = 0;
  std::uint64_t reassignments = 0;
  std::uint64_t rejected_batches = 0;
  double challenge_rate = 0.0;
  double cheat_pass_rate = 0.0;

  std::uint64_t arbitration_violations = 0;
  std::uint64_t conservation_violations = 0;
  std::uint64_t phase_violations = 0;
  std::uint64_t causality_violations = 0;
  bool supply_conserved = true;
  bool all_settled = true;

  Amount opening_supply = 0;
  Amount circulating = 0;
  Amount burned = 0;
  std::vector<NodePayoff> executors;
  std::vector<Amount> users;

  std::uint64_t events = 0;
  Tick end_tick = 0;
  std::optional<crypto::Digest> trace_hash;

  bool invariants_hold() const {
    return arbitration_violations == 0 && conservation_violations == 0 && phase_violations == 0 &&
           causality_violations == 0 && supply_conserved && all_settled;
  }
};

/// One arbitration as seen by the simulator, with independently
/// recomputed correctness of both outputs.
struct ArbitrationRecord {
  protocol::ArbitrationOutcome outcome;
  bool asserter_output_correct = false;
  bool validator_output_correct = false;
};

struct RunResult {
  MetricsReport metrics;
  std::map<protocol::Account, Amount> ledger;
  std::vector<ArbitrationRecord> arbitrations;
  BehaviorTable behaviors;
};

RunResult run(const ScenarioConfig& cfg, const RunOptions& options = {});
RunResult run(const ScenarioConfig& cfg, const World& world, const BehaviorTable& behaviors,
              const RunSeeds& seeds, const RunOptions& options = {});

/// run() for scenarios with at least one leaking orchestrator; throws
/// ConfigError otherwise.
RunResult leak_attack(const ScenarioConfig& cfg, const RunOptions& options = {});

/// Input vector of request k.
model::Vector request_input(const crypto::Seed& inputs, std::uint64_t k, std::size_t dim);

}  // namespace posp::sim
