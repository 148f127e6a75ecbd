// Scenario description for the simulator and its JSON form.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "posp/executor.hpp"
#include "posp/orchestrator.hpp"
#include "posp/user.hpp"

namespace posp::sim {

using protocol::Amount;
using protocol::ExecutorId;
using protocol::Tick;

/// Aggregated field-level validation failures.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

struct ExecutorGroupSpec {
  protocol::ExecutorStrategy strategy = protocol::ExecutorStrategy::always_fraud;
  /// Nodes with this behaviour; absent means the rest of the floor(r N) budget.
  std::optional<std::uint32_t> count;
  double q = 1.0;
  std::optional<std::uint32_t> group;
  model::CorruptMode corrupt = model::CorruptMode::flip_last_bit;
};

struct OrchestratorGroupSpec {
  protocol::OrchestratorStrategy strategy = protocol::OrchestratorStrategy::withhold;
  std::uint32_t count = 1;
};

struct UserSpec {
  protocol::UserId user = 0;
  ExecutorId collude_with = 0;
};

struct ScenarioConfig {
  protocol::NetworkConfig network;
  crypto::Seed master_seed;
  std::uint64_t requests = 0;
  std::uint32_t users = 1;
  Tick arrival_interval = 1;
  std::vector<std::size_t> model_dims{8, 16, 8, 4};
  double byzantine_fraction = 0.0;  // r, executor adversary budget
  std::vector<ExecutorGroupSpec> executor_adversaries;
  std::vector<OrchestratorGroupSpec> orchestrator_adversaries;
  std::vector<UserSpec> user_adversaries;
  bool trace = true;
  /// Hard stop; 0 picks last arrival epoch + 1000.
  std::uint64_t max_epochs = 0;
};

std::vector<std::string> validation_errors(const ScenarioConfig& cfg);
void require_valid(const ScenarioConfig& cfg);

/// Parses and validates; throws ConfigError.
ScenarioConfig parse_scenario(const std::string& json_text);
ScenarioConfig load_scenario(const std::string& path);
/// Canonical JSON with sorted keys; parse_scenario(to_json(c)) == c.
std::string scenario_to_json(const ScenarioConfig& cfg);

struct BehaviorTable {
  std::vector<protocol::ExecutorBehavior> executors;
  std::vector<protocol::OrchestratorBehavior> orchestrators;
  std::vector<protocol::UserBehavior> users;

  std::vector<ExecutorId> byzantine_executors() const;
  std::size_t byzantine_orchestrators() const;
};

/// Places adversaries on nodes chosen by a permutation derived from the
/// master seed. Throws ConfigError when the executor adversaries exceed
/// floor(r N) or the orchestrator adversaries exceed f.
BehaviorTable assign_adversaries(const ScenarioConfig& cfg);

/// Floor of r N with a small tolerance for binary rounding of r.
std::uint32_t executor_budget(double r, std::uint32_t n);

std::string_view to_string(protocol::ExecutorStrategy s);
std::string_view to_string(protocol::OrchestratorStrategy s);
std::string_view to_string(model::CorruptMode m);

}  // namespace posp::sim
