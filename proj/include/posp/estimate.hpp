// Monte Carlo estimate of a focal executor's payoff per asserted request.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "posp/simulator.hpp"

namespace posp::sim {

enum class FocalStrategy { honest, always_fraud };

struct EstimateOptions {
  std::uint64_t trials = 1;
  /// Share of the other N-1 executors that echo the focal node's output
  /// when sampled as validator. They count towards the focal payoff.
  double colluding_fraction = 0.0;
  /// Challenge probability the trials actually run with. Outcomes are
  /// reweighted to the configured p, so the mean stays unbiased while
  /// rare challenged branches are observed more often.
  std::optional<double> proposal_p;
};

struct TrialOutcome {
  double payoff = 0.0;  // coalition payoff in tokens, unweighted
  bool challenged = false;
};

struct PayoffEstimate {
  double mean = 0.0;       // tokens per request
  double std_error = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t challenged = 0;
  std::uint64_t fraudulent = 0;
  std::uint64_t passed = 0;
  double cheat_pass_rate = 0.0;  // passed / fraudulent, unweighted
  std::uint64_t arbitrations = 0;
  std::uint64_t arbitration_violations = 0;
  std::uint64_t invariant_failures = 0;
  /// Challenge probability the trials ran with.
  double sampled_p = 0.0;
  std::vector<TrialOutcome> samples;
};

/// Each trial is a one-request run of `cfg` (its adversary lists and
/// request count are ignored) with per-trial seeds prf(master, trial). The
/// focal node is whichever executor the beacon makes asserter. Throws
/// std::invalid_argument for zero trials or options out of range.
PayoffEstimate estimate_strategy_payoff(const ScenarioConfig& cfg, FocalStrategy strategy,
                                        const EstimateOptions& options);

/// Mean and standard error of the same trials reweighted to challenge
/// probability p. Outcomes do not depend on p beyond the challenge coin, so
/// one sample set serves a whole p axis. Throws std::invalid_argument when
/// a branch p needs was never sampled (sampled_p of 0 or 1).
PayoffEstimate reweighted(const PayoffEstimate& est, double p);

}  // namespace posp::sim
