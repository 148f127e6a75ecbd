// Closed-form payoff analysis of the sampling verification game and an
// exhaustive-enumeration oracle for small validator counts.
//
// All quantities are in token units as binary64. Functions taking
// EconomicParams throw std::invalid_argument when the record is invalid.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace posp::econ {

struct EconomicParams {
  double payment = 0.0;            // B
  double asserter_reward = 0.0;    // R_A
  double validator_reward = 0.0;   // R_V, shared by the n validators
  double slash = 0.0;              // S
  double compute_cost = 0.0;       // C
  double challenge_prob = 0.0;     // p
  double byzantine_fraction = 0.0; // r
  int validators = 1;              // n
  double unchallenged_gain = 0.0;  // U1
  double captured_gain = 0.0;      // U2
  double opml_check_gain = 0.0;    // R_C

  /// The n = 1 instantiation with R_A = R_V = U1 = R and U2 = 2R.
  static EconomicParams spml(double compute_cost, double slash, double reward,
                             double byzantine_fraction, double challenge_prob = 0.0,
                             double payment = 0.0, double opml_check_gain = 0.0);
};

/// Field-level messages for every violated invariant; empty when valid.
std::vector<std::string> validation_errors(const EconomicParams& params);
void require_valid(const EconomicParams& params);

struct AssumptionCheck {
  bool holds = false;
  std::vector<std::string> violated;
};

/// S > nC, R_A - C > -S and R_V/n - C > -S, all strict.
AssumptionCheck check_assumption1(const EconomicParams& params);

enum class BoundKind { lower, upper, exact };

struct BoundedValue {
  double value = 0.0;
  BoundKind kind = BoundKind::exact;
};

/// Non-colluding validator payoff, indexed [validator correct?][asserter correct?]
/// with index 0 = correct.
struct PayoffMatrixBound {
  std::array<std::array<BoundedValue, 2>, 2> entries{};

  const BoundedValue& at(bool validator_correct, bool asserter_correct) const {
    return entries[validator_correct ? 0 : 1][asserter_correct ? 0 : 1];
  }
};

PayoffMatrixBound validator_payoff_matrix(const EconomicParams& params);

enum class Sampling { with_replacement, without_replacement };

/// Share rho of the network that would echo a fraudulent asserter's result.
struct CollusionModel {
  double rho = 0.0;
  Sampling sampling = Sampling::with_replacement;
  /// Population size; consulted only for without_replacement draws.
  int network_size = 0;

  /// Number of colluders in the population, round(rho * network_size).
  int colluder_count() const;
};

/// Throws std::invalid_argument if rho is outside [0, r] or the
/// without-replacement population cannot host n distinct validators.
void require_valid(const CollusionModel& model, const EconomicParams& params);

/// (1-p)(R_A - C) + p(R_V/n * E[k] + R_A - C), E[k] = n rho.
double honest_payoff_lower_bound(const EconomicParams& params, const CollusionModel& model);

/// (1-p)U1 + p rho^n U2 + p sum_{i<n} C(n,i) rho^i (1-rho)^(n-i) (R_V/n * i - S).
/// Throws std::invalid_argument for n > 64 and std::domain_error for
/// without-replacement models (the closed form assumes independent draws).
double fraud_payoff_upper_bound(const EconomicParams& params, const CollusionModel& model);

/// Exact C(n, k) for n <= 64.
std::uint64_t binomial(int n, int k);

/// LHS - RHS of R_A + pS - (1-p)U1 - C > p r^n (U2 + S).
double theorem1_margin(const EconomicParams& params);

/// Smallest p in [0,1] at which theorem1_margin stops being negative, or
/// nullopt when no p in [0,1] satisfies the condition.
std::optional<double> min_challenge_probability(const EconomicParams& params);

/// C / ((1-r)S + (1-2r)R); nullopt when the denominator is not positive.
std::optional<double> spml_min_p(double compute_cost, double slash, double reward,
                                 double byzantine_fraction);

/// Mixed-equilibrium undetected fraud rate of the optimistic scheme,
/// (S+R-C)C / ((S+R)(R_C+C)) clamped to [0,1].
double opml_undetected_fraud_probability(double compute_cost, double slash, double reward,
                                         double check_gain);

/// (1-p) + p r.
double cheat_pass_probability(double p, double r);

enum class AsserterStrategy { honest, fraud };

/// Exhaustive expectation over {no challenge, challenge} x every
/// colluder/honest pattern of the n sampled validators. Colluders echo the
/// asserter (for free) and are counted in the asserter's coalition payoff.
/// Throws std::invalid_argument for n > 12.
double brute_force_expected_payoff(const EconomicParams& params, const CollusionModel& model,
                                   AsserterStrategy strategy);

}  // namespace posp::econ
