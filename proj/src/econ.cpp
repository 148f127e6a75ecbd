#include "posp/econ.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace posp::econ {
namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += "; ";
    out += s;
  }
  return out;
}

void need_nonneg(std::vector<std::string>& errs, const char* name, double v) {
  if (!(v >= 0.0) || !std::isfinite(v)) errs.push_back(std::string(name) + " must be a finite value >= 0");
}

// Probability weight of one ordered colluder(1)/honest(0) pattern.
double pattern_weight(unsigned mask, int n, const CollusionModel& model) {
  if (model.sampling == Sampling::with_replacement) {
    int m = std::popcount(mask);
    return std::pow(model.rho, m) * std::pow(1.0 - model.rho, n - m);
  }
  const int pop = model.network_size;
  const int colluders = model.colluder_count();
  int taken_c = 0;
  int taken_h = 0;
  double w = 1.0;
  for (int pos = 0; pos < n; ++pos) {
    const int remaining = pop - pos;
    if (mask & (1u << pos)) {
      w *= static_cast<double>(colluders - taken_c) / remaining;
      ++taken_c;
    } else {
      w *= static_cast<double>(pop - colluders - taken_h) / remaining;
      ++taken_h;
    }
  }
  return w;
}

double expected_colluders(const EconomicParams& params, const CollusionModel& model) {
  if (model.sampling == Sampling::with_replacement) {
    return params.validators * model.rho;
  }
  return params.validators * static_cast<double>(model.colluder_count()) / model.network_size;
}

}  // namespace

EconomicParams EconomicParams::spml(double compute_cost, double slash, double reward,
                                    double byzantine_fraction, double challenge_prob,
                                    double payment, double opml_check_gain) {
  EconomicParams p;
  p.payment = payment > 0.0 ? payment : 3.0 * reward;
  p.asserter_reward = reward;
  p.validator_reward = reward;
  p.slash = slash;
  p.compute_cost = compute_cost;
  p.challenge_prob = challenge_prob;
  p.byzantine_fraction = byzantine_fraction;
  p.validators = 1;
  p.unchallenged_gain = reward;
  p.captured_gain = 2.0 * reward;
  p.opml_check_gain = opml_check_gain;
  return p;
}

std::vector<std::string> validation_errors(const EconomicParams& params) {
  std::vector<std::string> errs;
  need_nonneg(errs, "B", params.payment);
  need_nonneg(errs, "R_A", params.asserter_reward);
  need_nonneg(errs, "R_V", params.validator_reward);
  need_nonneg(errs, "S", params.slash);
  need_nonneg(errs, "C", params.compute_cost);
  need_nonneg(errs, "U1", params.unchallenged_gain);
  need_nonneg(errs, "U2", params.captured_gain);
  need_nonneg(errs, "R_C", params.opml_check_gain);
  if (!(params.challenge_prob >= 0.0 && params.challenge_prob <= 1.0)) {
    errs.emplace_back("p must lie in [0, 1]");
  }
  if (!(params.byzantine_fraction >= 0.0 && params.byzantine_fraction < 1.0)) {
    errs.emplace_back("r must lie in [0, 1)");
  }
  if (params.validators < 1) {
    errs.emplace_back("n must be >= 1");
  }
  if (!(params.asserter_reward + params.validator_reward < params.payment)) {
    errs.emplace_back("R_A + R_V must be < B");
  }
  return errs;
}

void require_valid(const EconomicParams& params) {
  auto errs = validation_errors(params);
  if (!errs.empty()) throw std::invalid_argument(join(errs));
}

int CollusionModel::colluder_count() const {
  return static_cast<int>(std::lround(rho * network_size));
}

void require_valid(const CollusionModel& model, const EconomicParams& params) {
  if (!(model.rho >= 0.0 && model.rho <= params.byzantine_fraction)) {
    throw std::invalid_argument("rho must lie in [0, r]");
  }
  if (model.sampling == Sampling::without_replacement && model.network_size < params.validators) {
    throw std::invalid_argument("without-replacement sampling needs network_size >= n");
  }
}

AssumptionCheck check_assumption1(const EconomicParams& params) {
  require_valid(params);
  const double n = params.validators;
  const double c = params.compute_cost;
  const double s = params.slash;
  AssumptionCheck out;
  if (!(s > n * c)) out.violated.emplace_back("S>nC");
  if (!(params.asserter_reward - c > -s)) out.violated.emplace_back("R_A-C>-S");
  if (!(params.validator_reward / n - c > -s)) out.violated.emplace_back("R_V/n-C>-S");
  out.holds = out.violated.empty();
  return out;
}

PayoffMatrixBound validator_payoff_matrix(const EconomicParams& params) {
  require_valid(params);
  const double share = params.validator_reward / params.validators;
  const double c = params.compute_cost;
  const double s = params.slash;
  PayoffMatrixBound m;
  m.entries[0][0] = {share - c, BoundKind::lower};
  m.entries[0][1] = {share - c + s / params.validators, BoundKind::lower};
  m.entries[1][0] = {-s, BoundKind::exact};
  m.entries[1][1] = {share, BoundKind::upper};
  return m;
}

double honest_payoff_lower_bound(const EconomicParams& params, const CollusionModel& model) {
  require_valid(params);
  require_valid(model, params);
  const double p = params.challenge_prob;
  const double base = params.asserter_reward - params.compute_cost;
  const double ek = expected_colluders(params, model);
  return (1.0 - p) * base + p * (params.validator_reward / params.validators * ek + base);
}

std::uint64_t binomial(int n, int k) {
  if (n < 0 || n > 64) throw std::invalid_argument("binomial: n must lie in [0, 64]");
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 c = 1;
  for (int i = 0; i < k; ++i) {
    c = c * static_cast<unsigned>(n - i) / static_cast<unsigned>(i + 1);
  }
  return static_cast<std::uint64_t>(c);
}

double fraud_payoff_upper_bound(const EconomicParams& params, const CollusionModel& model) {
  require_valid(params);
  require_valid(model, params);
  const int n = params.validators;
  if (n > 64) throw std::invalid_argument("fraud_payoff_upper_bound: n must be <= 64");
  if (model.sampling != Sampling::with_replacement) {
    throw std::domain_error("fraud_payoff_upper_bound: closed form assumes with-replacement draws");
  }
  const double p = params.challenge_prob;
  const double rho = model.rho;
  double tail = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = static_cast<double>(binomial(n, i)) * std::pow(rho, i) * std::pow(1.0 - rho, n - i);
    tail += w * (params.validator_reward / n * i - params.slash);
  }
  return (1.0 - p) * params.unchallenged_gain + p * std::pow(rho, n) * params.captured_gain + p * tail;
}

double theorem1_margin(const EconomicParams& params) {
  require_valid(params);
  const double p = params.challenge_prob;
  const double lhs = params.asserter_reward + p * params.slash -
                     (1.0 - p) * params.unchallenged_gain - params.compute_cost;
  const double rhs = p * std::pow(params.byzantine_fraction, params.validators) *
                     (params.captured_gain + params.slash);
  return lhs - rhs;
}

std::optional<double> min_challenge_probability(const EconomicParams& params) {
  require_valid(params);
  // margin(p) = p * den - num
  const double num = params.unchallenged_gain + params.compute_cost - params.asserter_reward;
  const double den = params.slash + params.unchallenged_gain -
                     std::pow(params.byzantine_fraction, params.validators) *
                         (params.captured_gain + params.slash);
  if (num < 0.0) return 0.0;
  if (den > 0.0) {
    const double p = num / den;
    if (p <= 1.0) return p;
  }
  return std::nullopt;
}

std::optional<double> spml_min_p(double compute_cost, double slash, double reward,
                                 double byzantine_fraction) {
  const double den = (1.0 - byzantine_fraction) * slash + (1.0 - 2.0 * byzantine_fraction) * reward;
  if (!(den > 0.0)) return std::nullopt;
  return compute_cost / den;
}

double opml_undetected_fraud_probability(double compute_cost, double slash, double reward,
                                         double check_gain) {
  if (!(slash + reward > 0.0) || !(check_gain + compute_cost > 0.0)) {
    throw std::invalid_argument("opml_undetected_fraud_probability needs S+R > 0 and R_C+C > 0");
  }
  const double q = (slash + reward - compute_cost) * compute_cost /
                   ((slash + reward) * (check_gain + compute_cost));
  return std::clamp(q, 0.0, 1.0);
}

double cheat_pass_probability(double p, double r) {
  if (!(p >= 0.0 && p <= 1.0) || !(r >= 0.0 && r <= 1.0)) {
    throw std::invalid_argument("cheat_pass_probability: p and r must lie in [0, 1]");
  }
  return (1.0 - p) + p * r;
}

double brute_force_expected_payoff(const EconomicParams& params, const CollusionModel& model,
                                   AsserterStrategy strategy) {
  require_valid(params);
  require_valid(model, params);
  const int n = params.validators;
  if (n > 12) throw std::invalid_argument("brute_force_expected_payoff: n must be <= 12");
  const double p = params.challenge_prob;
  const double share = params.validator_reward / n;

  double unchallenged = 0.0;
  double challenged = 0.0;
  if (strategy == AsserterStrategy::honest) {
    unchallenged = params.asserter_reward - params.compute_cost;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      const int m = std::popcount(mask);
      // Every validator reproduces the correct output; colluders copy it.
      challenged += pattern_weight(mask, n, model) *
                    (params.asserter_reward - params.compute_cost + share * m);
    }
  } else {
    unchallenged = params.unchallenged_gain;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      const int m = std::popcount(mask);
      double payoff;
      if (m == n) {
        payoff = params.captured_gain;
      } else {
        // An honest validator forces arbitration; the asserter and every
        // colluder that echoed the wrong output lose S each.
        payoff = -params.slash * (1 + m);
      }
      challenged += pattern_weight(mask, n, model) * payoff;
    }
  }
  return (1.0 - p) * unchallenged + p * challenged;
}

}  // namespace posp::econ
