// Command-line surface: analyze, simulate, sweep and replay.
#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "posp/econ.hpp"
#include "posp/estimate.hpp"

namespace posp::cli {

enum ExitCode : int { ok = 0, failed = 1, invalid = 2, violation = 3 };

struct AnalyzeParams {
  econ::EconomicParams params;
  /// Absent p means "report the threshold only".
  bool has_p = false;
  bool shorthand = false;
};

/// Accepts either the shorthand {C, S, R, r[, p, B, R_C]} (one validator,
/// R_A = R_V = U1 = R, U2 = 2R) or the full record {B, R_A, R_V, S, C, r,
/// n, U1, U2[, p, R_C]}. R_C defaults to 100 C. Throws sim::ConfigError.
AnalyzeParams parse_params(const std::string& json_text);

struct AnalyzeReport {
  std::string json;
  bool equilibrium_holds = false;
};

AnalyzeReport analyze(const AnalyzeParams& params);

enum class Axis { p, r, S };

struct SweepOptions {
  Axis axis = Axis::p;
  double from = 0.0;
  double to = 0.0;
  std::uint32_t steps = 0;
  std::uint64_t trials = 5000;
};

struct SweepRow {
  double value = 0.0;
  double margin = 0.0;
  std::optional<double> min_p;
  bool fraud_profitable_analytic = false;
  double honest_mean = 0.0;
  double honest_stderr = 0.0;
  double fraud_mean = 0.0;
  double fraud_stderr = 0.0;
  bool fraud_profitable_empirical = false;
  sim::MetricsReport metrics;
};

/// Grid from, from + h, ..., to with h = (to - from) / (steps - 1); empty
/// when steps is 0 or from > to.
std::vector<double> sweep_grid(double from, double to, std::uint32_t steps);

/// One row per grid value in axis order. Throws sim::ConfigError.
std::vector<SweepRow> sweep(const sim::ScenarioConfig& cfg, const SweepOptions& options);
std::string sweep_to_json(Axis axis, const std::vector<SweepRow>& rows);

/// Entry point of the `posp` executable.
int main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace posp::cli
