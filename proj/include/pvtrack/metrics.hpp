#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pvtrack/droop.hpp"
#include "pvtrack/sim.hpp"

namespace pvtrack::metrics {

/// Root mean square of pointwise differences. Throws DomainError on empty or unequal input.
double rmse(const std::vector<double>& estimate, const std::vector<double>& truth);

/// Mean |P - min(Pref, Pmpp_true)| over the tick records, as a fraction of `rated`.
double tracking_error(const std::vector<sim::TickRecord>& ticks, double rated);

/// Largest peak-to-peak of `p` over sliding windows of length `window` lying
/// entirely inside runs where alpha == 1. nullopt when no such run is long enough.
std::optional<double> ripple_ss(const std::vector<double>& t, const std::vector<double>& p,
                                const std::vector<int>& alpha, double window);
std::optional<double> ripple_ss(const std::vector<sim::TickRecord>& ticks, double window);

struct RstConvergence {
  std::vector<int> iterations;  // one count per resolved sequence
  int unresolved = 0;           // sequences still outside the band at the end of the trace
};

/// For each RST start, iterations until |P - Pref| < dp_th.
RstConvergence rst_convergence_iters(const std::vector<sim::ControlRecord>& control, double dp_th);

/// Per-iteration setpoint lag from `start` on: for each commanded level, the
/// number of iterations until P is within dp_th of it or has crossed it.
/// Levels never reached by the end of the trace get -1.
std::vector<int> setpoint_lag(const std::vector<sim::ControlRecord>& control, std::size_t start, double dp_th);

struct MetricsConfig {
  double rated = 500e3;        // W, base for the tracking error
  double warmup_s = 60.0;      // estimator samples before this are excluded from the RMSEs
  double ripple_window_s = 2.0;
  double dp_th = 15e3;         // W, RST convergence band
};

struct RunMetrics {
  std::string scenario;
  double irradiance_rmse = 0.0;   // W/m^2
  double temperature_rmse = 0.0;  // K
  double tracking_error = 0.0;
  std::optional<double> max_ripple_ss;  // W
  RstConvergence rst;

  int rst_iters_max() const;
};

RunMetrics compute_metrics(const std::string& scenario, const sim::SimTrace& trace, const MetricsConfig& cfg);

}  // namespace pvtrack::metrics
