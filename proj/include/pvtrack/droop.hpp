#pragma once

namespace pvtrack::metrics {

struct DroopParams {
  double droop = 0.05;     // per-unit frequency change for 1 p.u. power change
  double f_nom = 60.0;     // Hz
  double deadband = 0.0;   // Hz, symmetric around f_nom
  double p_base = 0.0;     // W, pre-event setpoint
  double rated = 500e3;    // W
};

/// Frequency deviation after removing the deadband; positive for under-frequency.
double deadband_deviation(double f, double f_nom, double deadband);

/// Frequency-watt setpoint: p_base plus the droop increment, clamped to [0, pmpp_est].
/// Throws DomainError when droop <= 0.
double droop_setpoint(double f, double pmpp_est, const DroopParams& p);

}  // namespace pvtrack::metrics
