#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pvtrack::sim {

/// Sampled scalar signal on a strictly increasing time grid.
struct TimeSeries {
  std::string name;
  std::vector<double> t;
  std::vector<double> value;

  bool empty() const { return t.empty(); }
  std::size_t size() const { return t.size(); }
  double t_begin() const { return t.front(); }
  double t_end() const { return t.back(); }
  bool covers(double t0, double t1) const { return !empty() && t_begin() <= t0 && t_end() >= t1; }

  /// Throws ConfigError on mismatched lengths, non-finite values or a non-increasing grid.
  void validate() const;
};

/// Linear interpolation; throws DomainError naming the span when t lies outside it.
double interpolate_profile(const TimeSeries& s, double t);

/// Value of the last sample at or before t (zero-order hold); the first value before the span.
double hold_profile(const TimeSeries& s, double t);

TimeSeries constant_profile(std::string name, double value, double duration);

struct SunnyParams {
  double peak = 950.0;   // W/m^2 at solar noon
  double floor = 80.0;   // W/m^2 at the ends of the window
  double exponent = 1.2;
};

/// Smooth clear-sky bell over [0, duration], sampled every dt (W/m^2).
TimeSeries sunny_irradiance(double duration, double dt, const SunnyParams& p = {});

struct CloudParams {
  double mean_clear_s = 180.0;
  double mean_cloud_s = 60.0;
  double depth_min = 0.3;
  double depth_max = 0.7;
  double filter_tau_s = 4.0;
  double max_slope = 200.0;  // W/m^2 per second
};

/// Clear-sky bell modulated by filtered random telegraph dips, slope-limited.
/// Deterministic for a given seed.
TimeSeries cloudy_irradiance(double duration, double dt, std::uint64_t seed, const SunnyParams& sun = {},
                             const CloudParams& clouds = {});

struct CellTemperatureParams {
  double ambient_k = 288.15;
  double rise_k = 25.0;       // rise at 1000 W/m^2
  double time_constant_s = 300.0;
};

/// Cell temperature (K) from an irradiance series through a first-order thermal lag.
TimeSeries cell_temperature(const TimeSeries& irradiance, const CellTemperatureParams& p = {});

struct RocofEvent {
  double f_nom = 60.0;
  double t_event = 30.0;    // s, start of the ramp
  double rocof = 1.0;       // Hz/s, magnitude of the decline
  double f_min = 58.0;      // Hz, frequency nadir
  double hold_s = 3.0;
  double recovery = 0.5;    // Hz/s
  double duration = 45.0;
  double dt = 0.05;
};

/// Piecewise-linear under-frequency event: hold, ramp down, hold, ramp back.
TimeSeries rocof_frequency(const RocofEvent& e);

}  // namespace pvtrack::sim
