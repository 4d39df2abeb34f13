#include "pvtrack/profile.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "pvtrack/errors.hpp"

namespace pvtrack::sim {

namespace {

std::size_t sample_count(double duration, double dt) {
  if (!(duration >= 0.0) || !(dt > 0.0)) throw ConfigError("profile generator needs duration >= 0 and dt > 0");
  return static_cast<std::size_t>(std::floor(duration / dt + 1e-9)) + 1;
}

double bell(double t, double duration, const SunnyParams& p) {
  if (duration <= 0.0) return p.peak;
  const double s = std::sin(std::numbers::pi * std::clamp(t / duration, 0.0, 1.0));
  return p.floor + (p.peak - p.floor) * std::pow(s, p.exponent);
}

}  // namespace

void TimeSeries::validate() const {
  if (t.size() != value.size()) {
    throw ConfigError("series '" + name + "': time and value columns differ in length");
  }
  if (t.empty()) throw ConfigError("series '" + name + "' is empty");
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (!std::isfinite(t[k]) || !std::isfinite(value[k])) {
      throw ConfigError("series '" + name + "': non-finite entry at row " + std::to_string(k));
    }
    if (k > 0 && !(t[k] > t[k - 1])) {
      throw ConfigError("series '" + name + "': time grid not increasing at row " + std::to_string(k));
    }
  }
}

double interpolate_profile(const TimeSeries& s, double t) {
  if (s.empty() || !(t >= s.t_begin() && t <= s.t_end())) {
    std::ostringstream msg;
    msg << "series '" << s.name << "': t = " << t << " s outside its span";
    if (!s.empty()) msg << " [" << s.t_begin() << ", " << s.t_end() << "] s";
    throw DomainError(msg.str());
  }
  const auto it = std::upper_bound(s.t.begin(), s.t.end(), t);
  if (it == s.t.end()) return s.value.back();
  const std::size_t hi = static_cast<std::size_t>(it - s.t.begin());
  const std::size_t lo = hi - 1;
  if (s.t[lo] == t) return s.value[lo];
  const double w = (t - s.t[lo]) / (s.t[hi] - s.t[lo]);
  return s.value[lo] + w * (s.value[hi] - s.value[lo]);
}

double hold_profile(const TimeSeries& s, double t) {
  if (s.empty()) throw DomainError("series '" + s.name + "' is empty");
  const auto it = std::upper_bound(s.t.begin(), s.t.end(), t);
  if (it == s.t.begin()) return s.value.front();
  return *(s.value.begin() + (it - s.t.begin() - 1));
}

TimeSeries constant_profile(std::string name, double value, double duration) {
  TimeSeries s;
  s.name = std::move(name);
  s.t = {0.0, std::max(duration, 1e-9)};
  s.value = {value, value};
  return s;
}

TimeSeries sunny_irradiance(double duration, double dt, const SunnyParams& p) {
  const std::size_t n = sample_count(duration, dt);
  TimeSeries s;
  s.name = "irradiance";
  s.t.resize(n);
  s.value.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    s.t[k] = static_cast<double>(k) * dt;
    s.value[k] = bell(s.t[k], duration, p);
  }
  if (s.t.back() < duration) {
    s.t.push_back(duration);
    s.value.push_back(bell(duration, duration, p));
  }
  return s;
}

TimeSeries cloudy_irradiance(double duration, double dt, std::uint64_t seed, const SunnyParams& sun,
                             const CloudParams& c) {
  if (!(c.depth_min >= 0.0 && c.depth_max < 1.0 && c.depth_min <= c.depth_max)) {
    throw ConfigError("cloud depth range must satisfy 0 <= depth_min <= depth_max < 1");
  }
  TimeSeries s = sunny_irradiance(duration, dt, sun);
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> clear_len(1.0 / c.mean_clear_s);
  std::exponential_distribution<double> cloud_len(1.0 / c.mean_cloud_s);
  std::uniform_real_distribution<double> depth(c.depth_min, c.depth_max);

  bool cloudy = false;
  double target = 0.0;
  double next_switch = clear_len(rng);
  double shade = 0.0;
  double prev = s.value.front();
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double t = s.t[k];
    while (t >= next_switch) {
      cloudy = !cloudy;
      target = cloudy ? depth(rng) : 0.0;
      next_switch += cloudy ? cloud_len(rng) : clear_len(rng);
    }
    const double h = k > 0 ? t - s.t[k - 1] : 0.0;
    shade += (target - shade) * (1.0 - std::exp(-h / c.filter_tau_s));
    double g = s.value[k] * (1.0 - shade);
    if (k > 0) {
      const double cap = c.max_slope * h;
      g = std::clamp(g, prev - cap, prev + cap);
    }
    s.value[k] = g;
    prev = g;
  }
  return s;
}

TimeSeries cell_temperature(const TimeSeries& irradiance, const CellTemperatureParams& p) {
  irradiance.validate();
  TimeSeries s;
  s.name = "temperature";
  s.t = irradiance.t;
  s.value.resize(irradiance.size());
  double lag = irradiance.value.front() / 1000.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (k > 0) {
      const double h = s.t[k] - s.t[k - 1];
      lag += (irradiance.value[k] / 1000.0 - lag) * (1.0 - std::exp(-h / p.time_constant_s));
    }
    s.value[k] = p.ambient_k + p.rise_k * lag;
  }
  return s;
}

TimeSeries rocof_frequency(const RocofEvent& e) {
  if (!(e.rocof > 0.0 && e.recovery > 0.0 && e.f_min < e.f_nom && e.hold_s >= 0.0)) {
    throw ConfigError("rocof event needs positive rates and f_min below f_nom");
  }
  const double t_nadir = e.t_event + (e.f_nom - e.f_min) / e.rocof;
  const double t_release = t_nadir + e.hold_s;
  const double t_back = t_release + (e.f_nom - e.f_min) / e.recovery;
  auto f = [&](double t) {
    if (t <= e.t_event) return e.f_nom;
    if (t <= t_nadir) return e.f_nom - e.rocof * (t - e.t_event);
    if (t <= t_release) return e.f_min;
    if (t <= t_back) return e.f_min + e.recovery * (t - t_release);
    return e.f_nom;
  };
  const std::size_t n = sample_count(e.duration, e.dt);
  TimeSeries s;
  s.name = "frequency";
  s.t.resize(n);
  s.value.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // Round to the grid so bundled CSV fixtures stay tidy.
    s.t[k] = std::round(static_cast<double>(k) * e.dt * 1e9) / 1e9;
    s.value[k] = std::round(f(s.t[k]) * 1e9) / 1e9;
  }
  return s;
}

}  // namespace pvtrack::sim
