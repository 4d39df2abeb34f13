#include "pvtrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "pvtrack/errors.hpp"

namespace pvtrack::metrics {

double deadband_deviation(double f, double f_nom, double deadband) {
  const double dev = f_nom - f;
  if (std::abs(dev) <= deadband) return 0.0;
  return dev > 0.0 ? dev - deadband : dev + deadband;
}

double droop_setpoint(double f, double pmpp_est, const DroopParams& p) {
  if (!(p.droop > 0.0)) throw DomainError("droop_setpoint: droop must be positive");
  const double pref = p.p_base + p.rated * deadband_deviation(f, p.f_nom, p.deadband) / (p.droop * p.f_nom);
  return std::clamp(pref, 0.0, std::max(pmpp_est, 0.0));
}

double rmse(const std::vector<double>& estimate, const std::vector<double>& truth) {
  if (estimate.empty()) throw DomainError("rmse: empty series");
  if (estimate.size() != truth.size()) throw DomainError("rmse: series lengths differ");
  double acc = 0.0;
  for (std::size_t k = 0; k < estimate.size(); ++k) {
    const double d = estimate[k] - truth[k];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(estimate.size()));
}

double tracking_error(const std::vector<sim::TickRecord>& ticks, double rated) {
  if (ticks.empty()) throw DomainError("tracking_error: empty trace");
  double acc = 0.0;
  for (const auto& r : ticks) acc += std::abs(r.p - std::min(r.pref, r.pmpp_true));
  return acc / static_cast<double>(ticks.size()) / rated;
}

std::optional<double> ripple_ss(const std::vector<double>& t, const std::vector<double>& p,
                                const std::vector<int>& alpha, double window) {
  if (t.size() != p.size() || t.size() != alpha.size()) throw DomainError("ripple_ss: column lengths differ");
  std::optional<double> best;
  std::deque<std::size_t> hi, lo;  // monotone queues of indices
  std::size_t begin = 0;           // first index of the current steady run
  std::size_t left = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (alpha[k] != 1) {
      hi.clear();
      lo.clear();
      begin = left = k + 1;
      continue;
    }
    while (!hi.empty() && p[hi.back()] <= p[k]) hi.pop_back();
    while (!lo.empty() && p[lo.back()] >= p[k]) lo.pop_back();
    hi.push_back(k);
    lo.push_back(k);
    while (t[k] - t[left] > window + 1e-9) ++left;
    while (hi.front() < left) hi.pop_front();
    while (lo.front() < left) lo.pop_front();
    if (t[k] - t[begin] + 1e-9 >= window) {
      const double pp = p[hi.front()] - p[lo.front()];
      if (!best || pp > *best) best = pp;
    }
  }
  return best;
}

std::optional<double> ripple_ss(const std::vector<sim::TickRecord>& ticks, double window) {
  std::vector<double> t, p;
  std::vector<int> a;
  t.reserve(ticks.size());
  p.reserve(ticks.size());
  a.reserve(ticks.size());
  for (const auto& r : ticks) {
    t.push_back(r.t);
    p.push_back(r.p);
    a.push_back(r.alpha);
  }
  return ripple_ss(t, p, a, window);
}

RstConvergence rst_convergence_iters(const std::vector<sim::ControlRecord>& control, double dp_th) {
  RstConvergence out;
  for (std::size_t s = 0; s < control.size(); ++s) {
    if (control[s].update.rst_phase != fppt::RstPhase::step1) continue;
    std::size_t j = s + 1;
    while (j < control.size() && !(std::abs(control[j].p_true - control[j].pref) < dp_th)) ++j;
    if (j < control.size()) {
      out.iterations.push_back(static_cast<int>(j - s));
    } else {
      ++out.unresolved;
    }
  }
  return out;
}

std::vector<int> setpoint_lag(const std::vector<sim::ControlRecord>& control, std::size_t start, double dp_th) {
  std::vector<int> lags;
  for (std::size_t n = start; n < control.size(); ++n) {
    const double level = control[n].pref;
    const double side = control[n].p_true - level;
    int lag = -1;
    for (std::size_t m = n; m < control.size(); ++m) {
      const double e = control[m].p_true - level;
      if (std::abs(e) < dp_th || (e != 0.0 && side != 0.0 && (e > 0.0) != (side > 0.0))) {
        lag = static_cast<int>(m - n);
        break;
      }
    }
    lags.push_back(lag);
  }
  return lags;
}

int RunMetrics::rst_iters_max() const {
  if (rst.iterations.empty()) return 0;
  return *std::max_element(rst.iterations.begin(), rst.iterations.end());
}

RunMetrics compute_metrics(const std::string& scenario, const sim::SimTrace& trace, const MetricsConfig& cfg) {
  RunMetrics m;
  m.scenario = scenario;
  if (trace.ticks.empty()) return m;

  std::vector<double> g_est, g_true, temp_est, temp_true;
  for (const auto& r : trace.ticks) {
    if (r.t < cfg.warmup_s) continue;
    g_est.push_back(r.g_fast * 1000.0);
    g_true.push_back(r.g_true * 1000.0);
    temp_est.push_back(r.lambda_lm * pv::kT0);
    temp_true.push_back(r.lambda_true * pv::kT0);
  }
  if (!g_est.empty()) {
    m.irradiance_rmse = rmse(g_est, g_true);
    m.temperature_rmse = rmse(temp_est, temp_true);
  }
  m.tracking_error = tracking_error(trace.ticks, cfg.rated);
  m.max_ripple_ss = ripple_ss(trace.ticks, cfg.ripple_window_s);
  m.rst = rst_convergence_iters(trace.control, cfg.dp_th);
  return m;
}

}  // namespace pvtrack::metrics
