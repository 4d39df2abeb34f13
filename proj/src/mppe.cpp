#include "pvtrack/mppe.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "pvtrack/errors.hpp"

namespace pvtrack::mppe {

namespace {

struct ResidualTerms {
  double numerator;    // G*(Iph0*k - (V + I*Rs0)/Rsh0) - I + Is
  double log_denom;    // ln Is, Is = Is0 * lambdaT^3 * e^{47.1(1 - 1/lambdaT)}
  double g_coeff;      // Iph0*k - (V + I*Rs0)/Rsh0
  double is;           // Is at lambdaT
};

ResidualTerms terms(double v, double i, const pv::EnvState& env, const pv::BaseParams& b,
                    const pv::ModuleDatasheet& d) {
  const double lt = env.lambda_t;
  const double g_coeff = b.iph0 * pv::photocurrent_temperature_factor(d, lt) - (v + i * b.rs0) / b.rsh0;
  const double log_denom = std::log(b.is0) + 3.0 * std::log(lt) + pv::kSaturationExponent * (1.0 - 1.0 / lt);
  const double is = std::exp(log_denom);
  return {env.g * g_coeff - i + is, log_denom, g_coeff, is};
}

}  // namespace

double residual(double v, double i, const pv::EnvState& env, const pv::BaseParams& b,
                const pv::ModuleDatasheet& d) {
  const ResidualTerms t = terms(v, i, env, b, d);
  if (!(t.numerator > 0.0)) {
    throw DomainError("residual: logarithm argument is not positive (inconsistent sample or estimate)");
  }
  return b.a0 * env.lambda_t * (std::log(t.numerator) - t.log_denom) - v - i * b.rs0;
}

Jacobian jacobian(double v, double i, const pv::EnvState& env, const pv::BaseParams& b,
                  const pv::ModuleDatasheet& d) {
  const ResidualTerms t = terms(v, i, env, b, d);
  if (!(t.numerator > 0.0)) {
    throw DomainError("jacobian: logarithm argument is not positive (inconsistent sample or estimate)");
  }
  const double lt = env.lambda_t;
  const double dk_dlt = d.alpha_isc * pv::kT0;
  Jacobian j;
  j.dy_dg = b.a0 * lt * t.g_coeff / t.numerator;
  const double dlog_is = 3.0 / lt + pv::kSaturationExponent / (lt * lt);  // d ln Is / d lambdaT
  j.dy_dlambda_t = b.a0 * (std::log(t.numerator) - t.log_denom) +
                   b.a0 * lt * ((env.g * b.iph0 * dk_dlt + t.is * dlog_is) / t.numerator - dlog_is);
  return j;
}

std::optional<double> fast_irradiance(double v, double i, double lambda_t, const pv::BaseParams& b,
                                      const pv::ModuleDatasheet& d) {
  const double vd = v + i * b.rs0;
  const double denom = b.iph0 * pv::photocurrent_temperature_factor(d, lambda_t) - vd / b.rsh0;
  if (!(denom > 0.0)) return std::nullopt;
  const double diode = b.is0 * pv::saturation_temperature_factor(lambda_t) * std::expm1(vd / (b.a0 * lambda_t));
  return (i + diode) / denom;
}

std::string_view to_string(LmOutcome o) {
  switch (o) {
    case LmOutcome::committed: return "committed";
    case LmOutcome::not_ready: return "not_ready";
    case LmOutcome::singular: return "singular";
    case LmOutcome::no_valid_candidate: return "no_valid_candidate";
    case LmOutcome::nonstationary: return "nonstationary";
    case LmOutcome::reseeded: return "reseeded";
  }
  return "unknown";
}

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    comp_ += (sum_ - t) + x;
  } else {
    comp_ += (x - t) + sum_;
  }
  sum_ = t;
}

MeasurementWindow::MeasurementWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("measurement window capacity must be positive");
}

void MeasurementWindow::accumulate(const Sample& s, double sign) {
  if (!s.valid) return;
  const double w = sign * s.weight;
  gg_.add(w * s.dy_dg * s.dy_dg);
  gt_.add(w * s.dy_dg * s.dy_dlambda_t);
  tt_.add(w * s.dy_dlambda_t * s.dy_dlambda_t);
  gr_.add(w * s.dy_dg * s.r);
  tr_.add(w * s.dy_dlambda_t * s.r);
  rr_.add(w * s.r * s.r);
}

void MeasurementWindow::push(const Sample& s) {
  if (!samples_.empty() && !(s.t > samples_.back().t)) {
    throw DomainError("MeasurementWindow: sample timestamps must be strictly increasing");
  }
  if (samples_.size() == capacity_) {
    accumulate(samples_.front(), -1.0);
    samples_.pop_front();
  }
  samples_.push_back(s);
  accumulate(s, 1.0);
}

void MeasurementWindow::clear() {
  samples_.clear();
  for (CompensatedSum* c : {&gg_, &gt_, &tt_, &gr_, &tr_, &rr_}) c->reset();
}

NormalSums MeasurementWindow::sums() const {
  return {gg_.value(), gt_.value(), tt_.value(), gr_.value(), tr_.value(), rr_.value()};
}

NormalSums MeasurementWindow::recompute_sums() const {
  NormalSums out;
  for (const Sample& s : samples_) {
    if (!s.valid) continue;
    out.gg += s.weight * s.dy_dg * s.dy_dg;
    out.gt += s.weight * s.dy_dg * s.dy_dlambda_t;
    out.tt += s.weight * s.dy_dlambda_t * s.dy_dlambda_t;
    out.gr += s.weight * s.dy_dg * s.r;
    out.tr += s.weight * s.dy_dlambda_t * s.r;
    out.rr += s.weight * s.r * s.r;
  }
  return out;
}

void LmConfig::validate() const {
  if (window == 0) throw ConfigError("mppe.window must be positive");
  if (!(damping_gain > 1.0)) throw ConfigError("mppe.damping_gain must exceed 1");
  if (!(damping_min > 0.0 && damping_min <= damping_max)) throw ConfigError("mppe damping range is invalid");
  if (!(damping_init >= damping_min && damping_init <= damping_max)) {
    throw ConfigError("mppe.damping_init must lie inside the damping range");
  }
  if (!(dg_max > 0.0 && dt_max > 0.0)) throw ConfigError("mppe saturation rates must be positive");
  if (!(t_lm > 0.0)) throw ConfigError("mppe.t_lm must be positive");
  if (!(lpf_cutoff_hz > 0.0)) throw ConfigError("mppe.lpf_cutoff_hz must be positive");
  if (!(stationarity_dg > 0.0)) throw ConfigError("mppe.stationarity_dg must be positive");
  if (!(min_valid_fraction >= 0.0 && min_valid_fraction <= 1.0)) {
    throw ConfigError("mppe.min_valid_fraction must lie in [0, 1]");
  }
}

Estimator::Estimator(pv::ArrayModel model, LmConfig cfg)
    : model_(std::move(model)), cfg_(cfg), window_(cfg.window) {
  cfg_.validate();
  state_.damping = cfg_.damping_init;
}

void Estimator::set_estimate(const pv::EnvState& env) {
  state_.estimate = env;
  state_.initialized = true;
  relinearize();
}

void Estimator::relinearize() {
  const std::deque<Sample> old = window_.samples();
  window_.clear();
  for (const Sample& s : old) {
    Sample fresh = linearize(s.t, s.v, s.i, s.weight);
    fresh.g_fast = s.g_fast;
    window_.push(fresh);
  }
}

void Estimator::set_damping(double damping) {
  state_.damping = std::clamp(damping, cfg_.damping_min, cfg_.damping_max);
}

Sample Estimator::linearize(double t, double v, double i, double weight) const {
  Sample s{t, v, i, weight};
  const auto& b = model_.base;
  const auto& d = model_.datasheet;
  const ResidualTerms rt = terms(v, i, state_.estimate, b, d);
  if (rt.numerator > 0.0) {
    s.valid = true;
    s.r = residual(v, i, state_.estimate, b, d);
    const Jacobian j = jacobian(v, i, state_.estimate, b, d);
    s.dy_dg = j.dy_dg;
    s.dy_dlambda_t = j.dy_dlambda_t;
  }
  return s;
}

PushResult Estimator::push_sample(double t, double v, double i, double weight) {
  if (window_.size() > 0 && !(t > state_.last_t)) {
    throw DomainError("push_sample: timestamp must be newer than the last sample");
  }
  const auto& b = model_.base;
  const auto& d = model_.datasheet;

  if (!state_.initialized) {
    const auto g0 = fast_irradiance(v, i, 1.0, b, d);
    if (!g0) {
      ++state_.rejected_samples;
      return {false, state_.g_fast};
    }
    state_.estimate = {std::clamp(*g0, cfg_.g_floor, 1.0), 1.0};
    state_.g_fast = std::clamp(*g0, 0.0, 1.0);
    state_.g_filtered = state_.g_fast;
    state_.initialized = true;
  }

  const auto g = fast_irradiance(v, i, state_.estimate.lambda_t, b, d);
  if (!g) {
    ++state_.rejected_samples;
    return {false, state_.g_fast};
  }
  const double dt = window_.size() > 0 ? t - state_.last_t : 0.0;
  state_.g_fast = std::clamp(*g, 0.0, 1.0);
  if (dt > 0.0) {
    const double alpha = 1.0 - std::exp(-2.0 * std::numbers::pi * cfg_.lpf_cutoff_hz * dt);
    state_.g_filtered += alpha * (state_.g_fast - state_.g_filtered);
  }
  Sample smp = linearize(t, v, i, weight);
  smp.g_fast = *g;
  window_.push(smp);
  state_.last_t = t;
  return {true, state_.g_fast};
}

double Estimator::window_ssr(const pv::EnvState& env) const {
  double ssr = 0.0;
  for (const Sample& s : window_.samples()) {
    const ResidualTerms rt = terms(s.v, s.i, env, model_.base, model_.datasheet);
    if (!(rt.numerator > 0.0)) return std::numeric_limits<double>::infinity();
    const double r = residual(s.v, s.i, env, model_.base, model_.datasheet);
    ssr += s.weight * r * r;
  }
  return ssr;
}

LmStepInfo Estimator::lm_iterate() {
  LmStepInfo info;
  info.damping = state_.damping;
  if (!window_.full()) return info;

  const NormalSums s = window_.sums();
  info.ssr_before = s.rr;

  // Irradiance drift across the window: mean fast irradiance of the last
  // quarter minus that of the first quarter. Voltage dither averages out.
  const auto& smps = window_.samples();
  const std::size_t quarter = std::max<std::size_t>(1, smps.size() / 4);
  std::size_t valid = 0;
  double head = 0.0;
  double tail = 0.0;
  for (std::size_t k = 0; k < smps.size(); ++k) {
    valid += smps[k].valid ? 1 : 0;
    if (k < quarter) head += smps[k].g_fast;
    if (k >= smps.size() - quarter) tail += smps[k].g_fast;
  }
  const double drift = (tail - head) / static_cast<double>(quarter);
  if (static_cast<double>(valid) < cfg_.min_valid_fraction * static_cast<double>(window_.size())) {
    // The estimate has drifted where most samples are undefined; restart from the fast inversion.
    state_.estimate.g = std::clamp(state_.g_fast, cfg_.g_floor, 1.0);
    relinearize();
    ++state_.reseeds;
    info.outcome = LmOutcome::reseeded;
    return info;
  }
  if (std::abs(drift) > cfg_.stationarity_dg) {
    ++state_.skipped_windows;
    info.outcome = LmOutcome::nonstationary;
    return info;
  }
  const double lambda = state_.damping;
  const std::array<double, 3> candidates{lambda, lambda / cfg_.damping_gain, lambda * cfg_.damping_gain};

  struct Trial {
    bool ok = false;
    pv::EnvState env;
    double dg = 0.0;
    double dl = 0.0;
    bool g_sat = false;
    bool l_sat = false;
    double ssr = std::numeric_limits<double>::infinity();
  };
  std::array<Trial, 3> trials;
  int singular = 0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const double m = 1.0 + candidates[k];
    const double a11 = m * s.gg;
    const double a22 = m * s.tt;
    const double det = a11 * a22 - s.gt * s.gt;
    const double scale = a11 * a22;
    if (!(scale > 0.0) || !(std::abs(det) > 1e-30 * scale)) {
      ++singular;
      continue;
    }
    // Closed-form 2x2 inverse applied to -J^T W r.
    double dg = -(a22 * s.gr - s.gt * s.tr) / det;
    double dl = -(a11 * s.tr - s.gt * s.gr) / det;
    Trial tr;
    tr.ok = true;
    const double gcap = cfg_.g_step_cap();
    const double lcap = cfg_.lambda_step_cap();
    tr.g_sat = std::abs(dg) > gcap;
    tr.l_sat = std::abs(dl) > lcap;
    dg = std::clamp(dg, -gcap, gcap);
    dl = std::clamp(dl, -lcap, lcap);
    tr.env.g = std::clamp(state_.estimate.g + dg, cfg_.g_floor, 1.0);
    tr.env.lambda_t = std::clamp(state_.estimate.lambda_t + dl, pv::kLambdaTMin, pv::kLambdaTMax);
    tr.dg = tr.env.g - state_.estimate.g;
    tr.dl = tr.env.lambda_t - state_.estimate.lambda_t;
    tr.ssr = window_ssr(tr.env);
    trials[k] = tr;
  }

  if (singular == static_cast<int>(candidates.size())) {
    ++state_.singular_events;
    state_.damping = std::clamp(lambda * cfg_.damping_gain, cfg_.damping_min, cfg_.damping_max);
    info.outcome = LmOutcome::singular;
    info.damping = state_.damping;
    return info;
  }

  // Keep the current damping unless another candidate is strictly better.
  std::size_t best = 0;
  double best_ssr = trials[0].ok ? trials[0].ssr : std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < trials.size(); ++k) {
    if (!trials[k].ok) continue;
    const double margin = std::isfinite(best_ssr) ? 1e-12 * best_ssr + 1e-300 : 0.0;
    if (trials[k].ssr < best_ssr - margin) {
      best = k;
      best_ssr = trials[k].ssr;
    }
  }
  if (!std::isfinite(best_ssr)) {
    state_.damping = std::clamp(lambda * cfg_.damping_gain, cfg_.damping_min, cfg_.damping_max);
    info.outcome = LmOutcome::no_valid_candidate;
    info.damping = state_.damping;
    return info;
  }

  const Trial& chosen = trials[best];
  // Re-express the fast irradiance at the new temperature so the filtered
  // value does not see the change of estimate as an irradiance step.
  const Sample& last = smps.back();
  if (const auto g_new = fast_irradiance(last.v, last.i, chosen.env.lambda_t, model_.base, model_.datasheet)) {
    const double shifted = std::clamp(*g_new, 0.0, 1.0);
    state_.g_filtered += shifted - state_.g_fast;
    state_.g_fast = shifted;
  }
  state_.estimate = chosen.env;
  relinearize();
  state_.damping = std::clamp(candidates[best], cfg_.damping_min, cfg_.damping_max);
  state_.last_ssr = chosen.ssr;
  ++state_.lm_iterations;

  info.outcome = LmOutcome::committed;
  info.delta_g = chosen.dg;
  info.delta_lambda_t = chosen.dl;
  info.damping = state_.damping;
  info.ssr_after = chosen.ssr;
  info.g_saturated = chosen.g_sat;
  info.lambda_saturated = chosen.l_sat;
  return info;
}

pv::Mpp Estimator::mpp_estimate() const {
  return pv::mpp(model_.base, fast_env(), model_.datasheet);
}

std::optional<pv::FiveParams> Estimator::params_estimate() const {
  return pv::five_params_at(model_.base, fast_env(), model_.datasheet);
}

}  // namespace pvtrack::mppe
