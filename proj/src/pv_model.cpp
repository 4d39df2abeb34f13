#include "pvtrack/pv_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pvtrack/errors.hpp"

namespace pvtrack::pv {

namespace {

constexpr int kCurrentIterationCap = 50;

// Halley iteration on w*e^w - x from a caller-supplied start.
double halley_lambert(double x, double w) {
  for (int it = 0; it < 64; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double wp1 = w + 1.0;
    const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
    const double step = f / denom;
    w -= step;
    if (std::abs(step) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(w))) {
      break;
    }
  }
  return w;
}

}  // namespace

double lambert_w(double x) {
  if (!(x >= 0.0)) {
    std::ostringstream msg;
    msg << "lambert_w: argument must be nonnegative, got " << x;
    throw DomainError(msg.str());
  }
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return x;
  double w;
  if (x < 3.0) {
    w = std::log1p(x);
  } else {
    const double l1 = std::log(x);
    const double l2 = std::log(l1);
    w = l1 - l2 + l2 / l1;
  }
  return halley_lambert(x, w);
}

double lambert_w_exp(double y) {
  if (std::isnan(y)) throw DomainError("lambert_w_exp: NaN argument");
  if (y < 700.0) return lambert_w(std::exp(y));
  // Solve w + ln(w) = y by Newton; the function is smooth and monotone for w > 0.
  double w = y - std::log(y);
  for (int it = 0; it < 64; ++it) {
    const double step = (w + std::log(w) - y) / (1.0 + 1.0 / w);
    w -= step;
    if (std::abs(step) <= 4.0 * std::numeric_limits<double>::epsilon() * w) break;
  }
  return w;
}

void ModuleDatasheet::validate() const {
  std::ostringstream err;
  if (!(vmp0_module > 0.0 && vmp0_module < voc0_module)) err << "need 0 < Vmp0 < Voc0; ";
  if (!(imp0_module > 0.0 && imp0_module < isc0_module)) err << "need 0 < Imp0 < Isc0; ";
  if (!(alpha_isc > 0.0)) err << "need alpha_Isc > 0; ";
  if (!(beta_voc < 0.0)) err << "need beta_Voc < 0; ";
  if (n_series < 1 || n_parallel < 1) err << "need n_series, n_parallel >= 1; ";
  const std::string s = err.str();
  if (!s.empty()) throw ParameterError("datasheet '" + name + "': " + s.substr(0, s.size() - 2));
}

ModuleDatasheet cs6p_250p() {
  ModuleDatasheet d;
  d.name = "CS6P-250P";
  d.voc0_module = 37.2;
  d.isc0_module = 8.87;
  d.vmp0_module = 30.1;
  d.imp0_module = 8.30;
  d.alpha_isc = 0.065e-2;
  d.beta_voc = -0.34e-2;
  return d;
}

ModuleDatasheet reference_array() {
  ModuleDatasheet d = cs6p_250p();
  d.n_series = 16;
  d.n_parallel = 153;
  return d;
}

BaseParams BaseParams::scaled(double factor) const {
  BaseParams out = *this;
  out.a0 *= factor;
  out.rs0 *= factor;
  out.rsh0 *= factor;
  out.iph0 *= factor;
  out.is0 *= factor;
  return out;
}

EnvState EnvState::clamped() const { return {std::clamp(g, 0.0, 1.0), lambda_t}; }

void EnvState::validate() const {
  if (!(g >= 0.0 && g <= 1.0)) {
    throw DomainError("EnvState: G must lie in [0, 1], got " + std::to_string(g));
  }
  if (!(lambda_t >= kLambdaTMin && lambda_t <= kLambdaTMax)) {
    throw DomainError("EnvState: lambdaT must lie in [0.8, 1.3], got " + std::to_string(lambda_t));
  }
}

BaseParams derive_base_params(const ModuleDatasheet& d) {
  d.validate();
  BaseParams b;
  const double voc0 = d.voc0();
  const double isc0 = d.isc0();
  const double vmp0 = d.vmp0();
  const double imp0 = d.imp0();

  b.delta0 = (1.0 - d.beta_voc * kT0) / (kDeltaConstant - d.alpha_isc * kT0);
  if (!(b.delta0 > 0.0)) throw ParameterError("ideality ratio delta0 is not positive");
  b.w0 = lambert_w_exp(1.0 / b.delta0 + 1.0);
  b.a0 = b.delta0 * voc0;

  const double rs_num = b.a0 * (b.w0 - 1.0) - vmp0;
  if (!(rs_num > 0.0)) {
    throw ParameterError("series-resistance derivation: a0*(w0-1) - Vmp0 = " + std::to_string(rs_num) +
                         " is not positive");
  }
  b.rs0 = rs_num / imp0;

  const double rsh_den = isc0 * (1.0 - 1.0 / b.w0) - imp0;
  if (!(rsh_den > 0.0)) {
    throw ParameterError("shunt-resistance derivation: Isc0*(1-1/w0) - Imp0 = " + std::to_string(rsh_den) +
                         " is not positive");
  }
  b.rsh0 = b.a0 * (b.w0 - 1.0) / rsh_den;
  b.iph0 = (1.0 + b.rs0 / b.rsh0) * isc0;
  b.is0 = b.iph0 * std::exp(-1.0 / b.delta0);
  return b;
}

double photocurrent_temperature_factor(const ModuleDatasheet& d, double lambda_t) {
  return 1.0 + d.alpha_isc * kT0 * (lambda_t - 1.0);
}

double saturation_temperature_factor(double lambda_t) {
  return lambda_t * lambda_t * lambda_t * std::exp(kSaturationExponent * (1.0 - 1.0 / lambda_t));
}

std::optional<FiveParams> five_params_at(const BaseParams& b, const EnvState& env,
                                         const ModuleDatasheet& d) {
  if (!(env.g > 0.0)) return std::nullopt;
  FiveParams p;
  p.a = b.a0 * env.lambda_t;
  p.rs = b.rs0;
  p.rsh = b.rsh0 / env.g;
  p.iph = b.iph0 * env.g * photocurrent_temperature_factor(d, env.lambda_t);
  p.is = b.is0 * saturation_temperature_factor(env.lambda_t);
  return p;
}

double photocurrent_gain(const BaseParams& b, double lambda_t, const ModuleDatasheet& d) {
  return b.iph0 * photocurrent_temperature_factor(d, lambda_t);
}

double pv_current(const FiveParams& p, double v) {
  if (!(v >= 0.0)) throw DomainError("pv_current: voltage must be nonnegative");

  // Seed from the explicit Lambert-W solution, then polish with damped Newton.
  double current;
  if (p.rs > 1e-12) {
    const double sum = p.rs + p.rsh;
    const double log_theta =
        std::log(p.rs * p.rsh * p.is / (p.a * sum)) + p.rsh * (p.rs * (p.iph + p.is) + v) / (p.a * sum);
    current = (p.rsh * (p.iph + p.is) - v) / sum - (p.a / p.rs) * lambert_w_exp(log_theta);
  } else {
    current = p.iph - p.is * std::expm1(v / p.a) - v / p.rsh;
  }

  auto residual = [&](double i) {
    return p.iph - p.is * std::expm1((v + i * p.rs) / p.a) - (v + i * p.rs) / p.rsh - i;
  };
  const double scale = std::max({1.0, std::abs(p.iph), std::abs(current)});
  double f = residual(current);
  for (int it = 0; it < kCurrentIterationCap; ++it) {
    const double dfdi = -p.is * p.rs / p.a * std::exp((v + current * p.rs) / p.a) - p.rs / p.rsh - 1.0;
    double step = -f / dfdi;
    double next = current + step;
    double f_next = residual(next);
    for (int halve = 0; halve < 30 && std::abs(f_next) > std::abs(f) && std::abs(f) > 0.0; ++halve) {
      step *= 0.5;
      next = current + step;
      f_next = residual(next);
    }
    current = next;
    f = f_next;
    if (std::abs(step) <= 1e-12 * scale) return current;
  }
  std::ostringstream msg;
  msg << "pv_current: no convergence after " << kCurrentIterationCap << " iterations at V=" << v
      << " (I=" << current << ", residual=" << f << ")";
  throw NumericalError(msg.str());
}

double open_circuit_voltage(const FiveParams& p) {
  if (!(p.iph > 0.0 && p.is > 0.0 && p.a > 0.0)) {
    throw NumericalError("open_circuit_voltage: cannot bracket root for non-positive Iph, Is or a");
  }
  // At I = 0 the curve reduces to g(V) = Iph - Is*(e^(V/a) - 1) - V/Rsh.
  auto g = [&](double v) { return p.iph - p.is * std::expm1(v / p.a) - v / p.rsh; };
  double lo = 0.0;
  double hi = p.a * std::log1p(p.iph / p.is);
  if (!(g(hi) <= 0.0)) throw NumericalError("open_circuit_voltage: bracketing failed");
  double v = hi;
  for (int it = 0; it < 200; ++it) {
    const double gv = g(v);
    if (gv > 0.0) lo = v; else hi = v;
    const double dg = -p.is / p.a * std::exp(v / p.a) - 1.0 / p.rsh;
    double next = v - gv / dg;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - v) <= 1e-13 * std::max(1.0, v)) return next;
    v = next;
  }
  throw NumericalError("open_circuit_voltage: no convergence");
}

double voc_estimate(const FiveParams& p, double k) {
  if (!(k > 0.0 && k <= 1.0)) throw DomainError("voc_estimate: k must lie in (0, 1]");
  if (!(p.iph > 0.0)) return 0.0;
  return k * p.a * std::log1p(p.iph / p.is);
}

Mpp mpp_of(const FiveParams& p) {
  if (!(p.iph > 0.0)) return {};
  const double w = lambert_w_exp(std::log(p.iph / p.is) + 1.0);
  Mpp out;
  out.v = (1.0 + p.rs / p.rsh) * p.a * (w - 1.0) - p.rs * p.iph * (1.0 - 1.0 / w);
  out.i = p.iph * (1.0 - 1.0 / w) - p.a * (w - 1.0) / p.rsh;
  out.p = out.v * out.i;
  return out;
}

Mpp mpp(const BaseParams& b, const EnvState& env, const ModuleDatasheet& d) {
  const auto p = five_params_at(b, env, d);
  if (!p) return {};
  return mpp_of(*p);
}

}  // namespace pvtrack::pv
