#pragma once

#include <optional>
#include <string>

namespace pvtrack::pv {

/// Cell temperature at standard test conditions, kelvin.
inline constexpr double kT0 = 298.15;
/// Exponent constant of the saturation-current temperature law (silicon).
inline constexpr double kSaturationExponent = 47.1;
/// Constant in the ideality-ratio expression (silicon).
inline constexpr double kDeltaConstant = 50.1;

/// Principal branch of the Lambert W function for x >= 0.
/// Throws DomainError for negative or NaN input.
double lambert_w(double x);

/// W(exp(y)) evaluated without forming exp(y), so large y does not overflow.
double lambert_w_exp(double y);

/// STC datasheet values of one module plus the array arrangement.
struct ModuleDatasheet {
  std::string name;
  double voc0_module = 0.0;  // V
  double isc0_module = 0.0;  // A
  double vmp0_module = 0.0;  // V
  double imp0_module = 0.0;  // A
  double alpha_isc = 0.0;    // 1/K, relative
  double beta_voc = 0.0;     // 1/K, relative
  int n_series = 1;
  int n_parallel = 1;

  double voc0() const { return voc0_module * n_series; }
  double isc0() const { return isc0_module * n_parallel; }
  double vmp0() const { return vmp0_module * n_series; }
  double imp0() const { return imp0_module * n_parallel; }
  double rated_power() const { return vmp0() * imp0(); }

  /// Throws ParameterError when an invariant is violated.
  void validate() const;
};

/// Canadian Solar CS6P-250P module data.
ModuleDatasheet cs6p_250p();
/// The 612 kW reference array: CS6P-250P, 153 parallel x 16 series.
ModuleDatasheet reference_array();

/// Array-level base parameter set at STC.
struct BaseParams {
  double a0 = 0.0;      // V, modified ideality factor
  double rs0 = 0.0;     // ohm
  double rsh0 = 0.0;    // ohm
  double iph0 = 0.0;    // A
  double is0 = 0.0;     // A
  double delta0 = 0.0;  // a0 / Voc0
  double w0 = 0.0;      // W(exp(1/delta0 + 1))

  /// Same set with a0, Rs0, Rsh0, Iph0 and Is0 multiplied by `factor`.
  BaseParams scaled(double factor) const;
};

/// The five single-diode parameters at one environment.
struct FiveParams {
  double a = 0.0;
  double rs = 0.0;
  double rsh = 0.0;
  double iph = 0.0;
  double is = 0.0;
};

/// Normalized irradiance and cell temperature ratio T/T0.
struct EnvState {
  double g = 1.0;
  double lambda_t = 1.0;

  static EnvState from_kelvin(double g, double kelvin) { return {g, kelvin / kT0}; }
  double kelvin() const { return lambda_t * kT0; }
  /// G clamped to [0, 1].
  EnvState clamped() const;
  /// Throws DomainError outside G in [0, 1], lambda_t in [0.8, 1.3].
  void validate() const;
};

inline constexpr double kLambdaTMin = 0.8;
inline constexpr double kLambdaTMax = 1.3;

struct Mpp {
  double v = 0.0;
  double i = 0.0;
  double p = 0.0;
};

BaseParams derive_base_params(const ModuleDatasheet& d);

/// Temperature factor of the photocurrent, 1 + alpha_Isc*T0*(lambdaT - 1).
double photocurrent_temperature_factor(const ModuleDatasheet& d, double lambda_t);

/// Saturation current at lambdaT relative to Is0.
double saturation_temperature_factor(double lambda_t);

/// Five parameters at `env`. Returns nullopt for the dark state (G <= 0).
std::optional<FiveParams> five_params_at(const BaseParams& b, const EnvState& env,
                                         const ModuleDatasheet& d);

/// dIph/dG at fixed temperature.
double photocurrent_gain(const BaseParams& b, double lambda_t, const ModuleDatasheet& d);

/// Terminal current at terminal voltage `v` (implicit single-diode equation).
double pv_current(const FiveParams& p, double v);

/// Terminal voltage at which the current is zero.
double open_circuit_voltage(const FiveParams& p);

/// Explicit open-circuit estimate k*a*ln(1 + Iph/Is).
double voc_estimate(const FiveParams& p, double k);

/// Closed-form maximum power point of a parameter set.
Mpp mpp_of(const FiveParams& p);

/// Maximum power point at `env`; zero for the dark state.
Mpp mpp(const BaseParams& b, const EnvState& env, const ModuleDatasheet& d);

/// Datasheet together with its derived base parameters.
struct ArrayModel {
  ModuleDatasheet datasheet;
  BaseParams base;

  static ArrayModel from_datasheet(const ModuleDatasheet& d) {
    return {d, derive_base_params(d)};
  }
  std::optional<FiveParams> params_at(const EnvState& env) const {
    return five_params_at(base, env, datasheet);
  }
  Mpp mpp_at(const EnvState& env) const { return mpp(base, env, datasheet); }
};

}  // namespace pvtrack::pv
