#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <string_view>

#include "pvtrack/pv_model.hpp"

namespace pvtrack::mppe {

/// Left-hand side of the combined voltage-current-environment equation.
/// Zero when (v, i) lies on the model curve at `env`.
/// Throws DomainError when the logarithm argument is not positive.
double residual(double v, double i, const pv::EnvState& env, const pv::BaseParams& b,
                const pv::ModuleDatasheet& d);

struct Jacobian {
  double dy_dg = 0.0;
  double dy_dlambda_t = 0.0;
};

/// Analytic partial derivatives of `residual` with respect to G and lambdaT.
Jacobian jacobian(double v, double i, const pv::EnvState& env, const pv::BaseParams& b,
                  const pv::ModuleDatasheet& d);

/// Irradiance solved directly from one (v, i) sample at fixed lambdaT.
/// Returns nullopt when the denominator is not positive.
std::optional<double> fast_irradiance(double v, double i, double lambda_t, const pv::BaseParams& b,
                                      const pv::ModuleDatasheet& d);

/// Running sum with Neumaier compensation; supports removal by adding -x.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + comp_; }
  void reset() { sum_ = comp_ = 0.0; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// The six weighted Jacobian/residual sums the LM update needs.
struct NormalSums {
  double gg = 0.0;  // sum w*(dy/dG)^2
  double gt = 0.0;  // sum w*(dy/dG)(dy/dlambdaT)
  double tt = 0.0;  // sum w*(dy/dlambdaT)^2
  double gr = 0.0;  // sum w*(dy/dG)*r
  double tr = 0.0;  // sum w*(dy/dlambdaT)*r
  double rr = 0.0;  // sum w*r^2
};

struct Sample {
  double t = 0.0;
  double v = 0.0;
  double i = 0.0;
  double weight = 1.0;
  double g_fast = 0.0;  // per-sample irradiance from the fast inversion
  // Linearization at insertion time; `valid` is false when the residual was undefined.
  bool valid = false;
  double dy_dg = 0.0;
  double dy_dlambda_t = 0.0;
  double r = 0.0;
};

/// Fixed-capacity rolling window with incrementally maintained normal sums.
class MeasurementWindow {
 public:
  explicit MeasurementWindow(std::size_t capacity = 100);

  /// Appends `s`, evicting the oldest sample at capacity.
  /// Throws DomainError if s.t is not newer than the last sample.
  void push(const Sample& s);
  void clear();

  std::size_t size() const { return samples_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return samples_.size() == capacity_; }
  const std::deque<Sample>& samples() const { return samples_; }

  NormalSums sums() const;
  /// Batch recomputation of `sums()` from the stored samples.
  NormalSums recompute_sums() const;

 private:
  void accumulate(const Sample& s, double sign);

  std::size_t capacity_;
  std::deque<Sample> samples_;
  CompensatedSum gg_, gt_, tt_, gr_, tr_, rr_;
};

struct LmConfig {
  std::size_t window = 100;
  double damping_gain = 3.0;
  double damping_min = 1e-6;
  double damping_max = 1e-3;
  double damping_init = 1e-4;
  double dg_max = 200.0;  // W/m^2 per second
  double dt_max = 3.0;    // degC per minute
  double t_lm = 5.0;      // s
  double lpf_cutoff_hz = 1.0;
  double g_floor = 1e-3;  // lower bound on the LM irradiance estimate
  /// Largest drift of the per-sample irradiance (p.u.) between the first and
  /// last quarter of a window that still counts as one irradiance level;
  /// windows drifting further skip the update.
  double stationarity_dg = 0.02;
  /// Fraction of window samples that must be defined at the current estimate;
  /// below it the irradiance estimate is reseeded from the fast inversion.
  double min_valid_fraction = 0.5;

  /// Per-iteration cap on |dG| in normalized units.
  double g_step_cap() const { return dg_max / 1000.0 * t_lm; }
  /// Per-iteration cap on |d lambdaT|.
  double lambda_step_cap() const { return dt_max / 60.0 * t_lm / pv::kT0; }
  void validate() const;
};

struct LmState {
  pv::EnvState estimate{1.0, 1.0};  // LM irradiance and temperature estimate
  double damping = 1e-4;
  double g_fast = 0.0;
  double g_filtered = 0.0;
  double last_ssr = 0.0;
  bool initialized = false;
  double last_t = 0.0;
  long rejected_samples = 0;
  long singular_events = 0;
  long lm_iterations = 0;
  long skipped_windows = 0;
  long reseeds = 0;
};

enum class LmOutcome { committed, not_ready, singular, no_valid_candidate, nonstationary, reseeded };
std::string_view to_string(LmOutcome o);

struct LmStepInfo {
  LmOutcome outcome = LmOutcome::not_ready;
  double delta_g = 0.0;
  double delta_lambda_t = 0.0;
  double damping = 0.0;
  double ssr_before = 0.0;
  double ssr_after = 0.0;
  bool g_saturated = false;
  bool lambda_saturated = false;
};

struct PushResult {
  bool accepted = false;
  double g_fast = 0.0;
};

/// Streaming irradiance/temperature estimator.
///
/// Every sample updates a per-sample irradiance from the fast inversion (at the
/// current temperature estimate) and is linearized at the current LM estimate
/// into the window. `lm_iterate` then performs one damped Gauss-Newton step on
/// the window, trying three damping candidates and keeping the best one.
/// Not thread-safe; serialize calls externally.
class Estimator {
 public:
  Estimator(pv::ArrayModel model, LmConfig cfg = {});

  PushResult push_sample(double t, double v, double i, double weight = 1.0);
  LmStepInfo lm_iterate();

  const LmState& state() const { return state_; }
  const MeasurementWindow& window() const { return window_; }
  const LmConfig& config() const { return cfg_; }
  const pv::ArrayModel& model() const { return model_; }

  /// Overrides the current estimate (tests, warm starts) and relinearizes the window.
  void set_estimate(const pv::EnvState& env);
  void set_damping(double damping);

  /// Environment used for MPP prediction: fast irradiance with LM temperature.
  pv::EnvState fast_env() const { return {state_.g_fast, state_.estimate.lambda_t}; }
  pv::Mpp mpp_estimate() const;
  std::optional<pv::FiveParams> params_estimate() const;

  /// Weighted squared residual of the window at `env`; +inf if any sample is undefined there.
  double window_ssr(const pv::EnvState& env) const;

 private:
  Sample linearize(double t, double v, double i, double weight) const;
  /// Recomputes every stored sample's linearization at the current estimate.
  void relinearize();

  pv::ArrayModel model_;
  LmConfig cfg_;
  MeasurementWindow window_;
  LmState state_;
};

}  // namespace pvtrack::mppe
