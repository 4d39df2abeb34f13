#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "pvtrack/droop.hpp"
#include "pvtrack/fppt.hpp"
#include "pvtrack/mppe.hpp"
#include "pvtrack/profile.hpp"
#include "pvtrack/pv_model.hpp"

namespace pvtrack::sim {

inline constexpr double kNoiseDisabled = std::numeric_limits<double>::infinity();

enum class SetpointMode { schedule, headroom, droop };
std::string_view to_string(SetpointMode m);
SetpointMode setpoint_mode_from_string(std::string_view s);

struct SetpointConfig {
  SetpointMode mode = SetpointMode::schedule;
  TimeSeries schedule;          // (t, Pref in W), zero-order hold
  double reserve = 200e3;       // W, headroom mode
  TimeSeries frequency;         // (t, Hz), droop mode
  metrics::DroopParams droop;
};

struct ScenarioConfig {
  std::string name = "scenario";
  pv::ModuleDatasheet datasheet = pv::reference_array();
  /// Multiplies every base parameter seen by the estimator (1 = exact model).
  double param_scale = 1.0;
  mppe::LmConfig lm;
  fppt::FpptConfig fppt;

  double duration = 60.0;    // s
  double ts = 0.05;          // s, fast loop period
  double plant_tau = 0.05;   // s
  double noise_snr_db = 80.0;
  double noise_fs_ratio = 1.2;  // sensor full scale over the STC Voc / Isc
  double vref_init_ratio = 1.05;  // initial Vref over the true Vmp at t = 0
  std::uint64_t seed = 1;

  TimeSeries irradiance;    // W/m^2
  TimeSeries temperature;   // K
  SetpointConfig setpoint;

  double t_step() const { return fppt.t_step(); }
  double t_lm() const { return lm.t_lm; }
  std::size_t ticks() const;
  std::size_t ticks_per_step() const;
  std::size_t ticks_per_lm() const;

  /// Every violated invariant, empty when the configuration is runnable.
  std::vector<std::string> violations() const;
  /// Throws ConfigError listing all violations.
  void validate() const;
};

struct PlantOutput {
  double v = 0.0;
  double i = 0.0;
  double p = 0.0;
};

/// First-order voltage lag toward vref followed by the PV curve at the true environment.
PlantOutput plant_step(double vpv, double vref, const pv::EnvState& env_true, const pv::BaseParams& b,
                       const pv::ModuleDatasheet& d, double dt, double tau);

/// Adds zero-mean Gaussian noise with sigma = full_scale * 10^(-snr_db/20); identity for infinite SNR.
double add_noise(double value, double full_scale, double snr_db, std::mt19937_64& rng);

struct TickRecord {
  double t = 0.0;
  double g_true = 0.0;
  double lambda_true = 0.0;
  double vpv = 0.0;
  double ipv = 0.0;
  double p = 0.0;
  double v_meas = 0.0;
  double i_meas = 0.0;
  double g_fast = 0.0;
  double g_lm = 0.0;
  double lambda_lm = 0.0;
  double vref = 0.0;
  double pref = 0.0;
  int alpha = 1;
  int rst_phase = 0;
  double pmpp_true = 0.0;
  double pmpp_est = 0.0;
};

struct ControlRecord {
  double t = 0.0;
  long index = 0;
  double v_meas = 0.0;
  double i_meas = 0.0;
  double p_meas = 0.0;
  double p_true = 0.0;
  double pref = 0.0;
  double pmpp_true = 0.0;
  double pmpp_est = 0.0;
  fppt::UpdateRecord update;
};

struct LmEvent {
  double t = 0.0;
  mppe::LmOutcome outcome = mppe::LmOutcome::not_ready;
  double g = 0.0;
  double lambda_t = 0.0;
  double damping = 0.0;
  double ssr = 0.0;
};

struct SimTrace {
  std::vector<TickRecord> ticks;
  std::vector<ControlRecord> control;
  std::vector<LmEvent> lm;
  long rejected_samples = 0;
};

/// Runs the closed loop: every tick the environment, plant, sensor noise and
/// estimator; every controller period the tracker; every LM period (once the
/// window has filled) one estimator iteration. Bit-identical for equal configs.
SimTrace run_scenario(const ScenarioConfig& cfg);

}  // namespace pvtrack::sim
