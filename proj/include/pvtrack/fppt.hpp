#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

#include "pvtrack/pv_model.hpp"

namespace pvtrack::fppt {

struct FpptConfig {
  double f_step = 4.0;       // Hz
  double vstep_min = 0.75;   // V
  double vstep_base = 2.0;   // V
  double vstep_max = 20.0;   // V
  double k_tr = 0.002;       // V/W
  double dp_max = 5e3;       // W, steady-state ripple target
  double dpref_th = 50e3;    // W
  double dp_th = 15e3;       // W
  double dpdv_th = 667.0;    // W/V
  double k_voc = 0.99;
  double voc_guard = 1.005;  // Voc estimate floor as a multiple of the measured voltage
  bool rst_enabled = true;
  bool decoupling_enabled = true;

  double t_step() const { return 1.0 / f_step; }
  void validate() const;
};

enum class RstPhase { inactive = 0, step1 = 1, step2 = 2, step3 = 3 };
std::string_view to_string(RstPhase phase);

/// One controller iteration as seen by the slope and RST logic.
struct IterationRecord {
  double v = 0.0;
  double i = 0.0;
  double p = 0.0;
  double dv = 0.0;      // measured voltage change since the previous iteration
  double dp_dec = 0.0;  // irradiance-decoupled power change
};

struct FpptState {
  int alpha = 1;
  double vref = 0.0;
  RstPhase rst_phase = RstPhase::inactive;
  int direction = 1;
  bool have_prev = false;
  IterationRecord prev;
  /// Records of the current RST sequence (index 0 is the iteration that started it).
  std::array<IterationRecord, 3> rst_history{};
  double kph_prev = 0.0;
  double g_prev = 0.0;
  double lambda_prev = 1.0;
  double pref_prev = 0.0;
  double dvref_prev = 0.0;  // Vref change commanded in the previous iteration
  long rst_sequences = 0;
};

struct ModeInputs {
  double p = 0.0;                  // measured power
  double pref = 0.0;               // commanded setpoint this iteration
  double pref_prev = 0.0;          // commanded setpoint last iteration
  double pref_effective = 0.0;     // setpoint limited to the available power
  double dp_decoupled = 0.0;
  double dv = 0.0;
  bool seeking_mpp = false;        // setpoint at or above the available power
};

/// 1 = steady state, 0 = transient.
int classify_mode(const ModeInputs& in, const FpptConfig& cfg);

/// Steady-state step from |dV/dP|; an infinite slope (flat power) yields the base step.
double steady_step(double abs_dv_dp, const FpptConfig& cfg);
/// Steady-state step from a measured (dV, dP) pair.
double steady_step(double dv, double dp, const FpptConfig& cfg);

/// Transient step proportional to the power error, capped at vstep_max.
double transient_step(double p, double pref, const FpptConfig& cfg);

struct Decoupling {
  double di = 0.0;      // current change attributed to the irradiance change
  double dp_raw = 0.0;
  double dp_decoupled = 0.0;
};

/// Removes the irradiance-driven part of the measured power change.
/// `iph_gain` is dIph/dG at the current temperature estimate.
Decoupling decouple(double v_n, double i_n, double v_prev, double i_prev, double kph_prev, double g_n,
                    double g_prev, double iph_gain);

/// Ratio of terminal current to photocurrent; holds `kph_prev` in the dark state.
double kph_update(double i_n, const std::optional<pv::FiveParams>& params, double kph_prev);

/// Chord step toward the estimated open-circuit point; nullopt when P_n <= 0.
std::optional<double> rst_chord(double v_n, double p_n, double pref, double voc_tilde);

/// Third RST step from the two previous records; nullopt on a degenerate slope.
/// `n1` is the record after the first chord step, `n2` after the second.
std::optional<double> rst_projected(const IterationRecord& n1, const IterationRecord& n2, double pref);

/// Voc estimate raised to guard * Vpv when the measured voltage exceeds it.
double voc_guard(double voc_tilde, double vpv, double guard = 1.005);

struct RstGuardResult {
  double vref = 0.0;
  bool terminate = false;
};

/// Clamps an RST reference that crosses to the left of the MPP, and ends the
/// sequence on that clamp or when the mode is steady.
RstGuardResult rst_guards(double vref_candidate, double vmpp_est, int alpha);

struct Measurement {
  double v = 0.0;
  double i = 0.0;
  double p() const { return v * i; }
};

/// Estimator outputs consumed by the controller.
struct Estimates {
  double g = 0.0;           // fast irradiance
  double g_filtered = 0.0;  // low-pass filtered irradiance for decoupling
  double lambda_t = 1.0;
  std::optional<pv::FiveParams> params;  // at (g, lambda_t)
  double vmpp = 0.0;
  double pmpp = 0.0;
  double iph_gain = 0.0;
};

struct UpdateRecord {
  double vref = 0.0;
  int alpha = 1;
  RstPhase rst_phase = RstPhase::inactive;  // phase executed in this iteration
  double vstep = 0.0;                       // |change of Vref|
  bool po_move = false;                     // Vref changed by a P&O step
  bool clamped = false;                     // Vref limited by a bound
  double dp_raw = 0.0;
  double dp_decoupled = 0.0;
  double kph = 0.0;
  double voc_tilde = 0.0;
  double pref_effective = 0.0;
};

/// Power-setpoint tracking controller, called once per FPPT period.
class Controller {
 public:
  Controller(FpptConfig cfg, double vref_init);

  UpdateRecord update(const Measurement& m, double pref, const Estimates& est);

  const FpptState& state() const { return state_; }
  const FpptConfig& config() const { return cfg_; }

 private:
  double perturb_and_observe(const IterationRecord& cur, const ModeInputs& mode, double vmpp,
                             UpdateRecord& rec);

  FpptConfig cfg_;
  FpptState state_;
};

}  // namespace pvtrack::fppt
