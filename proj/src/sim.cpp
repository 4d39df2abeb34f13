#include "pvtrack/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pvtrack/errors.hpp"

namespace pvtrack::sim {

namespace {

// Ratio b/a as an integer when it is one to within rounding, else 0.
std::size_t integer_ratio(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) return 0;
  const double r = b / a;
  const double n = std::round(r);
  if (n < 1.0 || std::abs(r - n) > 1e-9 * n) return 0;
  return static_cast<std::size_t>(n);
}

std::string span_text(const TimeSeries& s) {
  std::ostringstream os;
  if (s.empty()) {
    os << "empty";
  } else {
    os << "[" << s.t_begin() << ", " << s.t_end() << "] s";
  }
  return os.str();
}

}  // namespace

std::string_view to_string(SetpointMode m) {
  switch (m) {
    case SetpointMode::schedule: return "schedule";
    case SetpointMode::headroom: return "headroom";
    case SetpointMode::droop: return "droop";
  }
  return "schedule";
}

SetpointMode setpoint_mode_from_string(std::string_view s) {
  if (s == "schedule") return SetpointMode::schedule;
  if (s == "headroom") return SetpointMode::headroom;
  if (s == "droop") return SetpointMode::droop;
  throw ConfigError("unknown setpoint mode '" + std::string(s) + "' (expected schedule, headroom or droop)");
}

std::size_t ScenarioConfig::ticks() const {
  if (!(ts > 0.0) || !(duration > 0.0)) return 0;
  return static_cast<std::size_t>(std::floor(duration / ts + 1e-9));
}

std::size_t ScenarioConfig::ticks_per_step() const { return integer_ratio(ts, t_step()); }

std::size_t ScenarioConfig::ticks_per_lm() const { return integer_ratio(ts, t_lm()); }

std::vector<std::string> ScenarioConfig::violations() const {
  std::vector<std::string> out;
  auto add = [&](std::string s) { out.push_back(std::move(s)); };
  auto check = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      add(e.what());
    }
  };

  if (!(duration >= 0.0)) add("sim.duration must be nonnegative");
  if (!(ts > 0.0)) add("sim.ts must be positive");
  if (!(plant_tau > 0.0)) add("sim.plant_tau must be positive");
  if (!(noise_snr_db > 0.0)) add("sim.noise_snr_db must be positive (use \"inf\" to disable noise)");
  if (!(noise_fs_ratio > 0.0)) add("sim.noise_fs_ratio must be positive");
  if (!(vref_init_ratio > 0.0)) add("sim.vref_init_ratio must be positive");
  if (!(param_scale > 0.0)) add("model.param_scale must be positive");
  check([&] { datasheet.validate(); });
  check([&] { lm.validate(); });
  check([&] { fppt.validate(); });

  if (ts > 0.0 && fppt.f_step > 0.0 && lm.t_lm > 0.0) {
    if (!(ts <= t_step() && t_step() <= t_lm())) add("rates must satisfy Ts <= Tstep <= T_LM");
    if (ticks_per_step() == 0) add("Tstep = " + std::to_string(t_step()) + " s is not an integer multiple of Ts = " +
                                   std::to_string(ts) + " s");
    if (integer_ratio(t_step(), t_lm()) == 0) {
      add("T_LM = " + std::to_string(t_lm()) + " s is not an integer multiple of Tstep = " +
          std::to_string(t_step()) + " s");
    }
  }

  const double need = duration;
  auto coverage = [&](const TimeSeries& s, const char* what) {
    if (s.empty()) {
      add(std::string(what) + " profile is missing");
      return;
    }
    check([&] { s.validate(); });
    if (!s.covers(0.0, need)) {
      add(std::string(what) + " profile covers " + span_text(s) + " but the run needs [0, " +
          std::to_string(need) + "] s");
    }
  };
  coverage(irradiance, "irradiance");
  coverage(temperature, "temperature");

  switch (setpoint.mode) {
    case SetpointMode::schedule:
      if (setpoint.schedule.empty()) {
        add("setpoint schedule is missing");
      } else {
        check([&] { setpoint.schedule.validate(); });
      }
      break;
    case SetpointMode::headroom:
      if (!(setpoint.reserve >= 0.0)) add("setpoint.reserve_w must be nonnegative");
      break;
    case SetpointMode::droop:
      if (!(setpoint.droop.droop > 0.0)) add("setpoint.droop must be positive");
      if (!(setpoint.droop.rated > 0.0)) add("setpoint.rated_w must be positive");
      if (!(setpoint.droop.deadband >= 0.0)) add("setpoint.deadband must be nonnegative");
      coverage(setpoint.frequency, "frequency");
      break;
  }
  return out;
}

void ScenarioConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid scenario '" + name + "':";
  for (const auto& s : v) msg += "\n  - " + s;
  throw ConfigError(msg);
}

PlantOutput plant_step(double vpv, double vref, const pv::EnvState& env_true, const pv::BaseParams& b,
                       const pv::ModuleDatasheet& d, double dt, double tau) {
  if (!(dt > 0.0)) throw DomainError("plant_step: dt must be positive");
  PlantOutput out;
  out.v = std::max(0.0, vpv + (vref - vpv) * -std::expm1(-dt / tau));
  const auto params = pv::five_params_at(b, env_true, d);
  out.i = params ? pv::pv_current(*params, out.v) : 0.0;
  out.p = out.v * out.i;
  return out;
}

double add_noise(double value, double full_scale, double snr_db, std::mt19937_64& rng) {
  if (std::isinf(snr_db) && snr_db > 0.0) return value;
  if (!(snr_db > 0.0)) throw DomainError("add_noise: snr_db must be positive");
  const double sigma = full_scale * std::pow(10.0, -snr_db / 20.0);
  std::normal_distribution<double> n(0.0, sigma);
  return value + n(rng);
}

SimTrace run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  SimTrace trace;
  const std::size_t n = cfg.ticks();
  if (n == 0) return trace;

  const pv::ArrayModel truth = pv::ArrayModel::from_datasheet(cfg.datasheet);
  const pv::ArrayModel assumed{cfg.datasheet, truth.base.scaled(cfg.param_scale)};
  mppe::Estimator est(assumed, cfg.lm);

  const std::size_t per_step = cfg.ticks_per_step();
  const std::size_t per_lm = cfg.ticks_per_lm();
  const std::size_t fill = cfg.lm.window;
  const double fs_v = cfg.noise_fs_ratio * cfg.datasheet.voc0();
  const double fs_i = cfg.noise_fs_ratio * cfg.datasheet.isc0();
  std::mt19937_64 rng(cfg.seed);

  auto env_at = [&](double t) {
    return pv::EnvState{interpolate_profile(cfg.irradiance, t) / 1000.0,
                        interpolate_profile(cfg.temperature, t) / pv::kT0};
  };

  const pv::EnvState env0 = env_at(0.0);
  double vref = cfg.vref_init_ratio * truth.mpp_at(env0).v;
  if (const auto p0 = truth.params_at(env0)) vref = std::min(vref, pv::open_circuit_voltage(*p0));
  fppt::Controller ctl(cfg.fppt, vref);
  double vpv = vref;

  auto setpoint_at = [&](double t, double pmpp_est) {
    switch (cfg.setpoint.mode) {
      case SetpointMode::schedule: return hold_profile(cfg.setpoint.schedule, t);
      case SetpointMode::headroom: return std::max(pmpp_est - cfg.setpoint.reserve, 0.0);
      case SetpointMode::droop:
        return metrics::droop_setpoint(interpolate_profile(cfg.setpoint.frequency, t), pmpp_est,
                                       cfg.setpoint.droop);
    }
    return 0.0;
  };

  trace.ticks.reserve(n);
  trace.control.reserve(n / per_step + 1);
  double pref = 0.0;
  bool have_pref = false;
  long control_index = 0;
  int rst_phase = 0;

  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * cfg.ts;
    const pv::EnvState env = env_at(t);
    const PlantOutput out = plant_step(vpv, vref, env, truth.base, truth.datasheet, cfg.ts, cfg.plant_tau);
    vpv = out.v;
    const double v_meas = add_noise(out.v, fs_v, cfg.noise_snr_db, rng);
    const double i_meas = add_noise(out.i, fs_i, cfg.noise_snr_db, rng);
    est.push_sample(t, v_meas, i_meas);

    const pv::Mpp mpp_true = truth.mpp_at(env);
    const pv::Mpp mpp_est = est.mpp_estimate();
    if (!have_pref) {
      pref = setpoint_at(t, mpp_est.p);
      have_pref = true;
    }

    TickRecord rec;
    if ((k + 1) % per_step == 0) {
      pref = setpoint_at(t, mpp_est.p);
      fppt::Estimates e;
      e.g = est.state().g_fast;
      e.g_filtered = est.state().g_filtered;
      e.lambda_t = est.state().estimate.lambda_t;
      e.params = est.params_estimate();
      e.vmpp = mpp_est.v;
      e.pmpp = mpp_est.p;
      e.iph_gain = pv::photocurrent_gain(assumed.base, e.lambda_t, assumed.datasheet);
      const fppt::UpdateRecord upd = ctl.update({v_meas, i_meas}, pref, e);
      vref = upd.vref;

      ControlRecord c;
      c.t = t;
      c.index = control_index++;
      c.v_meas = v_meas;
      c.i_meas = i_meas;
      c.p_meas = v_meas * i_meas;
      c.p_true = out.p;
      c.pref = pref;
      c.pmpp_true = mpp_true.p;
      c.pmpp_est = mpp_est.p;
      c.update = upd;
      trace.control.push_back(c);
      rst_phase = static_cast<int>(upd.rst_phase);
    }

    if ((k + 1) % per_lm == 0 && k + 1 > fill) {
      const mppe::LmStepInfo info = est.lm_iterate();
      LmEvent ev;
      ev.t = t;
      ev.outcome = info.outcome;
      ev.g = est.state().estimate.g;
      ev.lambda_t = est.state().estimate.lambda_t;
      ev.damping = info.damping;
      ev.ssr = info.outcome == mppe::LmOutcome::committed ? info.ssr_after : info.ssr_before;
      trace.lm.push_back(ev);
    }

    rec.t = t;
    rec.g_true = env.g;
    rec.lambda_true = env.lambda_t;
    rec.vpv = out.v;
    rec.ipv = out.i;
    rec.p = out.p;
    rec.v_meas = v_meas;
    rec.i_meas = i_meas;
    rec.g_fast = est.state().g_fast;
    rec.g_lm = est.state().estimate.g;
    rec.lambda_lm = est.state().estimate.lambda_t;
    rec.vref = vref;
    rec.pref = pref;
    rec.alpha = ctl.state().alpha;
    rec.rst_phase = rst_phase;
    rec.pmpp_true = mpp_true.p;
    rec.pmpp_est = mpp_est.p;
    trace.ticks.push_back(rec);
  }
  trace.rejected_samples = est.state().rejected_samples;
  return trace;
}

}  // namespace pvtrack::sim
