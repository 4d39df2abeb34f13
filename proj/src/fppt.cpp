#include "pvtrack/fppt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pvtrack/errors.hpp"

namespace pvtrack::fppt {

void FpptConfig::validate() const {
  if (!(f_step > 0.0)) throw ConfigError("fppt.f_step must be positive");
  if (!(vstep_min > 0.0 && vstep_min <= vstep_base && vstep_base <= vstep_max)) {
    throw ConfigError("fppt steps must satisfy 0 < vstep_min <= vstep_base <= vstep_max");
  }
  if (!(k_tr > 0.0)) throw ConfigError("fppt.k_tr must be positive");
  if (!(dp_max > 0.0 && dpref_th > 0.0 && dp_th > 0.0 && dpdv_th > 0.0)) {
    throw ConfigError("fppt thresholds must be positive");
  }
  if (!(k_voc > 0.0 && k_voc <= 1.0)) throw ConfigError("fppt.k_voc must lie in (0, 1]");
  if (!(voc_guard > 1.0)) throw ConfigError("fppt.voc_guard must exceed 1");
}

std::string_view to_string(RstPhase phase) {
  switch (phase) {
    case RstPhase::inactive: return "inactive";
    case RstPhase::step1: return "step1";
    case RstPhase::step2: return "step2";
    case RstPhase::step3: return "step3";
  }
  return "unknown";
}

int classify_mode(const ModeInputs& in, const FpptConfig& cfg) {
  if (std::abs(in.pref - in.pref_prev) > cfg.dpref_th) return 0;
  if (std::abs(in.p - in.pref_effective) > cfg.dp_th) return 0;
  // The slope test only applies while seeking the MPP: curtailed operation on
  // the right side always has |dP/dV| well above the threshold.
  if (in.seeking_mpp && in.dv != 0.0 && std::abs(in.dp_decoupled / in.dv) > cfg.dpdv_th) return 0;
  return 1;
}

double steady_step(double abs_dv_dp, const FpptConfig& cfg) {
  if (std::isnan(abs_dv_dp) || std::isinf(abs_dv_dp)) return cfg.vstep_base;
  return std::max(std::min(std::abs(abs_dv_dp) * cfg.dp_max, cfg.vstep_base), cfg.vstep_min);
}

double steady_step(double dv, double dp, const FpptConfig& cfg) {
  if (dp == 0.0) return cfg.vstep_base;
  return steady_step(std::abs(dv / dp), cfg);
}

double transient_step(double p, double pref, const FpptConfig& cfg) {
  return std::min(cfg.k_tr * std::abs(p - pref), cfg.vstep_max);
}

Decoupling decouple(double v_n, double i_n, double v_prev, double i_prev, double kph_prev, double g_n,
                    double g_prev, double iph_gain) {
  Decoupling out;
  out.di = kph_prev * (g_n - g_prev) * iph_gain;
  out.dp_raw = v_n * i_n - v_prev * i_prev;
  out.dp_decoupled = v_n * (i_n - out.di) - v_prev * i_prev;
  return out;
}

double kph_update(double i_n, const std::optional<pv::FiveParams>& params, double kph_prev) {
  if (!params || !(params->iph > 0.0)) return kph_prev;
  return std::clamp(i_n / params->iph, 0.0, 1.199);
}

std::optional<double> rst_chord(double v_n, double p_n, double pref, double voc_tilde) {
  if (!(p_n > 0.0)) return std::nullopt;
  return v_n + (voc_tilde - v_n) * (p_n - pref) / p_n;
}

std::optional<double> rst_projected(const IterationRecord& n1, const IterationRecord& n2, double pref) {
  if (n1.dv == 0.0 || n2.dv == 0.0 || n2.dp_dec == 0.0) return std::nullopt;
  const double slope1 = n1.dp_dec / n1.dv;
  const double slope2 = n2.dp_dec / n2.dv;
  // Artificial step along the last secant; only its projected slope is used.
  const double v_delta = n2.dv * (pref - n2.p) / n2.dp_dec;
  const double slope_delta = slope2 + (slope2 - slope1) / n2.dv * v_delta;
  if (slope_delta == 0.0 || !std::isfinite(slope_delta)) return std::nullopt;
  const double vstep = (n2.p - pref) * std::abs(1.0 / slope_delta);
  return n2.v + vstep;
}

double voc_guard(double voc_tilde, double vpv, double guard) {
  return vpv > voc_tilde ? guard * vpv : voc_tilde;
}

RstGuardResult rst_guards(double vref_candidate, double vmpp_est, int alpha) {
  RstGuardResult out{vref_candidate, alpha == 1};
  if (vref_candidate <= vmpp_est) {
    out.vref = vmpp_est;
    out.terminate = true;
  }
  return out;
}

Controller::Controller(FpptConfig cfg, double vref_init) : cfg_(cfg) {
  cfg_.validate();
  state_.vref = vref_init;
}

double Controller::perturb_and_observe(const IterationRecord& cur, const ModeInputs& mode, double vmpp,
                                       UpdateRecord& rec) {
  int dir;
  if (mode.seeking_mpp) {
    // Hill climbing on the decoupled power change.
    dir = state_.direction;
    if (state_.have_prev && cur.dv != 0.0) {
      dir = (cur.dv > 0.0 ? 1 : -1) * (cur.dp_dec >= 0.0 ? 1 : -1);
    }
  } else if (cur.v < vmpp) {
    dir = 1;  // curtail on the right side only
  } else if (state_.dvref_prev != 0.0 && std::abs(cur.p - mode.pref_effective) < 0.5 * cfg_.dp_max) {
    // Already at the closest reachable level: step back to the previous point.
    dir = state_.dvref_prev > 0.0 ? -1 : 1;
  } else {
    dir = cur.p > mode.pref_effective ? 1 : -1;
  }

  double step;
  if (rec.alpha == 1) {
    // Slope from the commanded voltage change; the measured one carries sensor noise.
    const double dv = state_.dvref_prev != 0.0 ? state_.dvref_prev : cur.dv;
    step = state_.have_prev ? steady_step(dv, cur.dp_dec, cfg_) : cfg_.vstep_base;
    // A reversal while regulating retraces the previous step so the dither
    // keeps returning to the same two points instead of drifting across Pref.
    const double prev = std::abs(state_.dvref_prev);
    if (!mode.seeking_mpp && state_.dvref_prev * dir < 0.0 && std::abs(prev - step) <= 0.25 * step) {
      step = prev;
    }
  } else {
    step = std::max(transient_step(cur.p, mode.pref_effective, cfg_), cfg_.vstep_min);
  }
  double vref = state_.vref + dir * step;
  if (!mode.seeking_mpp && dir < 0 && vref < vmpp && cur.v >= vmpp) {
    vref = std::min(vmpp, state_.vref);
    rec.clamped = true;
  }
  rec.po_move = true;
  state_.direction = dir;
  return vref;
}

UpdateRecord Controller::update(const Measurement& m, double pref, const Estimates& est) {
  UpdateRecord rec;
  IterationRecord cur{m.v, m.i, m.p(), 0.0, 0.0};

  if (state_.have_prev) {
    // A new temperature estimate rebases the irradiance; no irradiance change is attributed then.
    const bool rebased = est.lambda_t != state_.lambda_prev;
    const double g_prev = cfg_.decoupling_enabled && !rebased ? state_.g_prev : est.g_filtered;
    const Decoupling dec =
        decouple(m.v, m.i, state_.prev.v, state_.prev.i, state_.kph_prev, est.g_filtered, g_prev, est.iph_gain);
    cur.dv = m.v - state_.prev.v;
    cur.dp_dec = dec.dp_decoupled;
    rec.dp_raw = dec.dp_raw;
    rec.dp_decoupled = dec.dp_decoupled;
  }
  rec.kph = kph_update(m.i, est.params, state_.kph_prev);

  const bool have_estimate = est.pmpp > 0.0;
  const bool seeking = have_estimate && pref >= est.pmpp;
  const double pref_eff = have_estimate ? std::min(pref, est.pmpp) : pref;
  rec.pref_effective = pref_eff;

  ModeInputs mode;
  mode.p = cur.p;
  mode.pref = pref;
  mode.pref_prev = state_.have_prev ? state_.pref_prev : pref;
  mode.pref_effective = pref_eff;
  mode.dp_decoupled = cur.dp_dec;
  mode.dv = cur.dv;
  mode.seeking_mpp = seeking;
  rec.alpha = classify_mode(mode, cfg_);

  double voc_tilde = est.params ? pv::voc_estimate(*est.params, cfg_.k_voc) : cfg_.voc_guard * m.v;
  voc_tilde = voc_guard(voc_tilde, m.v, cfg_.voc_guard);
  rec.voc_tilde = voc_tilde;

  if (cfg_.rst_enabled && state_.have_prev) {
    if (state_.rst_phase == RstPhase::inactive && rec.alpha == 0 && !seeking) {
      state_.rst_phase = RstPhase::step1;
      ++state_.rst_sequences;
    } else if (state_.rst_phase != RstPhase::inactive && rec.alpha == 1) {
      state_.rst_phase = RstPhase::inactive;
    }
  } else {
    state_.rst_phase = RstPhase::inactive;
  }

  double vref = state_.vref;
  if (state_.rst_phase != RstPhase::inactive) {
    rec.rst_phase = state_.rst_phase;
    std::optional<double> candidate;
    switch (state_.rst_phase) {
      case RstPhase::step1:
        state_.rst_history[0] = cur;
        candidate = rst_chord(cur.v, cur.p, pref_eff, voc_tilde);
        break;
      case RstPhase::step2:
        state_.rst_history[1] = cur;
        candidate = rst_chord(cur.v, cur.p, pref_eff, voc_tilde);
        break;
      case RstPhase::step3:
        state_.rst_history[2] = cur;
        candidate = rst_projected(state_.rst_history[1], state_.rst_history[2], pref_eff);
        break;
      case RstPhase::inactive:
        break;
    }
    if (candidate) {
      const RstGuardResult guarded = rst_guards(*candidate, est.vmpp, rec.alpha);
      vref = guarded.vref;
      rec.clamped = guarded.vref != *candidate;
      const bool last = state_.rst_phase == RstPhase::step3;
      state_.rst_phase = (guarded.terminate || last)
                             ? RstPhase::inactive
                             : static_cast<RstPhase>(static_cast<int>(state_.rst_phase) + 1);
      if (vref != state_.vref) state_.direction = vref > state_.vref ? 1 : -1;
    } else {
      state_.rst_phase = RstPhase::inactive;
      vref = perturb_and_observe(cur, mode, est.vmpp, rec);
    }
  } else {
    vref = perturb_and_observe(cur, mode, est.vmpp, rec);
  }

  if (vref > voc_tilde) {
    vref = voc_tilde;
    rec.clamped = true;
  }
  if (vref < 0.0) {
    vref = 0.0;
    rec.clamped = true;
  }

  rec.vstep = std::abs(vref - state_.vref);
  state_.dvref_prev = vref - state_.vref;
  rec.vref = vref;

  state_.vref = vref;
  state_.alpha = rec.alpha;
  state_.prev = cur;
  state_.have_prev = true;
  state_.kph_prev = rec.kph;
  state_.g_prev = est.g_filtered;
  state_.lambda_prev = est.lambda_t;
  state_.pref_prev = pref;
  return rec;
}

}  // namespace pvtrack::fppt
