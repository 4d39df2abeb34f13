#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pvtrack/config.hpp"
#include "pvtrack/errors.hpp"
#include "pvtrack/fppt.hpp"
#include "pvtrack/metrics.hpp"
#include "pvtrack/mppe.hpp"
#include "pvtrack/pv_model.hpp"
#include "pvtrack/sim.hpp"

namespace py = pybind11;
using namespace pvtrack;

namespace {

template <class Rec, class F>
py::array_t<double> column(const std::vector<Rec>& rows, F&& get) {
  py::array_t<double> out(static_cast<py::ssize_t>(rows.size()));
  double* p = out.mutable_data();
  for (std::size_t k = 0; k < rows.size(); ++k) p[k] = static_cast<double>(get(rows[k]));
  return out;
}

py::dict trace_to_dict(const sim::SimTrace& tr) {
  py::dict ticks;
  const auto& t = tr.ticks;
  ticks["t"] = column(t, [](const auto& r) { return r.t; });
  ticks["g_true"] = column(t, [](const auto& r) { return r.g_true; });
  ticks["lambda_true"] = column(t, [](const auto& r) { return r.lambda_true; });
  ticks["vpv"] = column(t, [](const auto& r) { return r.vpv; });
  ticks["ipv"] = column(t, [](const auto& r) { return r.ipv; });
  ticks["p"] = column(t, [](const auto& r) { return r.p; });
  ticks["v_meas"] = column(t, [](const auto& r) { return r.v_meas; });
  ticks["i_meas"] = column(t, [](const auto& r) { return r.i_meas; });
  ticks["g_fast"] = column(t, [](const auto& r) { return r.g_fast; });
  ticks["g_lm"] = column(t, [](const auto& r) { return r.g_lm; });
  ticks["lambda_lm"] = column(t, [](const auto& r) { return r.lambda_lm; });
  ticks["vref"] = column(t, [](const auto& r) { return r.vref; });
  ticks["pref"] = column(t, [](const auto& r) { return r.pref; });
  ticks["alpha"] = column(t, [](const auto& r) { return r.alpha; });
  ticks["rst_phase"] = column(t, [](const auto& r) { return r.rst_phase; });
  ticks["pmpp_true"] = column(t, [](const auto& r) { return r.pmpp_true; });
  ticks["pmpp_est"] = column(t, [](const auto& r) { return r.pmpp_est; });

  py::dict control;
  const auto& c = tr.control;
  control["t"] = column(c, [](const auto& r) { return r.t; });
  control["p_true"] = column(c, [](const auto& r) { return r.p_true; });
  control["pref"] = column(c, [](const auto& r) { return r.pref; });
  control["vref"] = column(c, [](const auto& r) { return r.update.vref; });
  control["alpha"] = column(c, [](const auto& r) { return r.update.alpha; });
  control["rst_phase"] = column(c, [](const auto& r) { return static_cast<int>(r.update.rst_phase); });
  control["vstep"] = column(c, [](const auto& r) { return r.update.vstep; });
  control["dp_raw"] = column(c, [](const auto& r) { return r.update.dp_raw; });
  control["dp_decoupled"] = column(c, [](const auto& r) { return r.update.dp_decoupled; });
  control["kph"] = column(c, [](const auto& r) { return r.update.kph; });

  py::dict lm;
  lm["t"] = column(tr.lm, [](const auto& r) { return r.t; });
  lm["outcome"] = column(tr.lm, [](const auto& r) { return static_cast<int>(r.outcome); });
  lm["g"] = column(tr.lm, [](const auto& r) { return r.g; });
  lm["lambda_t"] = column(tr.lm, [](const auto& r) { return r.lambda_t; });

  py::dict out;
  out["ticks"] = ticks;
  out["control"] = control;
  out["lm"] = lm;
  out["rejected_samples"] = tr.rejected_samples;
  return out;
}

py::dict metrics_to_dict(const metrics::RunMetrics& m) {
  py::dict d;
  d["scenario"] = m.scenario;
  d["irr_rmse"] = m.irradiance_rmse;
  d["temp_rmse"] = m.temperature_rmse;
  d["tracking_error"] = m.tracking_error;
  d["max_ripple"] = m.max_ripple_ss ? py::cast(*m.max_ripple_ss) : py::none();
  d["rst_iters_max"] = m.rst_iters_max();
  d["rst_unresolved"] = m.rst.unresolved;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Irradiance/temperature estimation and power-setpoint tracking for PV arrays";

  auto base_error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", base_error.ptr());
  py::register_exception<ParameterError>(m, "ParameterError", base_error.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base_error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base_error.ptr());
  py::register_exception<CsvError>(m, "CsvError", base_error.ptr());

  m.attr("T0") = pv::kT0;
  m.def("lambert_w", &pv::lambert_w, py::arg("x"));
  m.def("lambert_w_exp", &pv::lambert_w_exp, py::arg("y"));

  py::class_<pv::ModuleDatasheet>(m, "ModuleDatasheet")
      .def(py::init<>())
      .def_readwrite("name", &pv::ModuleDatasheet::name)
      .def_readwrite("voc0_module", &pv::ModuleDatasheet::voc0_module)
      .def_readwrite("isc0_module", &pv::ModuleDatasheet::isc0_module)
      .def_readwrite("vmp0_module", &pv::ModuleDatasheet::vmp0_module)
      .def_readwrite("imp0_module", &pv::ModuleDatasheet::imp0_module)
      .def_readwrite("alpha_isc", &pv::ModuleDatasheet::alpha_isc)
      .def_readwrite("beta_voc", &pv::ModuleDatasheet::beta_voc)
      .def_readwrite("n_series", &pv::ModuleDatasheet::n_series)
      .def_readwrite("n_parallel", &pv::ModuleDatasheet::n_parallel)
      .def_property_readonly("voc0", &pv::ModuleDatasheet::voc0)
      .def_property_readonly("isc0", &pv::ModuleDatasheet::isc0)
      .def_property_readonly("vmp0", &pv::ModuleDatasheet::vmp0)
      .def_property_readonly("imp0", &pv::ModuleDatasheet::imp0)
      .def_property_readonly("rated_power", &pv::ModuleDatasheet::rated_power)
      .def("validate", &pv::ModuleDatasheet::validate);
  m.def("reference_array", &pv::reference_array);
  m.def("cs6p_250p", &pv::cs6p_250p);

  py::class_<pv::BaseParams>(m, "BaseParams")
      .def_readonly("a0", &pv::BaseParams::a0)
      .def_readonly("rs0", &pv::BaseParams::rs0)
      .def_readonly("rsh0", &pv::BaseParams::rsh0)
      .def_readonly("iph0", &pv::BaseParams::iph0)
      .def_readonly("is0", &pv::BaseParams::is0)
      .def_readonly("delta0", &pv::BaseParams::delta0)
      .def_readonly("w0", &pv::BaseParams::w0)
      .def("scaled", &pv::BaseParams::scaled, py::arg("factor"));
  m.def("derive_base_params", &pv::derive_base_params, py::arg("datasheet"));

  py::class_<pv::FiveParams>(m, "FiveParams")
      .def_readonly("a", &pv::FiveParams::a)
      .def_readonly("rs", &pv::FiveParams::rs)
      .def_readonly("rsh", &pv::FiveParams::rsh)
      .def_readonly("iph", &pv::FiveParams::iph)
      .def_readonly("is_", &pv::FiveParams::is);

  py::class_<pv::EnvState>(m, "EnvState")
      .def(py::init([](double g, double lambda_t) { return pv::EnvState{g, lambda_t}; }), py::arg("g") = 1.0,
           py::arg("lambda_t") = 1.0)
      .def_readwrite("g", &pv::EnvState::g)
      .def_readwrite("lambda_t", &pv::EnvState::lambda_t)
      .def_static("from_kelvin", &pv::EnvState::from_kelvin, py::arg("g"), py::arg("kelvin"))
      .def("validate", &pv::EnvState::validate);

  py::class_<pv::Mpp>(m, "Mpp")
      .def_readonly("v", &pv::Mpp::v)
      .def_readonly("i", &pv::Mpp::i)
      .def_readonly("p", &pv::Mpp::p);

  m.def("pv_current", &pv::pv_current, py::arg("params"), py::arg("v"));
  m.def("open_circuit_voltage", &pv::open_circuit_voltage, py::arg("params"));
  m.def("voc_estimate", &pv::voc_estimate, py::arg("params"), py::arg("k") = 0.99);
  m.def("mpp_of", &pv::mpp_of, py::arg("params"));

  py::class_<pv::ArrayModel>(m, "ArrayModel")
      .def_static("from_datasheet", &pv::ArrayModel::from_datasheet, py::arg("datasheet"))
      .def_readonly("datasheet", &pv::ArrayModel::datasheet)
      .def_readonly("base", &pv::ArrayModel::base)
      .def("params_at", &pv::ArrayModel::params_at, py::arg("env"))
      .def("mpp_at", &pv::ArrayModel::mpp_at, py::arg("env"))
      .def("photocurrent_gain", [](const pv::ArrayModel& a, double lt) {
        return pv::photocurrent_gain(a.base, lt, a.datasheet);
      }, py::arg("lambda_t") = 1.0);

  py::enum_<mppe::LmOutcome>(m, "LmOutcome")
      .value("committed", mppe::LmOutcome::committed)
      .value("not_ready", mppe::LmOutcome::not_ready)
      .value("singular", mppe::LmOutcome::singular)
      .value("no_valid_candidate", mppe::LmOutcome::no_valid_candidate)
      .value("nonstationary", mppe::LmOutcome::nonstationary)
      .value("reseeded", mppe::LmOutcome::reseeded);

  py::class_<mppe::LmConfig>(m, "LmConfig")
      .def(py::init<>())
      .def_readwrite("window", &mppe::LmConfig::window)
      .def_readwrite("t_lm", &mppe::LmConfig::t_lm)
      .def_readwrite("dg_max", &mppe::LmConfig::dg_max)
      .def_readwrite("dt_max", &mppe::LmConfig::dt_max)
      .def_readwrite("stationarity_dg", &mppe::LmConfig::stationarity_dg)
      .def("g_step_cap", &mppe::LmConfig::g_step_cap)
      .def("lambda_step_cap", &mppe::LmConfig::lambda_step_cap);

  py::class_<mppe::LmStepInfo>(m, "LmStepInfo")
      .def_readonly("outcome", &mppe::LmStepInfo::outcome)
      .def_readonly("delta_g", &mppe::LmStepInfo::delta_g)
      .def_readonly("delta_lambda_t", &mppe::LmStepInfo::delta_lambda_t)
      .def_readonly("ssr_before", &mppe::LmStepInfo::ssr_before)
      .def_readonly("ssr_after", &mppe::LmStepInfo::ssr_after);

  py::class_<mppe::Estimator>(m, "Estimator")
      .def(py::init<pv::ArrayModel, mppe::LmConfig>(), py::arg("model"), py::arg("config") = mppe::LmConfig{})
      .def("push_sample", [](mppe::Estimator& e, double t, double v, double i) {
        return e.push_sample(t, v, i).accepted;
      }, py::arg("t"), py::arg("v"), py::arg("i"))
      .def("lm_iterate", &mppe::Estimator::lm_iterate)
      .def("set_estimate", &mppe::Estimator::set_estimate, py::arg("env"))
      .def_property_readonly("estimate", [](const mppe::Estimator& e) { return e.state().estimate; })
      .def_property_readonly("g_fast", [](const mppe::Estimator& e) { return e.state().g_fast; })
      .def_property_readonly("g_filtered", [](const mppe::Estimator& e) { return e.state().g_filtered; })
      .def("mpp_estimate", &mppe::Estimator::mpp_estimate);

  m.def("residual", [](double v, double i, const pv::EnvState& env, const pv::ArrayModel& a) {
    return mppe::residual(v, i, env, a.base, a.datasheet);
  }, py::arg("v"), py::arg("i"), py::arg("env"), py::arg("model"));
  m.def("fast_irradiance", [](double v, double i, double lambda_t, const pv::ArrayModel& a) {
    return mppe::fast_irradiance(v, i, lambda_t, a.base, a.datasheet);
  }, py::arg("v"), py::arg("i"), py::arg("lambda_t"), py::arg("model"));

  py::class_<fppt::FpptConfig>(m, "FpptConfig")
      .def(py::init<>())
      .def_readwrite("vstep_min", &fppt::FpptConfig::vstep_min)
      .def_readwrite("vstep_base", &fppt::FpptConfig::vstep_base)
      .def_readwrite("vstep_max", &fppt::FpptConfig::vstep_max)
      .def_readwrite("k_tr", &fppt::FpptConfig::k_tr)
      .def_readwrite("dp_max", &fppt::FpptConfig::dp_max);
  m.def("steady_step", py::overload_cast<double, const fppt::FpptConfig&>(&fppt::steady_step),
        py::arg("abs_dv_dp"), py::arg("config") = fppt::FpptConfig{});
  m.def("transient_step", &fppt::transient_step, py::arg("p"), py::arg("pref"),
        py::arg("config") = fppt::FpptConfig{});
  m.def("decouple", [](double v_n, double i_n, double v_prev, double i_prev, double kph_prev, double g_n,
                       double g_prev, double iph_gain) {
    const fppt::Decoupling d = fppt::decouple(v_n, i_n, v_prev, i_prev, kph_prev, g_n, g_prev, iph_gain);
    return py::make_tuple(d.di, d.dp_raw, d.dp_decoupled);
  });
  m.def("rst_chord", &fppt::rst_chord, py::arg("v_n"), py::arg("p_n"), py::arg("pref"), py::arg("voc_tilde"));

  m.def("droop_setpoint", [](double f, double pmpp_est, double p_base, double droop, double f_nom,
                             double deadband, double rated) {
    metrics::DroopParams d;
    d.p_base = p_base;
    d.droop = droop;
    d.f_nom = f_nom;
    d.deadband = deadband;
    d.rated = rated;
    return metrics::droop_setpoint(f, pmpp_est, d);
  }, py::arg("f"), py::arg("pmpp_est"), py::arg("p_base") = 0.0, py::arg("droop") = 0.05, py::arg("f_nom") = 60.0,
        py::arg("deadband") = 0.0, py::arg("rated") = 500e3);
  m.def("rmse", &metrics::rmse, py::arg("estimate"), py::arg("truth"));

  m.def("default_config", &config::default_config_text);
  m.def("run", [](const std::string& json_text, const std::filesystem::path& base_dir,
                  const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed) {
    const config::RunConfig rc = config::parse_config(json_text, base_dir, overrides, seed);
    sim::SimTrace trace;
    {
      py::gil_scoped_release release;
      trace = sim::run_scenario(rc.scenario);
    }
    py::dict out = trace_to_dict(trace);
    out["metrics"] = metrics_to_dict(metrics::compute_metrics(rc.scenario.name, trace, rc.metrics));
    out["config"] = rc.resolved_json;
    return out;
  }, py::arg("config_json") = "{}", py::arg("base_dir") = std::filesystem::path("."),
        py::arg("overrides") = std::vector<std::string>{}, py::arg("seed") = std::nullopt);
}
