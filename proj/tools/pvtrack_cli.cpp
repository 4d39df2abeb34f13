// pvtrack command-line driver: run, sweep, curves, validate, fixtures.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "pvtrack/config.hpp"
#include "pvtrack/csv.hpp"
#include "pvtrack/errors.hpp"
#include "pvtrack/metrics.hpp"
#include "pvtrack/profile.hpp"
#include "pvtrack/pv_model.hpp"
#include "pvtrack/sim.hpp"

namespace fs = std::filesystem;
using namespace pvtrack;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct CommonArgs {
  std::string config;
  std::string out = "out";
  std::vector<std::string> set;
  std::optional<std::uint64_t> seed;
};

config::RunConfig load(const CommonArgs& a) {
  if (a.config.empty()) return config::parse_config("{}", fs::current_path(), a.set, a.seed);
  return config::load_config(a.config, a.set, a.seed);
}

void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error("cannot create output directory '" + p.string() + "': " + ec.message());
}

metrics::RunMetrics run_into(const config::RunConfig& rc, const fs::path& out) {
  make_dir(out);
  const sim::SimTrace trace = sim::run_scenario(rc.scenario);
  const metrics::RunMetrics m = metrics::compute_metrics(rc.scenario.name, trace, rc.metrics);

  std::ostringstream os;
  csv::write_trace(os, trace.ticks, rc.trace_stride);
  csv::write_file(out / "trace.csv", os.str());
  os.str("");
  csv::write_control(os, trace.control);
  csv::write_file(out / "controller.csv", os.str());
  os.str("");
  csv::write_lm_events(os, trace.lm);
  csv::write_file(out / "estimator.csv", os.str());
  os.str("");
  csv::write_metrics_header(os);
  csv::write_metrics_row(os, m);
  csv::write_file(out / "metrics.csv", os.str());
  csv::write_file(out / "config.json", rc.resolved_json);
  return m;
}

int cmd_run(const CommonArgs& a) {
  const config::RunConfig rc = load(a);
  const metrics::RunMetrics m = run_into(rc, a.out);
  std::cout << "scenario " << m.scenario << ": irr_rmse " << m.irradiance_rmse << " W/m2, temp_rmse "
            << m.temperature_rmse << " K, tracking_error " << m.tracking_error << ", max_ripple "
            << (m.max_ripple_ss ? csv::format_double(*m.max_ripple_ss) : std::string("n/a")) << " W, rst_iters_max "
            << m.rst_iters_max() << "\n"
            << "wrote " << a.out << "\n";
  return kExitOk;
}

// "key=v1,v2" -> key and its values.
std::pair<std::string, std::vector<std::string>> parse_vary(const std::string& text) {
  auto [key, values] = config::split_override(text);
  std::vector<std::string> out;
  std::stringstream ss(values);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (out.empty()) throw ConfigError("--vary '" + text + "' lists no values");
  return {key, out};
}

std::string dir_name(const std::vector<std::string>& assignments) {
  std::string s;
  for (const auto& a : assignments) {
    std::string part = a;
    std::replace_if(part.begin(), part.end(), [](char c) { return !(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_' || c == '='); }, '_');
    s += (s.empty() ? "" : "__") + part;
  }
  return s.empty() ? "base" : s;
}

int cmd_sweep(const CommonArgs& a, const std::vector<std::string>& vary, unsigned jobs) {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& v : vary) axes.push_back(parse_vary(v));

  std::vector<std::vector<std::string>> combos{{}};
  for (const auto& [key, values] : axes) {
    std::vector<std::vector<std::string>> next;
    for (const auto& c : combos) {
      for (const auto& v : values) {
        auto e = c;
        e.push_back(key + "=" + v);
        next.push_back(std::move(e));
      }
    }
    combos = std::move(next);
  }

  // Resolve every combination first so configuration errors abort before any run.
  std::vector<config::RunConfig> configs;
  for (const auto& c : combos) {
    CommonArgs ca = a;
    ca.set.insert(ca.set.end(), c.begin(), c.end());
    configs.push_back(load(ca));
    configs.back().scenario.name += "[" + dir_name(c) + "]";
  }
  make_dir(a.out);

  std::vector<std::optional<metrics::RunMetrics>> results(configs.size());
  std::vector<std::string> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < configs.size(); k = next++) {
      try {
        results[k] = run_into(configs[k], fs::path(a.out) / dir_name(combos[k]));
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(configs.size())));
  std::vector<std::thread> pool;
  for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::ostringstream os;
  csv::write_metrics_header(os);
  int failures = 0;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    if (results[k]) {
      csv::write_metrics_row(os, *results[k]);
    } else {
      ++failures;
      std::cerr << "run " << dir_name(combos[k]) << " failed: " << errors[k] << "\n";
    }
  }
  csv::write_file(fs::path(a.out) / "metrics.csv", os.str());
  std::cout << "sweep: " << configs.size() - failures << " of " << configs.size() << " runs completed in " << a.out
            << "\n";
  return failures ? kExitRuntime : kExitOk;
}

int cmd_curves(const CommonArgs& a, double g_step, double temperature_k, int points) {
  if (!(g_step > 0.0 && g_step <= 1.0)) throw ConfigError("--g-step must lie in (0, 1]");
  if (points < 2) throw ConfigError("--points must be at least 2");
  const config::RunConfig rc = load(a);
  const pv::ArrayModel model = pv::ArrayModel::from_datasheet(rc.scenario.datasheet);
  make_dir(a.out);

  std::ostringstream curves, mpps;
  curves << "g,v,i,p,kph\n";
  mpps << "g,lambda_t,vmp,imp,pmp,voc\n";
  const int levels = static_cast<int>(std::floor(1.0 / g_step + 1e-9));
  const double lambda_t = temperature_k / pv::kT0;
  for (int n = 1; n <= levels; ++n) {
    const double g = std::round(n * g_step * 1e12) / 1e12;
    const auto p = model.params_at({g, lambda_t});
    if (!p) continue;
    const double voc = pv::open_circuit_voltage(*p);
    const pv::Mpp mp = pv::mpp_of(*p);
    mpps << csv::format_double(g) << ',' << csv::format_double(lambda_t) << ',' << csv::format_double(mp.v) << ','
         << csv::format_double(mp.i) << ',' << csv::format_double(mp.p) << ',' << csv::format_double(voc) << '\n';
    for (int k = 0; k < points; ++k) {
      const double v = voc * k / (points - 1);
      const double i = pv::pv_current(*p, v);
      curves << csv::format_double(g) << ',' << csv::format_double(v) << ',' << csv::format_double(i) << ','
             << csv::format_double(v * i) << ',' << csv::format_double(i / p->iph) << '\n';
    }
  }
  csv::write_file(fs::path(a.out) / "curves.csv", curves.str());
  csv::write_file(fs::path(a.out) / "mpp.csv", mpps.str());
  std::cout << "wrote " << levels << " irradiance levels to " << a.out << "\n";
  return kExitOk;
}

int cmd_validate(const CommonArgs& a) {
  config::RunConfig rc;
  try {
    rc = load(a);
  } catch (const ConfigError& e) {
    std::cout << "INVALID\n  - " << e.what() << "\n";
    return kExitConfig;
  }
  const auto v = rc.scenario.violations();
  if (!v.empty()) {
    std::cout << "INVALID\n";
    for (const auto& s : v) std::cout << "  - " << s << "\n";
    return kExitConfig;
  }
  const auto& sc = rc.scenario;
  std::cout << "OK\n"
            << "  scenario " << sc.name << ", " << sc.duration << " s, " << sc.ticks() << " ticks\n"
            << "  Ts " << sc.ts << " s, Tstep " << sc.t_step() << " s (" << sc.ticks_per_step() << " ticks), T_LM "
            << sc.t_lm() << " s (" << sc.ticks_per_lm() << " ticks)\n"
            << "  array " << sc.datasheet.name << " " << sc.datasheet.n_parallel << "x" << sc.datasheet.n_series
            << ", rated " << sc.datasheet.rated_power() / 1e3 << " kW\n"
            << "  setpoint mode " << sim::to_string(sc.setpoint.mode) << "\n";
  return kExitOk;
}

int cmd_fixtures(const std::string& out) {
  const fs::path dir(out);
  make_dir(dir);
  sim::RocofEvent case1;  // 1 Hz/s down to 58 Hz
  sim::RocofEvent case2;
  case2.rocof = 2.0;
  case2.f_min = 59.0;
  csv::write_series(dir / "rocof_1hzps_58hz.csv", sim::rocof_frequency(case1), "frequency_hz");
  csv::write_series(dir / "rocof_2hzps_59hz.csv", sim::rocof_frequency(case2), "frequency_hz");

  const double day = 10.0 * 3600.0;
  const auto sunny = sim::sunny_irradiance(day, 1.0);
  const auto cloudy = sim::cloudy_irradiance(day, 1.0, 7);
  csv::write_series(dir / "sunny_irradiance.csv", sunny, "irradiance_w_per_m2");
  csv::write_series(dir / "sunny_temperature.csv", sim::cell_temperature(sunny), "temperature_kelvin");
  csv::write_series(dir / "cloudy_irradiance.csv", cloudy, "irradiance_w_per_m2");
  csv::write_series(dir / "cloudy_temperature.csv", sim::cell_temperature(cloudy), "temperature_kelvin");

  std::ostringstream ds;
  csv::write_datasheet(ds, pv::reference_array());
  csv::write_file(dir / "cs6p_250p.csv", ds.str());
  std::cout << "wrote fixtures to " << out << "\n";
  return kExitOk;
}

void add_common(CLI::App* sub, CommonArgs& a) {
  sub->add_option("--config", a.config, "JSON configuration file");
  sub->add_option("--out", a.out, "output directory");
  sub->add_option("--set", a.set, "override, section.key=value (repeatable)");
  sub->add_option("--seed", a.seed, "random seed override");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flexible power point tracking simulator"};
  app.require_subcommand(1);

  CommonArgs run_args, sweep_args, curve_args, validate_args;
  auto* run = app.add_subcommand("run", "simulate one scenario and write trace and metrics");
  add_common(run, run_args);
  run->get_option("--config")->required();

  auto* sweep = app.add_subcommand("sweep", "run the cross-product of --vary values");
  add_common(sweep, sweep_args);
  std::vector<std::string> vary;
  unsigned jobs = 1;
  sweep->add_option("--vary", vary, "key=v1,v2,... (repeatable)")->required();
  sweep->add_option("--jobs", jobs, "concurrent runs");

  auto* curves = app.add_subcommand("curves", "emit P-V, I-V and Kph-V curve families");
  add_common(curves, curve_args);
  double g_step = 0.04;
  double temperature = pv::kT0;
  int points = 1000;
  curves->add_option("--g-step", g_step, "irradiance grid step in p.u.");
  curves->add_option("--temperature", temperature, "cell temperature in K");
  curves->add_option("--points", points, "voltage samples per curve");

  auto* validate = app.add_subcommand("validate", "check a configuration without running it");
  add_common(validate, validate_args);

  auto* fixtures = app.add_subcommand("fixtures", "write bundled profile, frequency and datasheet CSVs");
  std::string fixtures_out = "fixtures";
  fixtures->add_option("--out", fixtures_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_args);
    if (*sweep) return cmd_sweep(sweep_args, vary, jobs);
    if (*curves) return cmd_curves(curve_args, g_step, temperature, points);
    if (*validate) return cmd_validate(validate_args);
    if (*fixtures) return cmd_fixtures(fixtures_out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
