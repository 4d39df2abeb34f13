#include "pvtrack/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

#include "pvtrack/csv.hpp"
#include "pvtrack/errors.hpp"

namespace pvtrack::config {

using nlohmann::json;

namespace {

const char* kDefaults = R"({
  "name": "scenario",
  "model": {
    "datasheet": "CS6P-250P",
    "n_series": 16,
    "n_parallel": 153,
    "param_scale": 1.0
  },
  "mppe": {
    "window": 100,
    "damping_gain": 3.0,
    "damping_min": 1e-6,
    "damping_max": 1e-3,
    "damping_init": 1e-4,
    "dg_max": 200.0,
    "dt_max": 3.0,
    "t_lm": 5.0,
    "lpf_cutoff_hz": 1.0,
    "g_floor": 1e-3,
    "stationarity_dg": 0.02,
    "min_valid_fraction": 0.5
  },
  "fppt": {
    "f_step": 4.0,
    "vstep_min": 0.75,
    "vstep_base": 2.0,
    "vstep_max": 20.0,
    "k_tr": 0.002,
    "dp_max": 5000.0,
    "dpref_th": 50000.0,
    "dp_th": 15000.0,
    "dpdv_th": 667.0,
    "k_voc": 0.99,
    "voc_guard": 1.005,
    "rst_enabled": true,
    "decoupling_enabled": true
  },
  "sim": {
    "duration": 60.0,
    "ts": 0.05,
    "plant_tau": 0.05,
    "noise_snr_db": 80.0,
    "noise_fs_ratio": 1.2,
    "vref_init_ratio": 1.05,
    "seed": 1,
    "irradiance": {"type": "constant", "value": 1000.0},
    "temperature": {"type": "constant", "value": 298.15},
    "setpoint": {"mode": "schedule", "schedule": [[0.0, 300000.0]]}
  },
  "metrics": {
    "rated_w": 500000.0,
    "warmup_s": 60.0,
    "ripple_window_s": 2.0,
    "trace_stride": 1
  }
})";

// Objects whose members depend on a "type" or "mode" discriminator.
const std::set<std::string> kOpenObjects{"sim.irradiance", "sim.temperature", "sim.setpoint", "model.datasheet",
                                         "sim.setpoint.frequency"};

std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

// Rejects keys that the defaults do not know, except inside open objects.
void check_known(const json& user, const json& defaults, const std::string& path) {
  if (!user.is_object() || kOpenObjects.count(path)) return;
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = join(path, it.key());
    if (!defaults.is_object() || !defaults.contains(it.key())) {
      throw ConfigError("unknown configuration key '" + key + "'");
    }
    check_known(it.value(), defaults[it.key()], key);
  }
}

// Recursive merge where objects in `over` replace leaves and, for open
// objects, replace the whole default object.
void merge(json& base, const json& over, const std::string& path) {
  if (!over.is_object() || !base.is_object() || kOpenObjects.count(path)) {
    base = over;
    return;
  }
  for (auto it = over.begin(); it != over.end(); ++it) {
    merge(base[it.key()], it.value(), join(path, it.key()));
  }
}

json parse_value_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return json(text);
  }
}

void apply_override(json& doc, const std::string& key, const std::string& value) {
  json* node = &doc;
  std::string path;
  std::size_t start = 0;
  bool open = false;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("malformed override key '" + key + "'");
    const bool last = dot == std::string::npos;
    if (!node->is_object()) throw ConfigError("override '" + key + "': '" + path + "' is not a section");
    if (!node->contains(part) && !(last && open)) {
      throw ConfigError("override '" + key + "' does not name a documented configuration key");
    }
    path = join(path, part);
    node = &(*node)[part];
    open = open || kOpenObjects.count(path) > 0;
    if (last) break;
    start = dot + 1;
  }
  *node = parse_value_text(value);
}

double number(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError("'" + where + "' is missing '" + key + "'");
  const json& v = obj.at(key);
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  }
  if (v.is_null()) return std::numeric_limits<double>::infinity();
  throw ConfigError("'" + where + "." + key + "' must be a number");
}

double number_or(const json& obj, const char* key, double fallback, const std::string& where) {
  return obj.contains(key) ? number(obj, key, where) : fallback;
}

bool boolean(const json& obj, const char* key, const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError("'" + where + "." + key + "' must be true or false");
  return v.get<bool>();
}

std::string text(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || !obj.at(key).is_string()) {
    throw ConfigError("'" + where + "." + key + "' must be a string");
  }
  return obj.at(key).get<std::string>();
}

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

sim::TimeSeries series_from_pairs(const json& arr, const std::string& name, const std::string& where) {
  if (!arr.is_array() || arr.empty()) throw ConfigError("'" + where + "' must be a nonempty list of [t, value]");
  sim::TimeSeries s;
  s.name = name;
  for (const auto& row : arr) {
    if (!row.is_array() || row.size() != 2 || !row[0].is_number() || !row[1].is_number()) {
      throw ConfigError("'" + where + "' entries must be [t, value] number pairs");
    }
    s.t.push_back(row[0].get<double>());
    s.value.push_back(row[1].get<double>());
  }
  s.validate();
  return s;
}

sim::TimeSeries resolve_profile(const json& desc, const std::string& where, const char* column,
                                double duration, std::uint64_t seed, const std::filesystem::path& base,
                                const sim::TimeSeries* irradiance) {
  if (!desc.is_object()) throw ConfigError("'" + where + "' must be an object");
  const std::string type = text(desc, "type", where);
  if (type == "constant") return sim::constant_profile(column, number(desc, "value", where), duration);
  if (type == "file") {
    auto s = csv::read_series(resolve_path(base, text(desc, "path", where)), column);
    if (desc.contains("scale")) {
      for (double& v : s.value) v *= number(desc, "scale", where);
    }
    return s;
  }
  if (type == "series") return series_from_pairs(desc.at("points"), column, where + ".points");
  if (type == "sunny" || type == "cloudy") {
    sim::SunnyParams sun;
    sun.peak = number_or(desc, "peak", sun.peak, where);
    sun.floor = number_or(desc, "floor", sun.floor, where);
    sun.exponent = number_or(desc, "exponent", sun.exponent, where);
    const double dt = number_or(desc, "dt", 1.0, where);
    const double span = number_or(desc, "duration", duration, where);
    if (type == "sunny") return sim::sunny_irradiance(span, dt, sun);
    sim::CloudParams c;
    c.mean_clear_s = number_or(desc, "mean_clear_s", c.mean_clear_s, where);
    c.mean_cloud_s = number_or(desc, "mean_cloud_s", c.mean_cloud_s, where);
    c.depth_min = number_or(desc, "depth_min", c.depth_min, where);
    c.depth_max = number_or(desc, "depth_max", c.depth_max, where);
    c.filter_tau_s = number_or(desc, "filter_tau_s", c.filter_tau_s, where);
    c.max_slope = number_or(desc, "max_slope", c.max_slope, where);
    const auto profile_seed = static_cast<std::uint64_t>(number_or(desc, "seed", static_cast<double>(seed), where));
    return sim::cloudy_irradiance(span, dt, profile_seed, sun, c);
  }
  if (type == "cell") {
    if (!irradiance) throw ConfigError("'" + where + "': type 'cell' only applies to the temperature profile");
    sim::CellTemperatureParams p;
    p.ambient_k = number_or(desc, "ambient_k", p.ambient_k, where);
    p.rise_k = number_or(desc, "rise_k", p.rise_k, where);
    p.time_constant_s = number_or(desc, "time_constant_s", p.time_constant_s, where);
    return sim::cell_temperature(*irradiance, p);
  }
  if (type == "rocof") {
    sim::RocofEvent e;
    e.f_nom = number_or(desc, "f_nom", e.f_nom, where);
    e.t_event = number_or(desc, "t_event", e.t_event, where);
    e.rocof = number_or(desc, "rocof", e.rocof, where);
    e.f_min = number_or(desc, "f_min", e.f_min, where);
    e.hold_s = number_or(desc, "hold_s", e.hold_s, where);
    e.recovery = number_or(desc, "recovery", e.recovery, where);
    e.duration = number_or(desc, "duration", duration, where);
    e.dt = number_or(desc, "dt", e.dt, where);
    return sim::rocof_frequency(e);
  }
  throw ConfigError("'" + where + ".type' = '" + type +
                    "' is not one of constant, file, series, sunny, cloudy, cell, rocof");
}

pv::ModuleDatasheet resolve_datasheet(const json& model, const std::filesystem::path& base) {
  const json& desc = model.at("datasheet");
  pv::ModuleDatasheet d;
  if (desc.is_string()) {
    const std::string s = desc.get<std::string>();
    if (s == "CS6P-250P") {
      d = pv::cs6p_250p();
    } else {
      d = csv::read_datasheet(resolve_path(base, s));
    }
  } else if (desc.is_object()) {
    const std::string w = "model.datasheet";
    d.name = desc.contains("name") ? text(desc, "name", w) : "custom";
    d.voc0_module = number(desc, "voc0_module", w);
    d.isc0_module = number(desc, "isc0_module", w);
    d.vmp0_module = number(desc, "vmp0_module", w);
    d.imp0_module = number(desc, "imp0_module", w);
    d.alpha_isc = number(desc, "alpha_isc", w);
    d.beta_voc = number(desc, "beta_voc", w);
  } else {
    throw ConfigError("'model.datasheet' must be a module name, a CSV path or an object");
  }
  d.n_series = static_cast<int>(number(model, "n_series", "model"));
  d.n_parallel = static_cast<int>(number(model, "n_parallel", "model"));
  return d;
}

RunConfig build(const json& doc, const std::filesystem::path& base) {
  RunConfig rc;
  sim::ScenarioConfig& sc = rc.scenario;
  if (!doc.at("name").is_string()) throw ConfigError("'name' must be a string");
  sc.name = doc.at("name").get<std::string>();

  const json& model = doc.at("model");
  sc.datasheet = resolve_datasheet(model, base);
  sc.param_scale = number(model, "param_scale", "model");

  const json& m = doc.at("mppe");
  sc.lm.window = static_cast<std::size_t>(number(m, "window", "mppe"));
  sc.lm.damping_gain = number(m, "damping_gain", "mppe");
  sc.lm.damping_min = number(m, "damping_min", "mppe");
  sc.lm.damping_max = number(m, "damping_max", "mppe");
  sc.lm.damping_init = number(m, "damping_init", "mppe");
  sc.lm.dg_max = number(m, "dg_max", "mppe");
  sc.lm.dt_max = number(m, "dt_max", "mppe");
  sc.lm.t_lm = number(m, "t_lm", "mppe");
  sc.lm.lpf_cutoff_hz = number(m, "lpf_cutoff_hz", "mppe");
  sc.lm.g_floor = number(m, "g_floor", "mppe");
  sc.lm.stationarity_dg = number(m, "stationarity_dg", "mppe");
  sc.lm.min_valid_fraction = number(m, "min_valid_fraction", "mppe");

  const json& f = doc.at("fppt");
  sc.fppt.f_step = number(f, "f_step", "fppt");
  sc.fppt.vstep_min = number(f, "vstep_min", "fppt");
  sc.fppt.vstep_base = number(f, "vstep_base", "fppt");
  sc.fppt.vstep_max = number(f, "vstep_max", "fppt");
  sc.fppt.k_tr = number(f, "k_tr", "fppt");
  sc.fppt.dp_max = number(f, "dp_max", "fppt");
  sc.fppt.dpref_th = number(f, "dpref_th", "fppt");
  sc.fppt.dp_th = number(f, "dp_th", "fppt");
  sc.fppt.dpdv_th = number(f, "dpdv_th", "fppt");
  sc.fppt.k_voc = number(f, "k_voc", "fppt");
  sc.fppt.voc_guard = number(f, "voc_guard", "fppt");
  sc.fppt.rst_enabled = boolean(f, "rst_enabled", "fppt");
  sc.fppt.decoupling_enabled = boolean(f, "decoupling_enabled", "fppt");

  const json& s = doc.at("sim");
  sc.duration = number(s, "duration", "sim");
  sc.ts = number(s, "ts", "sim");
  sc.plant_tau = number(s, "plant_tau", "sim");
  sc.noise_snr_db = number(s, "noise_snr_db", "sim");
  sc.noise_fs_ratio = number(s, "noise_fs_ratio", "sim");
  sc.vref_init_ratio = number(s, "vref_init_ratio", "sim");
  const double seed = number(s, "seed", "sim");
  if (!(seed >= 0.0)) throw ConfigError("'sim.seed' must be a nonnegative integer");
  sc.seed = static_cast<std::uint64_t>(seed);

  sc.irradiance =
      resolve_profile(s.at("irradiance"), "sim.irradiance", "irradiance_w_per_m2", sc.duration, sc.seed, base, nullptr);
  sc.temperature = resolve_profile(s.at("temperature"), "sim.temperature", "temperature_kelvin", sc.duration,
                                   sc.seed, base, &sc.irradiance);

  const json& sp = s.at("setpoint");
  const std::string w = "sim.setpoint";
  sc.setpoint.mode = sim::setpoint_mode_from_string(text(sp, "mode", w));
  switch (sc.setpoint.mode) {
    case sim::SetpointMode::schedule:
      if (sp.contains("file")) {
        sc.setpoint.schedule = csv::read_series(resolve_path(base, text(sp, "file", w)), "pref_watts");
      } else if (sp.contains("schedule")) {
        sc.setpoint.schedule = series_from_pairs(sp.at("schedule"), "pref_watts", w + ".schedule");
      } else {
        throw ConfigError("'sim.setpoint' in schedule mode needs 'schedule' or 'file'");
      }
      break;
    case sim::SetpointMode::headroom:
      sc.setpoint.reserve = number(sp, "reserve_w", w);
      break;
    case sim::SetpointMode::droop: {
      auto& d = sc.setpoint.droop;
      d.droop = number_or(sp, "droop", d.droop, w);
      d.f_nom = number_or(sp, "f_nom", d.f_nom, w);
      d.deadband = number_or(sp, "deadband", d.deadband, w);
      d.p_base = number(sp, "p_base", w);
      d.rated = number_or(sp, "rated_w", d.rated, w);
      if (sp.contains("frequency_file")) {
        sc.setpoint.frequency = csv::read_series(resolve_path(base, text(sp, "frequency_file", w)), "frequency_hz");
      } else if (sp.contains("frequency")) {
        sc.setpoint.frequency =
            resolve_profile(sp.at("frequency"), w + ".frequency", "frequency_hz", sc.duration, sc.seed, base, nullptr);
      } else {
        throw ConfigError("'sim.setpoint' in droop mode needs 'frequency_file' or 'frequency'");
      }
      break;
    }
  }

  const json& mt = doc.at("metrics");
  rc.metrics.rated = number(mt, "rated_w", "metrics");
  rc.metrics.warmup_s = number(mt, "warmup_s", "metrics");
  rc.metrics.ripple_window_s = number(mt, "ripple_window_s", "metrics");
  rc.metrics.dp_th = sc.fppt.dp_th;
  const double stride = number(mt, "trace_stride", "metrics");
  if (!(stride >= 1.0)) throw ConfigError("'metrics.trace_stride' must be at least 1");
  rc.trace_stride = static_cast<std::size_t>(stride);
  return rc;
}

}  // namespace

std::string default_config_text() { return json::parse(kDefaults).dump(2) + "\n"; }

std::pair<std::string, std::string> split_override(std::string_view t) {
  const std::size_t eq = t.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(t) + "' must have the form section.key=value");
  }
  return {std::string(t.substr(0, eq)), std::string(t.substr(eq + 1))};
}

RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir,
                       const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed) {
  json user;
  try {
    user = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  if (!user.is_object()) throw ConfigError("configuration root must be an object");
  json doc = json::parse(kDefaults);
  check_known(user, doc, "");
  merge(doc, user, "");
  for (const auto& o : overrides) {
    const auto [key, value] = split_override(o);
    apply_override(doc, key, value);
  }
  if (seed) doc["sim"]["seed"] = *seed;

  try {
    RunConfig rc = build(doc, base_dir);
    rc.resolved_json = doc.dump(2) + "\n";
    return rc;
  } catch (const CsvError& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("configuration error: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                      std::optional<std::uint64_t> seed) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path(), overrides, seed);
}

}  // namespace pvtrack::config
