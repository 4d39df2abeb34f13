#include "pvtrack/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "pvtrack/errors.hpp"

namespace pvtrack::csv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string where(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line);
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open '" + path.string() + "' for reading");
  return in;
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, std::string_view at) {
  s = trim(s);
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    std::string msg = "cannot parse number '" + std::string(s) + "'";
    if (!at.empty()) msg += " at " + std::string(at);
    throw CsvError(msg);
  }
  return v;
}

std::size_t Table::column(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    std::string have;
    for (const auto& h : header) have += (have.empty() ? "" : ", ") + h;
    throw CsvError("missing column '" + std::string(name) + "' (header has: " + have + ")");
  }
  return static_cast<std::size_t>(it - header.begin());
}

bool Table::has_column(std::string_view name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

std::vector<double> Table::numbers(std::string_view name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.push_back(parse_double(rows[r][c], "line " + std::to_string(line_numbers[r])));
  }
  return out;
}

Table read_table(std::istream& in, std::string_view source) {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    auto fields = split(s);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw CsvError("malformed row at " + where(source, lineno) + ": expected " +
                     std::to_string(t.header.size()) + " fields, found " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(lineno);
  }
  if (!have_header) throw CsvError(std::string(source) + ": empty file (no header)");
  return t;
}

Table read_table(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_table(in, path.string());
}

void write_table(std::ostream& out, const Table& t) {
  auto line = [&](const std::vector<std::string>& f) {
    for (std::size_t k = 0; k < f.size(); ++k) out << (k ? "," : "") << f[k];
    out << '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
}

sim::TimeSeries read_series(std::istream& in, std::string_view value_column, std::string_view source) {
  const Table t = read_table(in, source);
  sim::TimeSeries s;
  s.name = std::string(value_column);
  s.t = t.numbers("t_seconds");
  s.value = t.numbers(value_column);
  if (s.empty()) throw CsvError(std::string(source) + ": empty series '" + std::string(value_column) + "'");
  for (std::size_t k = 1; k < s.t.size(); ++k) {
    if (!(s.t[k] > s.t[k - 1])) {
      throw CsvError("time not increasing at " + where(source, t.line_numbers[k]));
    }
  }
  return s;
}

sim::TimeSeries read_series(const std::filesystem::path& path, std::string_view value_column) {
  auto in = open_in(path);
  return read_series(in, value_column, path.string());
}

void write_series(std::ostream& out, const sim::TimeSeries& s, std::string_view value_column) {
  out << "t_seconds," << value_column << '\n';
  for (std::size_t k = 0; k < s.size(); ++k) out << format_double(s.t[k]) << ',' << format_double(s.value[k]) << '\n';
}

void write_series(const std::filesystem::path& path, const sim::TimeSeries& s, std::string_view value_column) {
  std::ostringstream os;
  write_series(os, s, value_column);
  write_file(path, os.str());
}

pv::ModuleDatasheet read_datasheet(const std::filesystem::path& path) {
  const Table t = read_table(path);
  const std::size_t kc = t.column("key");
  const std::size_t vc = t.column("value");
  pv::ModuleDatasheet d;
  bool seen[8] = {};
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& key = t.rows[r][kc];
    const std::string& val = t.rows[r][vc];
    const std::string at = where(path.string(), t.line_numbers[r]);
    if (key == "name") {
      d.name = val;
      continue;
    }
    const double x = parse_double(val, at);
    if (key == "voc0_module") { d.voc0_module = x; seen[0] = true; }
    else if (key == "isc0_module") { d.isc0_module = x; seen[1] = true; }
    else if (key == "vmp0_module") { d.vmp0_module = x; seen[2] = true; }
    else if (key == "imp0_module") { d.imp0_module = x; seen[3] = true; }
    else if (key == "alpha_isc") { d.alpha_isc = x; seen[4] = true; }
    else if (key == "beta_voc") { d.beta_voc = x; seen[5] = true; }
    else if (key == "n_series") { d.n_series = static_cast<int>(x); seen[6] = true; }
    else if (key == "n_parallel") { d.n_parallel = static_cast<int>(x); seen[7] = true; }
    else throw CsvError("unknown datasheet key '" + key + "' at " + at);
  }
  static const char* names[8] = {"voc0_module", "isc0_module", "vmp0_module", "imp0_module",
                                 "alpha_isc",   "beta_voc",    "n_series",    "n_parallel"};
  for (int k = 0; k < 8; ++k) {
    if (!seen[k]) throw CsvError(path.string() + ": datasheet is missing '" + names[k] + "'");
  }
  return d;
}

void write_datasheet(std::ostream& out, const pv::ModuleDatasheet& d) {
  out << "key,value\n"
      << "name," << d.name << '\n'
      << "voc0_module," << format_double(d.voc0_module) << '\n'
      << "isc0_module," << format_double(d.isc0_module) << '\n'
      << "vmp0_module," << format_double(d.vmp0_module) << '\n'
      << "imp0_module," << format_double(d.imp0_module) << '\n'
      << "alpha_isc," << format_double(d.alpha_isc) << '\n'
      << "beta_voc," << format_double(d.beta_voc) << '\n'
      << "n_series," << d.n_series << '\n'
      << "n_parallel," << d.n_parallel << '\n';
}

const std::vector<std::string>& trace_columns() {
  static const std::vector<std::string> cols{
      "t",      "g_true", "lambda_true", "vpv",  "ipv",   "p",         "v_meas",    "i_meas",  "g_fast",
      "g_lm",   "lambda_lm", "vref",     "pref", "alpha", "rst_phase", "pmpp_true", "pmpp_est"};
  return cols;
}

void write_trace(std::ostream& out, const std::vector<sim::TickRecord>& ticks, std::size_t stride) {
  const auto& cols = trace_columns();
  for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
  out << '\n';
  if (stride == 0) stride = 1;
  for (std::size_t k = 0; k < ticks.size(); k += stride) {
    const auto& r = ticks[k];
    out << format_double(r.t) << ',' << format_double(r.g_true) << ',' << format_double(r.lambda_true) << ','
        << format_double(r.vpv) << ',' << format_double(r.ipv) << ',' << format_double(r.p) << ','
        << format_double(r.v_meas) << ',' << format_double(r.i_meas) << ',' << format_double(r.g_fast) << ','
        << format_double(r.g_lm) << ',' << format_double(r.lambda_lm) << ',' << format_double(r.vref) << ','
        << format_double(r.pref) << ',' << r.alpha << ',' << r.rst_phase << ',' << format_double(r.pmpp_true)
        << ',' << format_double(r.pmpp_est) << '\n';
  }
}

std::vector<sim::TickRecord> read_trace(std::istream& in, std::string_view source) {
  const Table t = read_table(in, source);
  std::vector<std::vector<double>> cols;
  for (const auto& name : trace_columns()) cols.push_back(t.numbers(name));
  if (t.rows.empty()) throw CsvError(std::string(source) + ": empty trace");
  std::vector<sim::TickRecord> out(t.rows.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    auto& r = out[k];
    r.t = cols[0][k];
    r.g_true = cols[1][k];
    r.lambda_true = cols[2][k];
    r.vpv = cols[3][k];
    r.ipv = cols[4][k];
    r.p = cols[5][k];
    r.v_meas = cols[6][k];
    r.i_meas = cols[7][k];
    r.g_fast = cols[8][k];
    r.g_lm = cols[9][k];
    r.lambda_lm = cols[10][k];
    r.vref = cols[11][k];
    r.pref = cols[12][k];
    r.alpha = static_cast<int>(cols[13][k]);
    r.rst_phase = static_cast<int>(cols[14][k]);
    r.pmpp_true = cols[15][k];
    r.pmpp_est = cols[16][k];
  }
  return out;
}

void write_control(std::ostream& out, const std::vector<sim::ControlRecord>& control) {
  out << "t,index,v_meas,i_meas,p_meas,p_true,pref,pref_effective,pmpp_true,pmpp_est,vref,alpha,rst_phase,"
         "vstep,po_move,clamped,dp_raw,dp_decoupled,kph,voc_tilde\n";
  for (const auto& c : control) {
    const auto& u = c.update;
    out << format_double(c.t) << ',' << c.index << ',' << format_double(c.v_meas) << ','
        << format_double(c.i_meas) << ',' << format_double(c.p_meas) << ',' << format_double(c.p_true) << ','
        << format_double(c.pref) << ',' << format_double(u.pref_effective) << ',' << format_double(c.pmpp_true)
        << ',' << format_double(c.pmpp_est) << ',' << format_double(u.vref) << ',' << u.alpha << ','
        << static_cast<int>(u.rst_phase) << ',' << format_double(u.vstep) << ',' << int(u.po_move) << ','
        << int(u.clamped) << ',' << format_double(u.dp_raw) << ',' << format_double(u.dp_decoupled) << ','
        << format_double(u.kph) << ',' << format_double(u.voc_tilde) << '\n';
  }
}

void write_lm_events(std::ostream& out, const std::vector<sim::LmEvent>& events) {
  out << "t,outcome,g,lambda_t,damping,ssr\n";
  for (const auto& e : events) {
    out << format_double(e.t) << ',' << static_cast<int>(e.outcome) << ',' << format_double(e.g) << ','
        << format_double(e.lambda_t) << ',' << format_double(e.damping) << ',' << format_double(e.ssr) << '\n';
  }
}

void write_metrics_header(std::ostream& out) {
  out << "scenario,irr_rmse,temp_rmse,tracking_error,max_ripple,rst_iters_max\n";
}

void write_metrics_row(std::ostream& out, const metrics::RunMetrics& m) {
  out << m.scenario << ',' << format_double(m.irradiance_rmse) << ',' << format_double(m.temperature_rmse) << ','
      << format_double(m.tracking_error) << ',' << (m.max_ripple_ss ? format_double(*m.max_ripple_ss) : "")
      << ',' << m.rst_iters_max() << '\n';
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

}  // namespace pvtrack::csv
