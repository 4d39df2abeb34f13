#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "pvtrack/metrics.hpp"
#include "pvtrack/profile.hpp"
#include "pvtrack/pv_model.hpp"
#include "pvtrack/sim.hpp"

namespace pvtrack::csv {

/// Shortest decimal text that reads back to the same double.
std::string format_double(double x);
/// Strict full-field parse; throws CsvError mentioning `where` on failure.
double parse_double(std::string_view s, std::string_view where = {});

/// Comma-separated table with a header row. Lines starting with '#' and blank
/// lines are ignored. Fields are not quoted.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // source line of each row

  /// Index of `name`; throws CsvError naming the missing column.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
  /// Parsed numeric column; errors carry the line number.
  std::vector<double> numbers(std::string_view name) const;
};

Table read_table(std::istream& in, std::string_view source = "<stream>");
Table read_table(const std::filesystem::path& path);
void write_table(std::ostream& out, const Table& t);

/// Reads (t_seconds, value_column); throws CsvError for an empty series.
sim::TimeSeries read_series(const std::filesystem::path& path, std::string_view value_column);
sim::TimeSeries read_series(std::istream& in, std::string_view value_column, std::string_view source = "<stream>");
void write_series(std::ostream& out, const sim::TimeSeries& s, std::string_view value_column);
void write_series(const std::filesystem::path& path, const sim::TimeSeries& s, std::string_view value_column);

/// Module datasheet as (key, value) rows.
pv::ModuleDatasheet read_datasheet(const std::filesystem::path& path);
void write_datasheet(std::ostream& out, const pv::ModuleDatasheet& d);

const std::vector<std::string>& trace_columns();
/// Writes every `stride`-th tick record.
void write_trace(std::ostream& out, const std::vector<sim::TickRecord>& ticks, std::size_t stride = 1);
std::vector<sim::TickRecord> read_trace(std::istream& in, std::string_view source = "<stream>");

void write_control(std::ostream& out, const std::vector<sim::ControlRecord>& control);
void write_lm_events(std::ostream& out, const std::vector<sim::LmEvent>& events);

/// One row per run: scenario, irr_rmse, temp_rmse, tracking_error, max_ripple, rst_iters_max.
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const metrics::RunMetrics& m);

/// Opens `path` for writing; throws Error when that fails.
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace pvtrack::csv
