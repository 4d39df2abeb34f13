#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pvtrack/metrics.hpp"
#include "pvtrack/sim.hpp"

namespace pvtrack::config {

/// A fully resolved run: scenario, metric settings and output options.
struct RunConfig {
  sim::ScenarioConfig scenario;
  metrics::MetricsConfig metrics;
  std::size_t trace_stride = 1;  // write every n-th tick to trace.csv
  std::string resolved_json;     // effective document after defaults and overrides
};

/// Default configuration document with every recognized key.
std::string default_config_text();

/// Parses a JSON document (merged over the defaults), applies `key=value`
/// overrides and an optional seed, and resolves profile references relative
/// to `base_dir`. Throws ConfigError on any problem; CsvError is rethrown as
/// ConfigError so callers see a single configuration failure type.
RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir,
                       const std::vector<std::string>& overrides = {},
                       std::optional<std::uint64_t> seed = std::nullopt);

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {},
                      std::optional<std::uint64_t> seed = std::nullopt);

/// Splits "section.key=value"; throws ConfigError when malformed.
std::pair<std::string, std::string> split_override(std::string_view text);

}  // namespace pvtrack::config
