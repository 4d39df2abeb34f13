#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "pvtrack/config.hpp"
#include "pvtrack/errors.hpp"

using namespace pvtrack;
using namespace pvtrack::config;

namespace {

const std::filesystem::path kData = PVTRACK_DATA_DIR;

RunConfig parse(std::string_view text, const std::vector<std::string>& overrides = {}) {
  return parse_config(text, kData / "configs", overrides);
}

}  // namespace

TEST_CASE("defaults carry the reference parameters") {
  const RunConfig rc = parse("{}");
  const auto& s = rc.scenario;
  CHECK(s.ts == 0.05);
  CHECK(s.fppt.f_step == 4.0);
  CHECK(s.lm.t_lm == 5.0);
  CHECK(s.lm.window == 100);
  CHECK(s.fppt.vstep_min == 0.75);
  CHECK(s.fppt.vstep_base == 2.0);
  CHECK(s.fppt.k_tr == 0.002);
  CHECK(s.fppt.dpref_th == 50e3);
  CHECK(s.fppt.dp_th == 15e3);
  CHECK(s.fppt.dpdv_th == 667.0);
  CHECK(s.fppt.k_voc == 0.99);
  CHECK(s.lm.dg_max == 200.0);
  CHECK(s.datasheet.n_series == 16);
  CHECK(s.datasheet.n_parallel == 153);
  CHECK(s.violations().empty());
  CHECK(parse(default_config_text()).resolved_json == rc.resolved_json);
}

TEST_CASE("overrides and seed") {
  const RunConfig rc = parse("{}", {"fppt.dp_max=2500", "sim.noise_snr_db=inf", "fppt.rst_enabled=false"});
  CHECK(rc.scenario.fppt.dp_max == 2500.0);
  CHECK(std::isinf(rc.scenario.noise_snr_db));
  CHECK_FALSE(rc.scenario.fppt.rst_enabled);
  CHECK(parse_config("{}", kData, {}, 77).scenario.seed == 77);

  CHECK_THROWS_AS(parse("{}", {"fppt.nonexistent=1"}), ConfigError);
  CHECK_THROWS_AS(parse("{}", {"fppt.dp_max"}), ConfigError);
  CHECK_THROWS_AS(parse("{}", {"=3"}), ConfigError);
  CHECK_THROWS_AS(parse("{}", {"fppt.k_tr=abc"}), ConfigError);
  CHECK(split_override("sim.duration=5").first == "sim.duration");
}

TEST_CASE("malformed documents") {
  CHECK_THROWS_AS(parse("{"), ConfigError);
  CHECK_THROWS_AS(parse("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"fppt": {"typo": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"sim": {"irradiance": {"type": "magic"}}})"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"sim": {"setpoint": {"mode": "schedule"}}})"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"metrics": {"trace_stride": 0}})"), ConfigError);
  // A missing profile file surfaces as a configuration error.
  CHECK_THROWS_AS(parse(R"({"sim": {"irradiance": {"type": "file", "path": "nowhere.csv"}}})"), ConfigError);
}

TEST_CASE("bundled configurations resolve relative paths") {
  for (const char* name : {"sunny_day.json", "cloudy_day.json", "setpoint_steps.json", "rocof_1hzps_58hz.json",
                           "rocof_2hzps_59hz.json"}) {
    CAPTURE(name);
    const RunConfig rc = load_config(kData / "configs" / name);
    CHECK(rc.scenario.violations().empty());
  }
  const RunConfig droop = load_config(kData / "configs" / "rocof_2hzps_59hz.json");
  CHECK(droop.scenario.setpoint.mode == sim::SetpointMode::droop);
  CHECK(droop.scenario.setpoint.droop.droop == 0.05);
  CHECK(*std::min_element(droop.scenario.setpoint.frequency.value.begin(),
                          droop.scenario.setpoint.frequency.value.end()) == doctest::Approx(59.0));
  CHECK_THROWS_AS(load_config(kData / "configs" / "absent.json"), ConfigError);
}

TEST_CASE("profile types") {
  const RunConfig rc = parse(R"({"sim": {"duration": 100,
    "irradiance": {"type": "cloudy", "seed": 3, "duration": 100},
    "temperature": {"type": "cell"},
    "setpoint": {"mode": "headroom", "reserve_w": 1e5}}})");
  CHECK(rc.scenario.irradiance.covers(0.0, 100.0));
  CHECK(rc.scenario.temperature.size() == rc.scenario.irradiance.size());
  CHECK(rc.scenario.setpoint.reserve == 1e5);

  const RunConfig series = parse(R"({"sim": {"duration": 10,
    "irradiance": {"type": "series", "points": [[0, 100], [10, 900]]}}})");
  CHECK(sim::interpolate_profile(series.scenario.irradiance, 5.0) == doctest::Approx(500.0));
}
