// C interface: handle lifecycle, status mapping, and a short closed-loop run.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "wbdrc/wbdrc.h"

namespace {

std::string tempDir(const std::string& tag) {
  const std::filesystem::path dir = std::filesystem::path("/tmp") / ("wbdrc-capi-" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("version and error text are always available") {
  CHECK(std::strlen(wbdrc_version()) > 0);
  CHECK(wbdrc_last_error() != nullptr);
}

TEST_CASE("null arguments are rejected without crashing") {
  wbdrc_scenario* scenario = nullptr;
  CHECK(wbdrc_scenario_load(nullptr, &scenario) == WBDRC_INVALID_ARGUMENT);
  CHECK(wbdrc_scenario_parse("robot quad12\n", "x", nullptr) == WBDRC_INVALID_ARGUMENT);
  CHECK(wbdrc_run(nullptr, nullptr, nullptr) == WBDRC_INVALID_ARGUMENT);
  CHECK(std::strlen(wbdrc_last_error()) > 0);
  CHECK(std::string(wbdrc_scenario_name(nullptr)).empty());
  wbdrc_scenario_free(nullptr);
  wbdrc_report_free(nullptr);
}

TEST_CASE("parse failures map to the configuration status") {
  wbdrc_scenario* scenario = nullptr;
  CHECK(wbdrc_scenario_parse("robot quad12\n", "incomplete", &scenario) == WBDRC_CONFIG_ERROR);
  CHECK(scenario == nullptr);
  CHECK(std::string(wbdrc_last_error()).find("gait") != std::string::npos);

  CHECK(wbdrc_scenario_load("/nonexistent/file.scn", &scenario) == WBDRC_CONFIG_ERROR);
  CHECK(scenario == nullptr);
}

TEST_CASE("scenario accessors reflect the parsed file") {
  const std::string dir = tempDir("load");
  const std::string path = dir + "/hop.scn";
  {
    std::ofstream out(path);
    out << "robot planar3\ngait stand\nduration 0.5\nvariant standard\n";
  }
  wbdrc_scenario* scenario = nullptr;
  REQUIRE(wbdrc_scenario_load(path.c_str(), &scenario) == WBDRC_OK);
  CHECK(std::string(wbdrc_scenario_name(scenario)) == "hop");
  CHECK(std::string(wbdrc_scenario_robot(scenario)) == "planar3");
  CHECK(std::string(wbdrc_scenario_variant(scenario)) == "standard");
  CHECK(wbdrc_scenario_duration(scenario) == doctest::Approx(0.5));
  wbdrc_scenario_free(scenario);
}

TEST_CASE("a short run produces a report with sane metrics") {
  wbdrc_scenario* scenario = nullptr;
  REQUIRE(wbdrc_scenario_parse("robot planar3\ngait stand\nduration 0.5\n", "capi-run",
                               &scenario) == WBDRC_OK);

  const std::string out = tempDir("run");
  wbdrc_run_options options = {};
  options.variant = "wbdrc";
  options.out_dir = out.c_str();
  options.seed = 7;
  options.write_csv = 1;

  wbdrc_report* report = nullptr;
  REQUIRE(wbdrc_run(scenario, &options, &report) == WBDRC_OK);
  CHECK(std::string(wbdrc_report_variant(report)) == "wbdrc");

  const wbdrc_metrics metrics = wbdrc_report_metrics(report);
  CHECK(metrics.fell == 0);
  CHECK(metrics.fall_time == doctest::Approx(-1.0));
  CHECK(metrics.simulated_duration == doctest::Approx(0.5));
  CHECK(metrics.height_rmse < 0.05);
  CHECK(metrics.theta_in_bounds == 1);
  CHECK(metrics.mpc_solves > 0);

  const std::string csv = wbdrc_report_csv_path(report);
  CHECK(std::filesystem::exists(csv));
  CHECK(csv.find(out) == 0);

  CHECK(wbdrc_report_warning(report, wbdrc_report_warning_count(report)) == nullptr);

  wbdrc_report_free(report);
  wbdrc_scenario_free(scenario);
}

TEST_CASE("compare returns both variants and their rmse ratio") {
  wbdrc_scenario* scenario = nullptr;
  REQUIRE(wbdrc_scenario_parse("robot planar3\ngait stand\nduration 0.5\n", "capi-pair",
                               &scenario) == WBDRC_OK);

  wbdrc_run_options options = {};
  options.write_csv = 0;

  wbdrc_report* compensated = nullptr;
  wbdrc_report* baseline = nullptr;
  double ratio = -1.0;
  REQUIRE(wbdrc_compare(scenario, &options, &compensated, &baseline, &ratio) == WBDRC_OK);
  CHECK(std::string(wbdrc_report_variant(compensated)) == "wbdrc");
  CHECK(std::string(wbdrc_report_variant(baseline)) == "standard");
  CHECK(ratio >= 0.0);
  CHECK(std::string(wbdrc_report_csv_path(compensated)).empty());

  wbdrc_report_free(compensated);
  wbdrc_report_free(baseline);
  wbdrc_scenario_free(scenario);
}
