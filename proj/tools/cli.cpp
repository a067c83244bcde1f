// Command-line front end. Links only the C API.
//
//   wbdrc-lab run <scenario-file> [--variant wbdrc|standard] [--out DIR] [--seed N]
//   wbdrc-lab compare <scenario-file> [--out DIR] [--seed N]
//   wbdrc-lab list-scenarios [--dir DIR]
//
// Exit codes: 0 success, 2 controller fault, 3 configuration error.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wbdrc/wbdrc.h"

namespace {

int statusToExit(wbdrc_status status) {
  switch (status) {
    case WBDRC_OK: return 0;
    case WBDRC_CONTROLLER_FAULT: return 2;
    case WBDRC_CONFIG_ERROR: return 3;
    default: return 1;
  }
}

void printMetrics(const wbdrc_report* report) {
  const wbdrc_metrics m = wbdrc_report_metrics(report);
  std::printf("variant            %s\n", wbdrc_report_variant(report));
  std::printf("  height rmse      %.6f m\n", m.height_rmse);
  std::printf("  max deviation    %.6f m\n", m.max_height_deviation);
  if (m.fell != 0) {
    std::printf("  fell             yes, at %.3f s\n", m.fall_time);
  } else {
    std::printf("  fell             no\n");
  }
  std::printf("  estimator error  %.6f (steady, base rows)\n", m.estimator_steady_error);
  std::printf("  wrench identity  %.3e\n", m.wrench_identity_max);
  std::printf("  theta in bounds  %s\n", m.theta_in_bounds != 0 ? "yes" : "no");
  std::printf("  mpc solves       %d (%d failed)\n", m.mpc_solves, m.mpc_failures);
  std::printf("  wbc holds        %d\n", m.wbc_holds);
  std::printf("  simulated        %.3f s\n", m.simulated_duration);
  const char* csv = wbdrc_report_csv_path(report);
  if (csv[0] != '\0') std::printf("  trace            %s\n", csv);
  const int warnings = wbdrc_report_warning_count(report);
  for (int i = 0; i < warnings; ++i) {
    std::fprintf(stderr, "warning: %s\n", wbdrc_report_warning(report, i));
  }
}

int runCommand(const std::string& path, const std::string& variant, const std::string& outDir,
               unsigned seed) {
  wbdrc_scenario* scenario = nullptr;
  wbdrc_status status = wbdrc_scenario_load(path.c_str(), &scenario);
  if (status != WBDRC_OK) {
    std::fprintf(stderr, "error: %s\n", wbdrc_last_error());
    return statusToExit(status);
  }

  wbdrc_run_options options = {};
  options.variant = variant.empty() ? nullptr : variant.c_str();
  options.out_dir = outDir.empty() ? nullptr : outDir.c_str();
  options.seed = seed;
  options.write_csv = 1;

  wbdrc_report* report = nullptr;
  status = wbdrc_run(scenario, &options, &report);
  int exitCode = statusToExit(status);
  if (status == WBDRC_OK) {
    std::printf("scenario           %s (%s)\n", wbdrc_scenario_name(scenario),
                wbdrc_scenario_robot(scenario));
    printMetrics(report);
  } else {
    std::fprintf(stderr, "error: %s\n", wbdrc_last_error());
  }
  wbdrc_report_free(report);
  wbdrc_scenario_free(scenario);
  return exitCode;
}

int compareCommand(const std::string& path, const std::string& outDir, unsigned seed) {
  wbdrc_scenario* scenario = nullptr;
  wbdrc_status status = wbdrc_scenario_load(path.c_str(), &scenario);
  if (status != WBDRC_OK) {
    std::fprintf(stderr, "error: %s\n", wbdrc_last_error());
    return statusToExit(status);
  }

  wbdrc_run_options options = {};
  options.out_dir = outDir.empty() ? nullptr : outDir.c_str();
  options.seed = seed;
  options.write_csv = 1;

  wbdrc_report* compensated = nullptr;
  wbdrc_report* baseline = nullptr;
  double ratio = 0.0;
  status = wbdrc_compare(scenario, &options, &compensated, &baseline, &ratio);
  int exitCode = statusToExit(status);
  if (status == WBDRC_OK) {
    std::printf("scenario           %s (%s)\n", wbdrc_scenario_name(scenario),
                wbdrc_scenario_robot(scenario));
    printMetrics(compensated);
    printMetrics(baseline);
    std::printf("rmse ratio         %.4f (compensated / baseline)\n", ratio);
  } else {
    std::fprintf(stderr, "error: %s\n", wbdrc_last_error());
  }
  wbdrc_report_free(compensated);
  wbdrc_report_free(baseline);
  wbdrc_scenario_free(scenario);
  return exitCode;
}

// Bundled scenarios live next to the binary's source tree or wherever --dir
// points; the first existing candidate wins.
std::string defaultScenarioDir(const char* argv0) {
  const char* env = std::getenv("WBDRC_SCENARIO_DIR");
  if (env != nullptr && *env != '\0') return env;
  std::vector<std::filesystem::path> candidates = {"scenarios"};
  std::error_code ec;
  std::filesystem::path exe = std::filesystem::weakly_canonical(argv0, ec);
  if (!ec && exe.has_parent_path()) {
    candidates.push_back(exe.parent_path() / ".." / "scenarios");
    candidates.push_back(exe.parent_path() / ".." / ".." / "scenarios");
  }
  for (const auto& c : candidates) {
    if (std::filesystem::is_directory(c, ec)) return c.string();
  }
  return "scenarios";
}

int listScenarios(const std::string& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    std::fprintf(stderr, "error: scenario directory not found: %s\n", dir.c_str());
    return 3;
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".scn") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    wbdrc_scenario* scenario = nullptr;
    if (wbdrc_scenario_load(file.string().c_str(), &scenario) == WBDRC_OK) {
      std::printf("%-28s %-8s %-8s %5.1f s\n", wbdrc_scenario_name(scenario),
                  wbdrc_scenario_robot(scenario), wbdrc_scenario_variant(scenario),
                  wbdrc_scenario_duration(scenario));
      wbdrc_scenario_free(scenario);
    } else {
      std::printf("%-28s (unreadable: %s)\n", file.stem().string().c_str(), wbdrc_last_error());
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Whole-body disturbance-rejection control laboratory"};
  app.require_subcommand(1);

  std::string runPath, runVariant, runOut;
  unsigned runSeed = 0;
  CLI::App* run = app.add_subcommand("run", "Run one closed-loop scenario");
  run->add_option("scenario-file", runPath, "Scenario file")->required();
  run->add_option("--variant", runVariant, "Controller variant")
      ->check(CLI::IsMember({"wbdrc", "standard"}));
  run->add_option("--out", runOut, "Output directory for the CSV trace");
  run->add_option("--seed", runSeed, "Seed recorded in the trace header");

  std::string cmpPath, cmpOut;
  unsigned cmpSeed = 0;
  CLI::App* compare =
      app.add_subcommand("compare", "Run a scenario with both controller variants");
  compare->add_option("scenario-file", cmpPath, "Scenario file")->required();
  compare->add_option("--out", cmpOut, "Output directory for the CSV traces");
  compare->add_option("--seed", cmpSeed, "Seed recorded in the trace headers");

  std::string listDir;
  CLI::App* list = app.add_subcommand("list-scenarios", "List bundled scenario files");
  list->add_option("--dir", listDir, "Scenario directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 3;
  }

  if (run->parsed()) return runCommand(runPath, runVariant, runOut, runSeed);
  if (compare->parsed()) return compareCommand(cmpPath, cmpOut, cmpSeed);
  if (list->parsed()) return listScenarios(listDir.empty() ? defaultScenarioDir(argv[0]) : listDir);
  return 0;
}
