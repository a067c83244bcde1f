// C API implementation: thin handle-and-status bridge over the core library.
#include "wbdrc/wbdrc.h"

#include <exception>
#include <string>

#include "core/error.hpp"
#include "core/runner.hpp"
#include "core/scenario.hpp"

struct wbdrc_scenario {
  wbdrc::Scenario value;
};

struct wbdrc_report {
  wbdrc::RunReport value;
};

namespace {

thread_local std::string lastError = "no error";

wbdrc_status toStatus(const wbdrc::Error& e) {
  switch (e.code()) {
    case wbdrc::ErrorCode::ConfigError: return WBDRC_CONFIG_ERROR;
    case wbdrc::ErrorCode::ControllerFault: return WBDRC_CONTROLLER_FAULT;
    case wbdrc::ErrorCode::InvalidArgument: return WBDRC_INVALID_ARGUMENT;
    default: return WBDRC_ERROR;
  }
}

wbdrc_status fail(wbdrc_status status, const std::string& message) {
  lastError = message;
  return status;
}

wbdrc_status failBadArgument(const char* message) {
  return fail(WBDRC_INVALID_ARGUMENT, message);
}

// Runs `body` translating exceptions to statuses.
template <typename F>
wbdrc_status guarded(F&& body) {
  try {
    return body();
  } catch (const wbdrc::Error& e) {
    return fail(toStatus(e), e.what());
  } catch (const std::exception& e) {
    return fail(WBDRC_ERROR, e.what());
  } catch (...) {
    return fail(WBDRC_ERROR, "unknown error");
  }
}

wbdrc::RunOptions toRunOptions(const wbdrc_run_options* options) {
  wbdrc::RunOptions out;
  if (options == nullptr) return out;
  if (options->variant != nullptr) out.variantOverride = options->variant;
  if (options->out_dir != nullptr) out.outDirOverride = options->out_dir;
  out.seed = options->seed;
  out.writeCsv = options->write_csv != 0;
  return out;
}

}  // namespace

extern "C" {

const char* wbdrc_version(void) { return "1.0.0"; }

const char* wbdrc_last_error(void) { return lastError.c_str(); }

wbdrc_status wbdrc_scenario_load(const char* path, wbdrc_scenario** out) {
  if (path == nullptr || out == nullptr) return failBadArgument("null path or output handle");
  *out = nullptr;
  return guarded([&] {
    auto* handle = new wbdrc_scenario{wbdrc::loadScenarioFile(path)};
    *out = handle;
    return WBDRC_OK;
  });
}

wbdrc_status wbdrc_scenario_parse(const char* text, const char* name, wbdrc_scenario** out) {
  if (text == nullptr || out == nullptr) return failBadArgument("null text or output handle");
  *out = nullptr;
  return guarded([&] {
    auto* handle = new wbdrc_scenario{
        wbdrc::parseScenarioText(text, name == nullptr ? "scenario" : name)};
    *out = handle;
    return WBDRC_OK;
  });
}

void wbdrc_scenario_free(wbdrc_scenario* scenario) { delete scenario; }

const char* wbdrc_scenario_name(const wbdrc_scenario* scenario) {
  return scenario == nullptr ? "" : scenario->value.name.c_str();
}

const char* wbdrc_scenario_robot(const wbdrc_scenario* scenario) {
  return scenario == nullptr ? "" : scenario->value.robot.c_str();
}

const char* wbdrc_scenario_variant(const wbdrc_scenario* scenario) {
  return scenario == nullptr ? "" : scenario->value.variant.c_str();
}

double wbdrc_scenario_duration(const wbdrc_scenario* scenario) {
  return scenario == nullptr ? 0.0 : scenario->value.duration;
}

wbdrc_status wbdrc_run(const wbdrc_scenario* scenario, const wbdrc_run_options* options,
                       wbdrc_report** out) {
  if (scenario == nullptr || out == nullptr) return failBadArgument("null scenario or output handle");
  *out = nullptr;
  return guarded([&] {
    auto* handle = new wbdrc_report{wbdrc::runScenario(scenario->value, toRunOptions(options))};
    *out = handle;
    return WBDRC_OK;
  });
}

wbdrc_status wbdrc_compare(const wbdrc_scenario* scenario, const wbdrc_run_options* options,
                           wbdrc_report** wbdrc_out, wbdrc_report** standard_out,
                           double* rmse_ratio) {
  if (scenario == nullptr || wbdrc_out == nullptr || standard_out == nullptr) {
    return failBadArgument("null scenario or output handle");
  }
  *wbdrc_out = nullptr;
  *standard_out = nullptr;
  return guarded([&] {
    wbdrc::CompareReport pair = wbdrc::compareScenario(scenario->value, toRunOptions(options));
    *wbdrc_out = new wbdrc_report{std::move(pair.wbdrc)};
    *standard_out = new wbdrc_report{std::move(pair.standard)};
    if (rmse_ratio != nullptr) *rmse_ratio = pair.rmseRatio;
    return WBDRC_OK;
  });
}

void wbdrc_report_free(wbdrc_report* report) { delete report; }

const char* wbdrc_report_variant(const wbdrc_report* report) {
  return report == nullptr ? "" : report->value.variant.c_str();
}

const char* wbdrc_report_csv_path(const wbdrc_report* report) {
  return report == nullptr ? "" : report->value.csvPath.c_str();
}

wbdrc_metrics wbdrc_report_metrics(const wbdrc_report* report) {
  wbdrc_metrics out = {};
  if (report == nullptr) return out;
  const wbdrc::RunMetrics& m = report->value.metrics;
  out.height_rmse = m.heightRmse;
  out.max_height_deviation = m.maxHeightDeviation;
  out.fall_time = m.fallTime;
  out.estimator_steady_error = m.estimatorSteadyError;
  out.wrench_identity_max = m.wrenchIdentityMax;
  out.simulated_duration = m.simulatedDuration;
  out.fell = m.fell ? 1 : 0;
  out.theta_in_bounds = m.thetaInBounds ? 1 : 0;
  out.mpc_solves = m.mpcSolves;
  out.mpc_failures = m.mpcFailures;
  out.wbc_holds = m.wbcHolds;
  out.unilateral_violations = m.unilateralViolations;
  return out;
}

int wbdrc_report_warning_count(const wbdrc_report* report) {
  return report == nullptr ? 0 : static_cast<int>(report->value.warnings.size());
}

const char* wbdrc_report_warning(const wbdrc_report* report, int index) {
  if (report == nullptr || index < 0 ||
      index >= static_cast<int>(report->value.warnings.size())) {
    return nullptr;
  }
  return report->value.warnings[static_cast<size_t>(index)].c_str();
}

}  // extern "C"
