// Closed-loop experiment harness: wires the planner, disturbance estimator,
// wrench redistribution, whole-body controller, and simulator at the profile
// rates, writes a CSV trace, and reports tracking metrics.
#pragma once

#include <string>
#include <vector>

#include "core/scenario.hpp"
#include "core/types.hpp"

namespace wbdrc {

struct RunMetrics {
  scalar_t heightRmse = 0.0;          // vs desired height, m
  scalar_t maxHeightDeviation = 0.0;  // m
  bool fell = false;                  // base height dropped below half desired
  scalar_t fallTime = -1.0;           // s, -1 when the run completed upright
  scalar_t estimatorSteadyError = 0.0;  // mean |fhat_base - d_base|_inf, last 20%
  bool thetaInBounds = true;          // parameter estimate stayed in its box
  scalar_t wrenchIdentityMax = 0.0;   // max |W_d - (J'F_r + S'tau_ref + fhat_W)|_inf
  int mpcSolves = 0;
  int mpcFailures = 0;                // solves that fell back to the held plan
  int wbcHolds = 0;                   // ticks that held or zeroed the torque
  int unilateralViolations = 0;       // simulator F_z < 0 warnings
  scalar_t simulatedDuration = 0.0;   // s actually integrated
};

struct RunOptions {
  std::string variantOverride;  // empty = scenario's variant
  std::string outDirOverride;   // empty = scenario's output directory
  unsigned seed = 0;            // recorded in the trace header
  bool writeCsv = true;
  bool zeroEstimate = false;    // force fhat = 0 inside the wbdrc path
};

struct RunReport {
  std::string variant;
  std::string csvPath;  // empty when csv writing is off
  RunMetrics metrics;
  std::vector<std::string> warnings;
};

// Runs the scenario to completion (or until a fall stops it early).
// Throws ConfigError for setup problems and ControllerFault when the planner
// cannot produce a trajectory for more than three consecutive periods.
RunReport runScenario(const Scenario& scenario, const RunOptions& options = {});

struct CompareReport {
  RunReport wbdrc;
  RunReport standard;
  scalar_t rmseRatio = 0.0;  // wbdrc / standard height RMSE
};

// Paired run of both controller variants on identical scenario and seed.
CompareReport compareScenario(const Scenario& scenario, const RunOptions& options = {});

}  // namespace wbdrc
