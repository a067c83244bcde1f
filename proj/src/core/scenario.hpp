// Scenario description files: plain text key/value lines picking a bundled
// robot, a gait, a velocity/height command, the controller variant, gain
// profile, and the disturbances to inject.
#pragma once

#include <string>

#include "core/mpc.hpp"
#include "core/sim.hpp"
#include "core/types.hpp"

namespace wbdrc {

struct Scenario {
  std::string name;            // file stem, used for output naming
  std::string robot;           // planar3 | quad12 | biped12
  std::string gait;            // stand | trot | step | walk
  scalar_t duration = 0.0;     // s
  scalar_t cycleDuration = 0.0;  // gait cycle, 0 = gait default
  Command command;             // height 0 = model default
  std::string variant = "wbdrc";  // wbdrc | standard
  std::string gains;           // biped-sim | quad-sim | quad-exp, empty = robot default
  std::string outDir = ".";
  scalar_t mpcHorizon = 0.0;   // 0 = profile default
  int mpcNodes = 0;            // 0 = profile default
  DisturbanceSpec disturbance;
};

// Parses the scenario grammar:
//   robot quad12              gait step            duration 10
//   vx 0.2   vy 0   yawrate 0   height 0.31   cycle 0.7
//   variant wbdrc             gains quad-sim       out results
//   mpc_horizon 0.6           mpc_nodes 16
//   payload 8 trunk           (body optional, default attachment)
//   wrench fx fy fz tx ty tz start stop            (stop accepts inf)
//   torque_scale <joint> <scale> <start> <stop>
// '#' comments; wrench/torque_scale lines accumulate, scalar keys must be
// unique. Throws ConfigError with file:line context.
Scenario parseScenarioText(const std::string& text, const std::string& name = "scenario");

Scenario loadScenarioFile(const std::string& path);

// Scenario's explicit gains profile, or the robot default
// (quad12 -> quad-sim, biped12 -> biped-sim, planar3 -> biped-sim).
std::string gainsProfileFor(const Scenario& scenario);

}  // namespace wbdrc
