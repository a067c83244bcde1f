#include "core/scenario.hpp"

#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <vector>

#include "core/error.hpp"
#include "core/model_library.hpp"

namespace wbdrc {
namespace {

[[noreturn]] void fail(const std::string& name, int line, const std::string& message) {
  throw Error(ErrorCode::ConfigError, name + ":" + std::to_string(line) + ": " + message);
}

scalar_t parseNumber(const std::string& name, int line, const std::string& token) {
  if (token == "inf") return std::numeric_limits<scalar_t>::infinity();
  std::size_t used = 0;
  scalar_t value = 0.0;
  try {
    value = std::stod(token, &used);
  } catch (const std::exception&) {
    fail(name, line, "expected a number, got '" + token + "'");
  }
  if (used != token.size()) fail(name, line, "expected a number, got '" + token + "'");
  return value;
}

bool knownGains(const std::string& profile) {
  return profile == "biped-sim" || profile == "quad-sim" || profile == "quad-exp";
}

}  // namespace

Scenario parseScenarioText(const std::string& text, const std::string& name) {
  Scenario s;
  s.name = name;

  std::set<std::string> seen;
  auto once = [&](const std::string& key, int line) {
    if (!seen.insert(key).second) fail(name, line, "duplicate key '" + key + "'");
  };

  std::istringstream stream(text);
  std::string rawLine;
  int lineNo = 0;
  bool hasDuration = false;
  while (std::getline(stream, rawLine)) {
    ++lineNo;
    const std::size_t hash = rawLine.find('#');
    if (hash != std::string::npos) rawLine.erase(hash);
    std::istringstream words(rawLine);
    std::vector<std::string> tok;
    for (std::string w; words >> w;) tok.push_back(w);
    if (tok.empty()) continue;

    const std::string& key = tok[0];
    const int args = static_cast<int>(tok.size()) - 1;
    auto num = [&](int i) { return parseNumber(name, lineNo, tok[static_cast<size_t>(i)]); };

    if (key == "robot" || key == "gait" || key == "variant" || key == "gains" || key == "out") {
      if (args != 1) fail(name, lineNo, key + " takes one value");
      once(key, lineNo);
      if (key == "robot") s.robot = tok[1];
      else if (key == "gait") s.gait = tok[1];
      else if (key == "variant") s.variant = tok[1];
      else if (key == "gains") s.gains = tok[1];
      else s.outDir = tok[1];
    } else if (key == "duration" || key == "cycle" || key == "vx" || key == "vy" ||
               key == "yawrate" || key == "height" || key == "mpc_horizon") {
      if (args != 1) fail(name, lineNo, key + " takes one value");
      once(key, lineNo);
      const scalar_t v = num(1);
      if (key == "duration") { s.duration = v; hasDuration = true; }
      else if (key == "cycle") s.cycleDuration = v;
      else if (key == "vx") s.command.vx = v;
      else if (key == "vy") s.command.vy = v;
      else if (key == "yawrate") s.command.yawRate = v;
      else if (key == "height") s.command.height = v;
      else s.mpcHorizon = v;
    } else if (key == "mpc_nodes") {
      if (args != 1) fail(name, lineNo, "mpc_nodes takes one value");
      once(key, lineNo);
      s.mpcNodes = static_cast<int>(num(1));
    } else if (key == "payload") {
      if (args != 1 && args != 2) fail(name, lineNo, "payload takes mass [body]");
      once(key, lineNo);
      s.disturbance.payload.mass = num(1);
      if (args == 2) s.disturbance.payload.body = tok[2];
      if (s.disturbance.payload.mass < 0.0) fail(name, lineNo, "payload mass must be >= 0");
    } else if (key == "wrench") {
      if (args != 8) fail(name, lineNo, "wrench takes fx fy fz tx ty tz start stop");
      WrenchSpec w;
      for (int i = 0; i < 6; ++i) w.wrench(i) = num(1 + i);
      w.start = num(7);
      w.stop = num(8);
      if (w.start < 0.0 || w.stop <= w.start) fail(name, lineNo, "wrench window must satisfy 0 <= start < stop");
      s.disturbance.wrenches.push_back(w);
    } else if (key == "torque_scale") {
      if (args != 4) fail(name, lineNo, "torque_scale takes joint scale start stop");
      TorqueScaleSpec t;
      t.joint = tok[1];
      t.scale = num(2);
      t.start = num(3);
      t.stop = num(4);
      if (t.scale < 0.0 || t.scale > 1.0) fail(name, lineNo, "torque scale must lie in [0, 1]");
      if (t.start < 0.0 || t.stop <= t.start) fail(name, lineNo, "torque_scale window must satisfy 0 <= start < stop");
      s.disturbance.torqueScales.push_back(t);
    } else {
      fail(name, lineNo, "unknown key '" + key + "'");
    }
  }

  if (s.robot.empty()) fail(name, lineNo, "missing required key 'robot'");
  if (!isBuiltinModel(s.robot)) fail(name, lineNo, "unknown robot profile '" + s.robot + "'");
  if (s.gait.empty()) fail(name, lineNo, "missing required key 'gait'");
  if (!hasDuration || s.duration <= 0.0) fail(name, lineNo, "duration must be given and > 0");
  if (s.variant != "wbdrc" && s.variant != "standard") {
    fail(name, lineNo, "variant must be wbdrc or standard, got '" + s.variant + "'");
  }
  if (!s.gains.empty() && !knownGains(s.gains)) {
    fail(name, lineNo, "unknown gains profile '" + s.gains + "'");
  }
  if (s.cycleDuration < 0.0) fail(name, lineNo, "cycle must be >= 0");
  if (s.mpcHorizon < 0.0) fail(name, lineNo, "mpc_horizon must be >= 0");
  if (s.mpcNodes != 0 && s.mpcNodes < 2) fail(name, lineNo, "mpc_nodes must be 0 or >= 2");
  return s;
}

Scenario loadScenarioFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open scenario file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parseScenarioText(buffer.str(), std::filesystem::path(path).stem().string());
}

std::string gainsProfileFor(const Scenario& scenario) {
  if (!scenario.gains.empty()) return scenario.gains;
  if (scenario.robot == "quad12") return "quad-sim";
  return "biped-sim";
}

}  // namespace wbdrc
