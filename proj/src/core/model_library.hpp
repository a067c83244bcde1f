// Bundled robot models (planar3, quad12, biped12) and the plain-text model
// file format used to load custom robots.
#pragma once

#include <string>
#include <vector>

#include "core/robot_model.hpp"

namespace wbdrc {

struct ModelInfo {
  RobotModel model;
  vector_t standPose;        // nominal standing configuration
  scalar_t desiredHeight;    // base height at the standing pose, m
  std::vector<std::string> legNames;
  std::vector<std::vector<int>> legContacts;  // contact frame ids per leg
  std::string payloadBody;   // default payload attachment
};

bool isBuiltinModel(const std::string& name);
ModelInfo makeBuiltinModel(const std::string& name);  // throws ConfigError

// Derives ModelInfo for an externally loaded model: legs are contact-name
// prefixes (before the first '_'), the stand pose comes from the scenario.
ModelInfo makeModelInfo(RobotModel model, vector_t standPose, scalar_t desiredHeight,
                        std::string payloadBody);

RobotModel loadModelFile(const std::string& path);
void saveModelFile(const RobotModel& model, const std::string& path);

}  // namespace wbdrc
