#pragma once

#include <string>
#include <vector>

#include "core/types.hpp"

namespace wbdrc {

// Periodic stance/swing schedule. Phase offsets are cycle fractions; a leg is
// in stance while its wrapped local time lies in [0, stanceDuration).
struct ContactSchedule {
  std::string gaitName;
  int numLegs = 0;
  scalar_t cycleDuration = 0.0;
  scalar_t stanceDuration = 0.0;
  vector_t phaseOffsets;  // per leg, in [0, 1)

  // Wrapped local time of a leg, in [0, cycleDuration).
  scalar_t legPhaseSeconds(int leg, scalar_t t) const;
  bool inStance(int leg, scalar_t t) const;
  std::vector<int> contactState(scalar_t t) const;
  // Absolute [start, end) of the swing window containing t. Throws LegInStance.
  void swingWindow(int leg, scalar_t t, scalar_t& start, scalar_t& end) const;
};

// Supported gaits: "stand", "trot", "step" (trot timing), "walk".
// cycleDuration <= 0 picks the gait default (0.7 s trot/step/stand, 1.4 s walk).
ContactSchedule makeContactSchedule(const std::string& gait, int numLegs,
                                    scalar_t cycleDuration = 0.0);

struct SwingSample {
  vector3_t position;
  vector3_t velocity;
};

// Cubic swing profile from start to end. Horizontal motion is a single cubic
// with zero boundary velocity; height runs through an apex at
// max(start.z, end.z) + liftHeight at mid-swing, with zero apex and
// touchdown velocity. Throws LegInStance when the leg is not swinging at t.
SwingSample swingReference(const ContactSchedule& schedule, int leg, scalar_t t,
                           scalar_t liftHeight, const vector3_t& start,
                           const vector3_t& end);

}  // namespace wbdrc
