#include "core/gait.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace wbdrc {

namespace {

scalar_t smoothStep(scalar_t u) { return u * u * (3.0 - 2.0 * u); }
scalar_t smoothStepRate(scalar_t u) { return 6.0 * u * (1.0 - u); }

}  // namespace

scalar_t ContactSchedule::legPhaseSeconds(int leg, scalar_t t) const {
  if (leg < 0 || leg >= numLegs) {
    throw Error(ErrorCode::InvalidArgument, "leg index out of range");
  }
  const scalar_t offsetSeconds = phaseOffsets(leg) * cycleDuration;
  scalar_t local = std::fmod(t - offsetSeconds, cycleDuration);
  if (local < 0.0) local += cycleDuration;
  return local;
}

bool ContactSchedule::inStance(int leg, scalar_t t) const {
  return legPhaseSeconds(leg, t) < stanceDuration;
}

std::vector<int> ContactSchedule::contactState(scalar_t t) const {
  std::vector<int> flags(numLegs);
  for (int leg = 0; leg < numLegs; ++leg) flags[leg] = inStance(leg, t) ? 1 : 0;
  return flags;
}

void ContactSchedule::swingWindow(int leg, scalar_t t, scalar_t& start,
                                  scalar_t& end) const {
  const scalar_t local = legPhaseSeconds(leg, t);
  if (local < stanceDuration) {
    throw Error(ErrorCode::LegInStance,
                "leg " + std::to_string(leg) + " is in stance at t=" + std::to_string(t));
  }
  start = t - (local - stanceDuration);
  end = start + (cycleDuration - stanceDuration);
}

ContactSchedule makeContactSchedule(const std::string& gait, int numLegs,
                                    scalar_t cycleDuration) {
  if (numLegs < 1) {
    throw Error(ErrorCode::ConfigError, "gait needs at least one leg");
  }
  ContactSchedule sched;
  sched.gaitName = gait;
  sched.numLegs = numLegs;
  sched.phaseOffsets = vector_t::Zero(numLegs);

  if (gait == "stand") {
    sched.cycleDuration = cycleDuration > 0.0 ? cycleDuration : 0.7;
    sched.stanceDuration = sched.cycleDuration;
    return sched;
  }
  if (gait == "trot" || gait == "step") {
    sched.cycleDuration = cycleDuration > 0.0 ? cycleDuration : 0.7;
    sched.stanceDuration = 0.5 * sched.cycleDuration;
    if (numLegs == 4) {
      // Diagonal pairs (FL, RR) and (FR, RL) alternate.
      sched.phaseOffsets << 0.0, 0.5, 0.5, 0.0;
    } else if (numLegs == 2) {
      sched.phaseOffsets << 0.0, 0.5;
    } else {
      throw Error(ErrorCode::ConfigError,
                  "gait '" + gait + "' needs 2 or 4 legs, got " + std::to_string(numLegs));
    }
    return sched;
  }
  if (gait == "walk") {
    sched.cycleDuration = cycleDuration > 0.0 ? cycleDuration : 1.4;
    if (numLegs == 4) {
      // One leg swings at a time, lateral sequence with 0.75 duty factor.
      sched.stanceDuration = 0.75 * sched.cycleDuration;
      sched.phaseOffsets << 0.0, 0.5, 0.75, 0.25;
    } else if (numLegs == 2) {
      // 0.6 duty factor leaves double-support windows around each handoff.
      sched.stanceDuration = 0.6 * sched.cycleDuration;
      sched.phaseOffsets << 0.0, 0.5;
    } else {
      throw Error(ErrorCode::ConfigError,
                  "gait 'walk' needs 2 or 4 legs, got " + std::to_string(numLegs));
    }
    return sched;
  }
  throw Error(ErrorCode::ConfigError, "unknown gait '" + gait + "'");
}

SwingSample swingReference(const ContactSchedule& schedule, int leg, scalar_t t,
                           scalar_t liftHeight, const vector3_t& start,
                           const vector3_t& end) {
  scalar_t t0 = 0.0;
  scalar_t t1 = 0.0;
  schedule.swingWindow(leg, t, t0, t1);
  const scalar_t duration = t1 - t0;
  const scalar_t s = std::clamp((t - t0) / duration, 0.0, 1.0);

  SwingSample out;
  const vector3_t delta = end - start;
  out.position = start + delta * smoothStep(s);
  out.velocity = delta * (smoothStepRate(s) / duration);

  // Height rides two back-to-back cubics meeting at the apex with zero rate.
  const scalar_t apexZ = std::max(start.z(), end.z()) + liftHeight;
  if (s < 0.5) {
    const scalar_t u = 2.0 * s;
    out.position.z() = start.z() + (apexZ - start.z()) * smoothStep(u);
    out.velocity.z() = (apexZ - start.z()) * smoothStepRate(u) * 2.0 / duration;
  } else {
    const scalar_t u = 2.0 * s - 1.0;
    out.position.z() = apexZ + (end.z() - apexZ) * smoothStep(u);
    out.velocity.z() = (end.z() - apexZ) * smoothStepRate(u) * 2.0 / duration;
  }
  return out;
}

}  // namespace wbdrc
