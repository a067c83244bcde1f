#pragma once

// Shared fixtures for the controller-side test binaries: static-equilibrium
// actuation, a planar pose with the COM over the foot, and simple schedules.

#include <doctest.h>

#include <Eigen/Dense>
#include <vector>

#include "core/gait.hpp"
#include "core/model_library.hpp"
#include "core/types.hpp"

namespace wbdrc::test {

inline ContactSchedule flightSchedule(int numLegs) {
  ContactSchedule sched;
  sched.gaitName = "flight";
  sched.numLegs = numLegs;
  sched.cycleDuration = 1.0;
  sched.stanceDuration = 0.0;
  sched.phaseOffsets = vector_t::Zero(numLegs);
  return sched;
}

inline std::vector<int> allContacts(const RobotModel& model) {
  std::vector<int> ids(static_cast<size_t>(model.numContacts()));
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  return ids;
}

// Static-equilibrium actuation: F from the base rows (least-norm), tau from
// the joint rows of G - J'F.
inline vector_t equilibriumTorque(const RobotModel& model, const vector_t& q,
                                  vector_t* forcesOut = nullptr) {
  const vector_t G = model.gravityVector(q);
  const matrix_t J = model.contactJacobian(q, allContacts(model));
  const matrix_t JbT = J.leftCols(model.nb()).transpose();
  const vector_t F =
      JbT.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(G.head(model.nb()));
  if (forcesOut) *forcesOut = F;
  return (G - J.transpose() * F).tail(model.n());
}

inline vector_t pdTorque(const ModelInfo& info, const vector_t& tauEq, const vector_t& q,
                         const vector_t& qd, scalar_t kp, scalar_t kd) {
  const Eigen::Index n = info.model.n();
  return tauEq + kp * (info.standPose.tail(n) - q.tail(n)) - kd * qd.tail(n);
}

// Bisects the knee angle until the COM sits exactly above the single foot, so
// equilibriumTorque makes the pose a true open-loop fixed point.
inline vector_t planarBalancedPose(const ModelInfo& info) {
  vector_t q = info.standPose;
  auto comMinusFoot = [&](scalar_t knee) {
    q(4) = knee;
    return info.model.comPosition(q).x() - info.model.contactPosition(q, 0).x();
  };
  scalar_t lo = -1.4;
  scalar_t hi = -0.3;
  REQUIRE(comMinusFoot(lo) * comMinusFoot(hi) < 0.0);
  for (int i = 0; i < 200; ++i) {
    const scalar_t mid = 0.5 * (lo + hi);
    (comMinusFoot(lo) * comMinusFoot(mid) <= 0.0 ? hi : lo) = mid;
  }
  q(4) = 0.5 * (lo + hi);
  return q;
}

}  // namespace wbdrc::test
