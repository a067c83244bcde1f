#pragma once

#include <limits>
#include <string>
#include <vector>

#include "core/gait.hpp"
#include "core/robot_model.hpp"
#include "core/types.hpp"

namespace wbdrc {

struct PayloadSpec {
  std::string body;     // attachment link; empty = no payload
  scalar_t mass = 0.0;  // kg, point mass added at the link COM
};

// External wrench [fx fy fz taux tauy tauz] acting at the base origin,
// active on [start, stop). Added to the base rows of the generalized forces.
struct WrenchSpec {
  vector6_t wrench = vector6_t::Zero();
  scalar_t start = 0.0;
  scalar_t stop = std::numeric_limits<scalar_t>::infinity();
};

// Multiplicative actuator fault: applied torque of the named joint is scaled
// by `scale` in [0, 1] while t lies in [start, stop).
struct TorqueScaleSpec {
  std::string joint;
  scalar_t scale = 1.0;
  scalar_t start = 0.0;
  scalar_t stop = std::numeric_limits<scalar_t>::infinity();
};

struct DisturbanceSpec {
  PayloadSpec payload;
  std::vector<WrenchSpec> wrenches;
  std::vector<TorqueScaleSpec> torqueScales;
};

struct SimState {
  FullState state;
  vector_t contactForces;  // stacked 3D forces per contact frame, swing rows zero
  scalar_t time = 0.0;
};

// Returns a copy of the model with the payload point mass merged into the
// attachment link (mass grows, COM and inertia about it unchanged).
// Throws UnknownLink when the attachment link does not exist.
RobotModel applyPayload(const RobotModel& model, const PayloadSpec& payload);

// Generalized disturbance force of the wrench specs active at time t:
// base rows receive the wrench components matched by joint type, joint rows 0.
vector_t wrenchGeneralizedForce(const RobotModel& model, const DisturbanceSpec& disturbance,
                                scalar_t t);

// Ground-truth integrator: full dynamics with bilateral (pinned) stance
// contacts driven by the gait schedule, semi-implicit Euler substeps, and
// injected disturbances. Stance pins are Baumgarte-stabilized; redundant
// contact constraint rows (rigid feet with several points) are pruned.
class Simulator {
 public:
  Simulator(RobotModel model, std::vector<std::vector<int>> legContacts,
            ContactSchedule schedule, DisturbanceSpec disturbance, scalar_t dt = 1e-3,
            int substeps = 4);

  void reset(const vector_t& q, const vector_t& qd);

  // Advances one control period dt holding the actuated torque constant.
  void step(const vector_t& actuatedTorque);

  const SimState& simState() const { return state_; }
  const RobotModel& model() const { return model_; }
  const ContactSchedule& schedule() const { return schedule_; }
  scalar_t dt() const { return dt_; }

  // Torque after the fault windows active at time t are applied.
  vector_t appliedTorque(const vector_t& actuatedTorque, scalar_t t) const;

  // Flags per contact frame (not per leg) at time t.
  std::vector<int> contactFlags(scalar_t t) const;

  // Pin anchor of a stance contact; valid only while the contact is active.
  const vector3_t& anchor(int contactId) const;

  // Constraint-equation residual of the last constrained substep.
  scalar_t lastConstraintResidual() const { return lastResidual_; }

  int unilateralViolationCount() const { return unilateralViolations_; }
  int droppedConstraintRowCount() const { return droppedRows_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  void substep(const vector_t& actuatedTorque, scalar_t h);
  void warn(const std::string& message);

  RobotModel model_;
  std::vector<std::vector<int>> legContacts_;
  ContactSchedule schedule_;
  DisturbanceSpec disturbance_;
  scalar_t dt_;
  int substeps_;

  SimState state_;
  std::vector<int> prevFlags_;
  std::vector<vector3_t> anchors_;
  scalar_t lastResidual_ = 0.0;
  int unilateralViolations_ = 0;
  int droppedRows_ = 0;
  std::vector<std::string> warnings_;
};

}  // namespace wbdrc
