// High-level planner: nonlinear MPC over the nominal centroidal dynamics and
// reconstruction of the whole-body references (q, qd, qdd, F, tau) that the
// low-level controller tracks. The planner deliberately has no input channel
// for disturbance estimates; references always come from the nominal model.
#pragma once

#include <string>
#include <vector>

#include "core/error.hpp"
#include "core/gait.hpp"
#include "core/model_library.hpp"
#include "core/robot_model.hpp"
#include "core/types.hpp"

namespace wbdrc {

// Centroidal state x_c = [hL; q] where hL stacks the momentum components that
// can be nonzero for the mechanism (model.centroidalRows(), 6 for a spatial
// base, 3 for a planar one) and q is the full configuration.
// Input u_c = [F; qdj]: stacked 3D forces for the given contact order plus
// actuated joint rates.
vector_t centroidalState(const RobotModel& model, const vector_t& q, const vector_t& qd);

// [hL_dot; qd] with hL_dot = [sum f_i + m g; sum (p_i - c) x f_i] restricted
// to the tracked momentum rows and qd recovered through the momentum matrix:
// qd_base = A_b^-1 (hL - A_j qdj). Throws SingularBaseBlock.
vector_t centroidalDerivative(const RobotModel& model, const vector_t& xc, const vector_t& uc,
                              const std::vector<int>& contactIds);

struct Command {
  scalar_t vx = 0.0;       // m/s
  scalar_t vy = 0.0;       // m/s
  scalar_t yawRate = 0.0;  // rad/s
  scalar_t height = 0.0;   // desired base height, m
};

struct MpcWeights {
  scalar_t momentum = 10.0;      // Q_s on hL
  scalar_t pose = 100.0;         // Q_s on the base pose rows of q
  scalar_t jointPose = 1.0;      // Q_s on the joint rows of q: light, so legs
                                 // bend for swing clearance instead of the
                                 // base climbing away from its height target
  scalar_t input = 1e-3;         // R
  scalar_t terminalScale = 10.0;  // Q_t = terminalScale * Q_s
  scalar_t friction = 100.0;     // hinge weight on pyramid violations
  scalar_t swing = 2e4;          // hinge weight on swing clearance
};

struct MpcSettings {
  scalar_t horizon = 1.0;  // T, s
  int nodes = 30;          // N grid points, spacing T/(N-1)
  MpcWeights weights;
  scalar_t mu = 0.7;            // friction pyramid slope
  scalar_t liftHeight = 0.08;   // swing apex above the ground, m
  int maxIterations = 60;
  scalar_t stepTolerance = 1e-9;    // relative step size declaring convergence
  scalar_t defectTolerance = 1e-6;  // accepted nonlinear defect residual
};

struct MpcSolution {
  scalar_t t0 = 0.0;
  scalar_t dt = 0.0;
  std::vector<vector_t> X;  // N centroidal states
  std::vector<vector_t> U;  // N inputs (the last one pads the grid end)
  int iterations = 0;
  scalar_t defectResidual = 0.0;  // max |x_{i+1} - x_i - f_c dt| over the grid
  scalar_t cost = 0.0;
};

// Sequential quadratic programming on the multiple-shooting transcription:
// hard equalities for the initial condition, the Euler defects, zero swing
// forces, and zero stance-foot velocity; quadratic tracking costs toward the
// command; hinge penalties for friction-pyramid and swing-clearance
// violations. Warm start shifts the previous solution onto the new grid.
// Throws SqpDiverged and Infeasible (stance constraint impossible at node 0).
MpcSolution solveMpc(const ModelInfo& info, const MpcSettings& settings,
                     const ContactSchedule& schedule, const Command& command, scalar_t tNow,
                     const vector_t& q, const vector_t& qd,
                     const MpcSolution* warmStart = nullptr);

struct ReferenceSample {
  vector_t q;
  vector_t qd;
  vector_t qdd;
  vector_t F;    // all model contacts, swing blocks zero
  vector_t tau;
};

// Node arrays over [t0, t0 + (N-1) dt] with linear interpolation between
// nodes; sampling outside the window clamps to the ends.
struct ReferenceTrajectory {
  scalar_t t0 = 0.0;
  scalar_t dt = 0.0;
  std::vector<ReferenceSample> nodes;

  bool empty() const { return nodes.empty(); }
  scalar_t endTime() const;
  ReferenceSample sample(scalar_t t) const;
};

// Whole-body references from the centroidal plan: qd_base through the momentum
// matrix, qdd_j by differentiating the planned joint rates, qdd_base from the
// upper rows of the dynamics, tau from inverse dynamics. Throws SingularD11.
ReferenceTrajectory reconstructReference(const RobotModel& model, const MpcSolution& plan);

}  // namespace wbdrc
