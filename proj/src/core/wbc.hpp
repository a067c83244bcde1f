// Low-level disturbance-rejection layer: assembles the desired generalized
// wrench from the reference and the filtered disturbance estimate, spreads it
// over the stance feet with a friction-constrained QP, then solves a
// strict-priority whole-body program for accelerations, contact forces, and
// torques, finishing with a PD torque law clamped to actuator limits.
#pragma once

#include <string>
#include <vector>

#include "core/error.hpp"
#include "core/robot_model.hpp"
#include "core/types.hpp"

namespace wbdrc {

// Linear inner approximation of the Coulomb cone for stacked 3D forces,
// expressed as C_f F <= 0: per contact +-F_x <= mu F_z, +-F_y <= mu F_z,
// and F_z >= 0 (five rows). Throws ConfigError for mu <= 0.
matrix_t frictionPyramid(scalar_t mu, Eigen::Index numContacts);

struct WbcSetup {
  scalar_t mu = 0.7;         // friction coefficient of the pyramid
  scalar_t grfWeight = 100.0;  // Q1 = grfWeight * I on the force deviation; Q2 = I on the wrench
  vector_t torqueLimit;      // n, symmetric per-joint bound, N m
  vector_t kp;               // n, joint PD position gain
  vector_t kd;               // n, joint PD velocity gain
};

// Named gain sets: "biped-sim", "quad-sim", "quad-exp".
WbcSetup wbcSetupForProfile(const RobotModel& model, const std::string& profile);

// W_d = fhat + J(q_ref)' F_ref + S' tau_ref: the generalized wrench that the
// stance forces and actuator torques must realize together.
vector_t desiredWrench(const RobotModel& model, const vector_t& fhatFilter, const vector_t& qRef,
                       const vector_t& Fref, const std::vector<int>& stanceIds,
                       const vector_t& tauRef);

struct WrenchCommand {
  vector_t desiredW;  // W_d
  vector_t Fr;        // redistributed stance forces, 3 per stance contact
  vector_t tauR;      // companion torque from the redistribution QP
  vector_t fhatW;     // disturbance wrench rewritten about Fr
};

// min over (F_r, tau_r) of 1/2 |F_r - F_ref|^2_Q1 + 1/2 |J' F_r + S' tau_r - W_d|^2
// subject to the friction pyramid on F_r, with W_d built from the arguments.
// The rewrite fhatW = fhat - J(q_ref)' (F_r - F_ref) keeps
// W_d = J(q_ref)' Fr + S' tauRef + fhatW an identity. Throws Infeasible when
// the stance set is empty.
WrenchCommand redistributeGrf(const RobotModel& model, const WbcSetup& setup,
                              const vector_t& fhatFilter, const vector_t& qRef,
                              const vector_t& Fref, const std::vector<int>& stanceIds,
                              const vector_t& tauRef);

struct WbcSolution {
  vector_t qdd;        // nv
  vector_t Fd;         // 3 per model contact frame; swing blocks exactly zero
  vector_t tau;        // n
  vector_t residuals;  // per-priority equality residual norms, size 3
};

// Strict-priority whole-body program at the measured state.
//   1  dynamics D qdd + C qd + G = S' tau + J' Fd + fhatW, zero swing force,
//      friction pyramid on stance forces, torque limits (hard)
//   2  qdd = qddRef
//   3  stance feet keep zero acceleration and Fd tracks Fr
// Throws Infeasible when level 1 has no solution.
WbcSolution solveWbc(const RobotModel& model, const WbcSetup& setup, const vector_t& q,
                     const vector_t& qd, const std::vector<int>& stanceIds,
                     const vector_t& qddRef, const vector_t& Fr, const vector_t& fhatW);

// u = tau + Kp (qjRef - qj) + Kd (qdjRef - qdj), clamped to the torque limits.
vector_t jointTorqueCommand(const WbcSetup& setup, const vector_t& tau, const vector_t& qjRef,
                            const vector_t& qdjRef, const vector_t& qj, const vector_t& qdj);

}  // namespace wbdrc
