#include "core/wbc.hpp"

#include <algorithm>

#include "core/numsolve.hpp"

namespace wbdrc {

namespace {

void checkStanceIds(const RobotModel& model, const std::vector<int>& stanceIds) {
  std::vector<char> seen(static_cast<size_t>(model.numContacts()), 0);
  for (int id : stanceIds) {
    if (id < 0 || id >= model.numContacts()) {
      throw Error(ErrorCode::InvalidArgument, "stance contact id out of range");
    }
    if (seen[static_cast<size_t>(id)]++) {
      throw Error(ErrorCode::InvalidArgument, "stance contact id repeated");
    }
  }
}

}  // namespace

matrix_t frictionPyramid(scalar_t mu, Eigen::Index numContacts) {
  if (mu <= 0.0) {
    throw Error(ErrorCode::ConfigError, "friction coefficient must be positive");
  }
  if (numContacts < 0) {
    throw Error(ErrorCode::InvalidArgument, "negative contact count");
  }
  matrix_t C = matrix_t::Zero(5 * numContacts, 3 * numContacts);
  for (Eigen::Index c = 0; c < numContacts; ++c) {
    const Eigen::Index r = 5 * c, k = 3 * c;
    C(r + 0, k + 0) = 1.0;
    C(r + 1, k + 0) = -1.0;
    C(r + 2, k + 1) = 1.0;
    C(r + 3, k + 1) = -1.0;
    C.block<4, 1>(r, k + 2).setConstant(-mu);
    C(r + 4, k + 2) = -1.0;
  }
  return C;
}

WbcSetup wbcSetupForProfile(const RobotModel& model, const std::string& profile) {
  WbcSetup setup;
  setup.torqueLimit = vector_t::Constant(model.n(), 33.5);
  if (profile == "biped-sim") {
    setup.kp = vector_t::Constant(model.n(), 15.0);
    setup.kd = vector_t::Constant(model.n(), 0.5);
    setup.grfWeight = 100.0;
  } else if (profile == "quad-sim") {
    setup.kp = vector_t::Zero(model.n());
    setup.kd = vector_t::Constant(model.n(), 3.0);
    setup.grfWeight = 100.0;
  } else if (profile == "quad-exp") {
    setup.kp = vector_t::Zero(model.n());
    setup.kd = vector_t::Constant(model.n(), 3.0);
    setup.grfWeight = 500.0;
  } else {
    throw Error(ErrorCode::ConfigError, "unknown wbc profile '" + profile + "'");
  }
  return setup;
}

vector_t desiredWrench(const RobotModel& model, const vector_t& fhatFilter, const vector_t& qRef,
                       const vector_t& Fref, const std::vector<int>& stanceIds,
                       const vector_t& tauRef) {
  checkStanceIds(model, stanceIds);
  if (fhatFilter.size() != model.nv() || qRef.size() != model.nv() ||
      tauRef.size() != model.n() ||
      Fref.size() != 3 * static_cast<Eigen::Index>(stanceIds.size())) {
    throw Error(ErrorCode::InvalidArgument, "desired wrench input dimensions disagree");
  }
  vector_t W = fhatFilter;
  W.tail(model.n()) += tauRef;
  if (!stanceIds.empty()) {
    W += model.contactJacobian(qRef, stanceIds).transpose() * Fref;
  }
  return W;
}

WrenchCommand redistributeGrf(const RobotModel& model, const WbcSetup& setup,
                              const vector_t& fhatFilter, const vector_t& qRef,
                              const vector_t& Fref, const std::vector<int>& stanceIds,
                              const vector_t& tauRef) {
  if (stanceIds.empty()) {
    throw Error(ErrorCode::Infeasible, "empty stance set leaves no friction pyramid");
  }
  WrenchCommand cmd;
  cmd.desiredW = desiredWrench(model, fhatFilter, qRef, Fref, stanceIds, tauRef);

  const Eigen::Index n = model.n();
  const Eigen::Index ns = static_cast<Eigen::Index>(stanceIds.size());
  const Eigen::Index nf = 3 * ns;
  const matrix_t J = model.contactJacobian(qRef, stanceIds);

  QuadraticProgram qp;
  qp.H.setZero(nf + n, nf + n);
  qp.H.topLeftCorner(nf, nf) = J * J.transpose();
  qp.H.topLeftCorner(nf, nf).diagonal().array() += setup.grfWeight;
  qp.H.topRightCorner(nf, n) = J.rightCols(n);
  qp.H.bottomLeftCorner(n, nf) = qp.H.topRightCorner(nf, n).transpose();
  qp.H.bottomRightCorner(n, n).setIdentity();
  qp.g.setZero(nf + n);
  qp.g.head(nf) = -(setup.grfWeight * Fref + J * cmd.desiredW);
  qp.g.tail(n) = -cmd.desiredW.tail(n);
  qp.Ain.setZero(5 * ns, nf + n);
  qp.Ain.leftCols(nf) = frictionPyramid(setup.mu, ns);
  qp.bin = vector_t::Zero(qp.Ain.rows());
  qp.Aeq.resize(0, nf + n);
  qp.beq.resize(0);

  const vector_t z = solveQp(qp);
  cmd.Fr = z.head(nf);
  cmd.tauR = z.tail(n);
  cmd.fhatW = fhatFilter - J.transpose() * (cmd.Fr - Fref);
  return cmd;
}

WbcSolution solveWbc(const RobotModel& model, const WbcSetup& setup, const vector_t& q,
                     const vector_t& qd, const std::vector<int>& stanceIds,
                     const vector_t& qddRef, const vector_t& Fr, const vector_t& fhatW) {
  checkStanceIds(model, stanceIds);
  const Eigen::Index nv = model.nv(), n = model.n();
  const Eigen::Index ns = static_cast<Eigen::Index>(stanceIds.size());
  if (q.size() != nv || qd.size() != nv || qddRef.size() != nv || fhatW.size() != nv ||
      Fr.size() != 3 * ns || setup.torqueLimit.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "wbc input dimensions disagree");
  }

  // Swing forces are eliminated from the decision vector, so the zero swing
  // wrench constraint holds exactly by construction.
  const Eigen::Index nx = nv + 3 * ns + n;
  const matrix_t Jst = ns > 0 ? model.contactJacobian(q, stanceIds) : matrix_t(0, nv);

  std::vector<Task> stack(3);

  Task& dynamics = stack[0];
  dynamics.A.setZero(nv, nx);
  dynamics.A.leftCols(nv) = model.massMatrix(q);
  dynamics.A.middleCols(nv, 3 * ns) = -Jst.transpose();
  dynamics.A.block(nv - n, nv + 3 * ns, n, n) = -matrix_t::Identity(n, n);
  dynamics.b = fhatW - model.biasForces(q, qd);
  dynamics.C.setZero(5 * ns + 2 * n, nx);
  dynamics.C.block(0, nv, 5 * ns, 3 * ns) = frictionPyramid(setup.mu, ns);
  dynamics.C.block(5 * ns, nv + 3 * ns, n, n) = matrix_t::Identity(n, n);
  dynamics.C.block(5 * ns + n, nv + 3 * ns, n, n) = -matrix_t::Identity(n, n);
  dynamics.d.setZero(5 * ns + 2 * n);
  dynamics.d.segment(5 * ns, n) = setup.torqueLimit;
  dynamics.d.tail(n) = setup.torqueLimit;

  Task& tracking = stack[1];
  tracking.A.setZero(nv, nx);
  tracking.A.leftCols(nv).setIdentity();
  tracking.b = qddRef;

  Task& support = stack[2];
  support.A.setZero(6 * ns, nx);
  support.A.topLeftCorner(3 * ns, nv) = Jst;
  support.A.block(3 * ns, nv, 3 * ns, 3 * ns) = matrix_t::Identity(3 * ns, 3 * ns);
  support.b.setZero(6 * ns);
  if (ns > 0) {
    support.b.head(3 * ns) = -model.jdotQdot(q, qd, stanceIds);
    support.b.tail(3 * ns) = Fr;
  }

  const vector_t x = solveHierarchical(stack);

  WbcSolution sol;
  sol.qdd = x.head(nv);
  sol.Fd = vector_t::Zero(3 * model.numContacts());
  for (Eigen::Index i = 0; i < ns; ++i) {
    sol.Fd.segment(3 * stanceIds[static_cast<size_t>(i)], 3) = x.segment(nv + 3 * i, 3);
  }
  sol.tau = x.tail(n);
  sol.residuals.resize(3);
  for (int k = 0; k < 3; ++k) {
    sol.residuals(k) = (stack[static_cast<size_t>(k)].A * x - stack[static_cast<size_t>(k)].b).norm();
  }
  return sol;
}

vector_t jointTorqueCommand(const WbcSetup& setup, const vector_t& tau, const vector_t& qjRef,
                            const vector_t& qdjRef, const vector_t& qj, const vector_t& qdj) {
  const Eigen::Index n = tau.size();
  if (qjRef.size() != n || qdjRef.size() != n || qj.size() != n || qdj.size() != n ||
      setup.kp.size() != n || setup.kd.size() != n || setup.torqueLimit.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "torque command input dimensions disagree");
  }
  vector_t u = tau + setup.kp.cwiseProduct(qjRef - qj) + setup.kd.cwiseProduct(qdjRef - qdj);
  return u.cwiseMax(-setup.torqueLimit).cwiseMin(setup.torqueLimit);
}

}  // namespace wbdrc
