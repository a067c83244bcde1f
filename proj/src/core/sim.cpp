#include "core/sim.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace wbdrc {

namespace {

// Baumgarte stabilization of the pin constraints: unit damping ratio at
// omega = 100 rad/s, i.e. J qdd + Jdot qd + 2*omega*cdot + omega^2*c = 0.
constexpr scalar_t kBaumgarteOmega = 100.0;
constexpr scalar_t kRankThreshold = 1e-8;
constexpr int kMaxWarnings = 20;

}  // namespace

RobotModel applyPayload(const RobotModel& model, const PayloadSpec& payload) {
  if (payload.mass < 0.0) {
    throw Error(ErrorCode::ConfigError, "payload mass must be non-negative");
  }
  if (payload.mass == 0.0) return model;
  const int bodyIdx = model.bodyIndex(payload.body);  // throws UnknownLink
  std::vector<Body> bodies = model.bodies();
  bodies[static_cast<size_t>(bodyIdx)].mass += payload.mass;
  return RobotModel::build(model.name(), model.joints(), std::move(bodies), model.contacts());
}

vector_t wrenchGeneralizedForce(const RobotModel& model, const DisturbanceSpec& disturbance,
                                scalar_t t) {
  vector_t d = vector_t::Zero(model.nv());
  vector6_t w = vector6_t::Zero();
  bool any = false;
  for (const WrenchSpec& spec : disturbance.wrenches) {
    if (t >= spec.start && t < spec.stop) {
      w += spec.wrench;
      any = true;
    }
  }
  if (!any) return d;
  for (Eigen::Index i = 0; i < model.nb(); ++i) {
    switch (model.joints()[static_cast<size_t>(i)].type) {
      case JointType::PX: d(i) = w(0); break;
      case JointType::PY: d(i) = w(1); break;
      case JointType::PZ: d(i) = w(2); break;
      case JointType::RX: d(i) = w(3); break;
      case JointType::RY: d(i) = w(4); break;
      case JointType::RZ: d(i) = w(5); break;
    }
  }
  return d;
}

Simulator::Simulator(RobotModel model, std::vector<std::vector<int>> legContacts,
                     ContactSchedule schedule, DisturbanceSpec disturbance, scalar_t dt,
                     int substeps)
    : model_(applyPayload(model, disturbance.payload)),
      legContacts_(std::move(legContacts)),
      schedule_(std::move(schedule)),
      disturbance_(std::move(disturbance)),
      dt_(dt),
      substeps_(substeps) {
  if (dt_ <= 0.0 || substeps_ < 1) {
    throw Error(ErrorCode::ConfigError, "simulator needs dt > 0 and at least one substep");
  }
  if (static_cast<int>(legContacts_.size()) != schedule_.numLegs) {
    throw Error(ErrorCode::ConfigError, "leg count of schedule and contact grouping disagree");
  }
  std::vector<bool> seen(static_cast<size_t>(model_.numContacts()), false);
  for (const std::vector<int>& leg : legContacts_) {
    for (int id : leg) {
      if (id < 0 || id >= model_.numContacts() || seen[static_cast<size_t>(id)]) {
        throw Error(ErrorCode::ConfigError, "leg contact grouping is not a partition");
      }
      seen[static_cast<size_t>(id)] = true;
    }
  }
  for (const TorqueScaleSpec& spec : disturbance_.torqueScales) {
    if (spec.scale < 0.0 || spec.scale > 1.0) {
      throw Error(ErrorCode::ConfigError, "torque scale factor must lie in [0, 1]");
    }
    bool found = false;
    for (size_t j = static_cast<size_t>(model_.nb()); j < model_.joints().size(); ++j) {
      if (model_.joints()[j].name == spec.joint) found = true;
    }
    if (!found) {
      throw Error(ErrorCode::ConfigError, "torque scale names unknown joint '" + spec.joint + "'");
    }
  }
  for (const WrenchSpec& spec : disturbance_.wrenches) {
    if (!spec.wrench.allFinite() || spec.stop < spec.start) {
      throw Error(ErrorCode::ConfigError, "wrench spec is not finite or has a reversed window");
    }
  }
  state_.state.q = vector_t::Zero(model_.nv());
  state_.state.qd = vector_t::Zero(model_.nv());
  state_.contactForces = vector_t::Zero(3 * model_.numContacts());
  prevFlags_.assign(static_cast<size_t>(model_.numContacts()), 0);
  anchors_.assign(static_cast<size_t>(model_.numContacts()), vector3_t::Zero());
}

void Simulator::reset(const vector_t& q, const vector_t& qd) {
  FullState st{q, qd};
  model_.validateState(st);
  state_.state = std::move(st);
  state_.contactForces.setZero();
  state_.time = 0.0;
  std::fill(prevFlags_.begin(), prevFlags_.end(), 0);
  lastResidual_ = 0.0;
}

vector_t Simulator::appliedTorque(const vector_t& actuatedTorque, scalar_t t) const {
  if (actuatedTorque.size() != model_.n()) {
    throw Error(ErrorCode::InvalidArgument, "actuated torque has wrong dimension");
  }
  vector_t u = actuatedTorque;
  for (const TorqueScaleSpec& spec : disturbance_.torqueScales) {
    if (t < spec.start || t >= spec.stop) continue;
    for (size_t j = static_cast<size_t>(model_.nb()); j < model_.joints().size(); ++j) {
      if (model_.joints()[j].name == spec.joint) {
        u(static_cast<Eigen::Index>(j) - model_.nb()) *= spec.scale;
      }
    }
  }
  return u;
}

std::vector<int> Simulator::contactFlags(scalar_t t) const {
  const std::vector<int> legFlags = schedule_.contactState(t);
  std::vector<int> flags(static_cast<size_t>(model_.numContacts()), 0);
  for (size_t leg = 0; leg < legContacts_.size(); ++leg) {
    for (int id : legContacts_[leg]) flags[static_cast<size_t>(id)] = legFlags[leg];
  }
  return flags;
}

const vector3_t& Simulator::anchor(int contactId) const {
  if (contactId < 0 || contactId >= model_.numContacts()) {
    throw Error(ErrorCode::InvalidArgument, "contact id out of range");
  }
  return anchors_[static_cast<size_t>(contactId)];
}

void Simulator::warn(const std::string& message) {
  if (static_cast<int>(warnings_.size()) < kMaxWarnings) warnings_.push_back(message);
}

void Simulator::step(const vector_t& actuatedTorque) {
  const scalar_t h = dt_ / substeps_;
  for (int s = 0; s < substeps_; ++s) substep(actuatedTorque, h);
  if (!state_.state.q.allFinite() || !state_.state.qd.allFinite()) {
    throw Error(ErrorCode::ControllerFault, "simulation state is no longer finite");
  }
}

void Simulator::substep(const vector_t& actuatedTorque, scalar_t h) {
  const scalar_t t = state_.time;
  vector_t& q = state_.state.q;
  vector_t& qd = state_.state.qd;

  const std::vector<int> flags = contactFlags(t);
  std::vector<int> active;
  for (int id = 0; id < model_.numContacts(); ++id) {
    const size_t k = static_cast<size_t>(id);
    if (flags[k] && !prevFlags_[k]) anchors_[k] = model_.contactPosition(q, id);
    if (flags[k]) active.push_back(id);
  }
  prevFlags_ = flags;

  const vector_t u = appliedTorque(actuatedTorque, t);
  const vector_t d = wrenchGeneralizedForce(model_, disturbance_, t);
  const matrix_t D = model_.massMatrix(q);
  const vector_t rhs =
      model_.selectionMatrix().transpose() * u - model_.biasForces(q, qd) + d;

  const Eigen::Index nv = model_.nv();
  vector_t qdd;
  state_.contactForces.setZero();

  if (active.empty()) {
    qdd = D.ldlt().solve(rhs);
    lastResidual_ = 0.0;
  } else {
    const matrix_t J = model_.contactJacobian(q, active);
    const vector_t jdqd = model_.jdotQdot(q, qd, active);
    const Eigen::Index m = J.rows();
    vector_t pinError(m);
    for (size_t k = 0; k < active.size(); ++k) {
      pinError.segment<3>(3 * static_cast<Eigen::Index>(k)) =
          model_.contactPosition(q, active[k]) - anchors_[static_cast<size_t>(active[k])];
    }
    const vector_t constraintRhs = -jdqd - 2.0 * kBaumgarteOmega * (J * qd) -
                                   kBaumgarteOmega * kBaumgarteOmega * pinError;

    // Rigid multi-point feet make J row-deficient; keep an independent subset.
    Eigen::ColPivHouseholderQR<matrix_t> qr(J.transpose());
    qr.setThreshold(kRankThreshold);
    const Eigen::Index rank = qr.rank();
    std::vector<Eigen::Index> keep(static_cast<size_t>(rank));
    for (Eigen::Index k = 0; k < rank; ++k) {
      keep[static_cast<size_t>(k)] = qr.colsPermutation().indices()(k);
    }
    std::sort(keep.begin(), keep.end());
    if (rank < m) {
      droppedRows_ += static_cast<int>(m - rank);
      if (droppedRows_ == static_cast<int>(m - rank)) {
        warn("dependent contact constraint rows dropped (redundant foot points)");
      }
    }

    matrix_t Jr(rank, nv);
    vector_t rhsR(rank);
    for (Eigen::Index k = 0; k < rank; ++k) {
      Jr.row(k) = J.row(keep[static_cast<size_t>(k)]);
      rhsR(k) = constraintRhs(keep[static_cast<size_t>(k)]);
    }

    matrix_t kkt = matrix_t::Zero(nv + rank, nv + rank);
    kkt.topLeftCorner(nv, nv) = D;
    kkt.topRightCorner(nv, rank) = -Jr.transpose();
    kkt.bottomLeftCorner(rank, nv) = Jr;
    vector_t kktRhs(nv + rank);
    kktRhs << rhs, rhsR;

    Eigen::FullPivLU<matrix_t> lu(kkt);
    if (!lu.isInvertible()) {
      throw Error(ErrorCode::SingularKKT, "contact KKT system is singular");
    }
    const vector_t sol = lu.solve(kktRhs);
    qdd = sol.head(nv);
    const vector_t forces = sol.tail(rank);
    lastResidual_ = (Jr * qdd - rhsR).norm();

    for (Eigen::Index k = 0; k < rank; ++k) {
      const Eigen::Index row = keep[static_cast<size_t>(k)];
      const int contactId = active[static_cast<size_t>(row / 3)];
      state_.contactForces(3 * contactId + row % 3) = forces(k);
    }
    for (size_t leg = 0; leg < legContacts_.size(); ++leg) {
      scalar_t legFz = 0.0;
      bool legActive = false;
      for (int id : legContacts_[leg]) {
        if (!flags[static_cast<size_t>(id)]) continue;
        legActive = true;
        legFz += state_.contactForces(3 * id + 2);
      }
      if (legActive && legFz < -1e-9) {
        ++unilateralViolations_;
        if (unilateralViolations_ == 1) {
          warn("stance leg pulled downward (unilateral contact violated); bilateral pin keeps it");
        }
      }
    }
  }

  qd += h * qdd;
  q += h * qd;
  state_.time += h;
}

}  // namespace wbdrc
