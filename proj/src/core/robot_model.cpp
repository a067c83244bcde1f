#include "core/robot_model.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

namespace wbdrc {

namespace {

matrix3_t skew(const vector3_t& v) {
  matrix3_t S;
  S << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return S;
}

matrix3_t axisRotation(JointType type, scalar_t q) {
  switch (type) {
    case JointType::RX: return Eigen::AngleAxisd(q, vector3_t::UnitX()).toRotationMatrix();
    case JointType::RY: return Eigen::AngleAxisd(q, vector3_t::UnitY()).toRotationMatrix();
    case JointType::RZ: return Eigen::AngleAxisd(q, vector3_t::UnitZ()).toRotationMatrix();
    default: return matrix3_t::Identity();
  }
}

}  // namespace

bool jointTypeIsPrismatic(JointType type) {
  return type == JointType::PX || type == JointType::PY || type == JointType::PZ;
}

vector3_t jointTypeAxis(JointType type) {
  switch (type) {
    case JointType::PX:
    case JointType::RX: return vector3_t::UnitX();
    case JointType::PY:
    case JointType::RY: return vector3_t::UnitY();
    default: return vector3_t::UnitZ();
  }
}

const char* jointTypeName(JointType type) {
  switch (type) {
    case JointType::PX: return "px";
    case JointType::PY: return "py";
    case JointType::PZ: return "pz";
    case JointType::RX: return "rx";
    case JointType::RY: return "ry";
    case JointType::RZ: return "rz";
  }
  return "?";
}

JointType jointTypeFromName(const std::string& name) {
  if (name == "px") return JointType::PX;
  if (name == "py") return JointType::PY;
  if (name == "pz") return JointType::PZ;
  if (name == "rx") return JointType::RX;
  if (name == "ry") return JointType::RY;
  if (name == "rz") return JointType::RZ;
  throw Error(ErrorCode::ConfigError, "unknown joint type '" + name + "'");
}

RobotModel RobotModel::build(std::string name, std::vector<Joint> joints, std::vector<Body> bodies,
                             std::vector<ContactFrame> contacts) {
  if (joints.empty() || joints.size() != bodies.size()) {
    throw Error(ErrorCode::ConfigError, "model needs one body per joint");
  }
  for (size_t i = 0; i < joints.size(); ++i) {
    if (joints[i].parentBody >= static_cast<int>(i)) {
      throw Error(ErrorCode::ConfigError, "bodies must be listed parent-first");
    }
    if (bodies[i].mass < 0.0) {
      throw Error(ErrorCode::ConfigError, "negative mass on body '" + bodies[i].name + "'");
    }
    if ((bodies[i].inertia - bodies[i].inertia.transpose()).lpNorm<Eigen::Infinity>() > 1e-9) {
      throw Error(ErrorCode::ConfigError, "asymmetric inertia on body '" + bodies[i].name + "'");
    }
  }
  for (const auto& c : contacts) {
    if (c.body < 0 || c.body >= static_cast<int>(bodies.size())) {
      throw Error(ErrorCode::ConfigError, "contact '" + c.name + "' references a missing body");
    }
  }

  Eigen::Index nb = 0;
  while (nb < static_cast<Eigen::Index>(joints.size()) && !joints[nb].actuated) ++nb;
  for (Eigen::Index i = nb; i < static_cast<Eigen::Index>(joints.size()); ++i) {
    if (!joints[i].actuated) {
      throw Error(ErrorCode::ConfigError, "unactuated joints must form the leading base chain");
    }
  }

  RobotModel model;
  model.nb_ = nb;
  const auto baseIs = [&](std::initializer_list<JointType> pattern) {
    if (nb != static_cast<Eigen::Index>(pattern.size())) return false;
    Eigen::Index i = 0;
    for (JointType t : pattern) {
      if (joints[i++].type != t) return false;
    }
    return true;
  };
  if (baseIs({JointType::PX, JointType::PY, JointType::PZ, JointType::RZ, JointType::RY,
              JointType::RX})) {
    model.centroidalRows_ = {0, 1, 2, 3, 4, 5};
  } else if (baseIs({JointType::PX, JointType::PZ, JointType::RY})) {
    model.centroidalRows_ = {0, 2, 4};
  } else if (nb == 0) {
    model.centroidalRows_ = {};  // welded base
  } else {
    throw Error(ErrorCode::ConfigError, "base chain must be px py pz rz ry rx, px pz ry, or welded");
  }

  model.name_ = std::move(name);
  model.joints_ = std::move(joints);
  model.bodies_ = std::move(bodies);
  model.contacts_ = std::move(contacts);
  model.totalMass_ = 0.0;
  for (const auto& b : model.bodies_) model.totalMass_ += b.mass;
  if (model.totalMass_ <= 0.0) {
    throw Error(ErrorCode::ConfigError, "model has no mass");
  }

  const matrix_t D = model.massMatrix(vector_t::Zero(model.nv()));
  if (Eigen::LLT<matrix_t>(D).info() != Eigen::Success) {
    throw Error(ErrorCode::ConfigError, "mass matrix is not positive definite (massless subtree?)");
  }
  return model;
}

int RobotModel::contactIndex(const std::string& name) const {
  for (size_t i = 0; i < contacts_.size(); ++i) {
    if (contacts_[i].name == name) return static_cast<int>(i);
  }
  throw Error(ErrorCode::UnknownContactFrame, "no contact frame named '" + name + "'");
}

int RobotModel::bodyIndex(const std::string& name) const {
  for (size_t i = 0; i < bodies_.size(); ++i) {
    if (bodies_[i].name == name) return static_cast<int>(i);
  }
  throw Error(ErrorCode::UnknownLink, "no body named '" + name + "'");
}

matrix_t RobotModel::selectionMatrix() const {
  matrix_t S = matrix_t::Zero(n(), nv());
  S.rightCols(n()) = matrix_t::Identity(n(), n());
  return S;
}

RobotModel::Kinematics RobotModel::forwardKinematics(const vector_t& q) const {
  const size_t N = joints_.size();
  Kinematics kin;
  kin.R.resize(N);
  kin.p.resize(N);
  kin.axis.resize(N);
  kin.anchor.resize(N);
  kin.com.resize(N);
  for (size_t i = 0; i < N; ++i) {
    const Joint& j = joints_[i];
    const matrix3_t Rp = j.parentBody < 0 ? matrix3_t::Identity() : kin.R[j.parentBody];
    const vector3_t pp = j.parentBody < 0 ? vector3_t::Zero() : kin.p[j.parentBody];
    kin.axis[i] = Rp * jointTypeAxis(j.type);
    kin.anchor[i] = pp + Rp * j.offset;
    if (jointTypeIsPrismatic(j.type)) {
      kin.R[i] = Rp;
      kin.p[i] = kin.anchor[i] + kin.axis[i] * q(static_cast<Eigen::Index>(i));
    } else {
      kin.R[i] = Rp * axisRotation(j.type, q(static_cast<Eigen::Index>(i)));
      kin.p[i] = kin.anchor[i];
    }
    kin.com[i] = kin.p[i] + kin.R[i] * bodies_[i].com;
  }
  return kin;
}

matrix_t RobotModel::massMatrix(const vector_t& q) const {
  const Kinematics kin = forwardKinematics(q);
  const Eigen::Index N = nv();

  // 6x6 spatial inertia of each body about the world origin, then composite
  // over subtrees (bodies are parent-first, so a reverse sweep accumulates).
  using matrix6_t = Eigen::Matrix<scalar_t, 6, 6>;
  using vector6 = Eigen::Matrix<scalar_t, 6, 1>;
  std::vector<matrix6_t> Ic(static_cast<size_t>(N), matrix6_t::Zero());
  for (Eigen::Index i = 0; i < N; ++i) {
    const Body& b = bodies_[static_cast<size_t>(i)];
    if (b.mass == 0.0 && b.inertia.isZero(0.0)) continue;
    const matrix3_t Iw = kin.R[i] * b.inertia * kin.R[i].transpose();
    const matrix3_t Sc = skew(kin.com[i]);
    matrix6_t I6;
    I6.topLeftCorner<3, 3>() = Iw - b.mass * Sc * Sc;
    I6.topRightCorner<3, 3>() = b.mass * Sc;
    I6.bottomLeftCorner<3, 3>() = -b.mass * Sc;
    I6.bottomRightCorner<3, 3>() = b.mass * matrix3_t::Identity();
    Ic[static_cast<size_t>(i)] += I6;
  }
  for (Eigen::Index i = N - 1; i > 0; --i) {
    const int parent = joints_[static_cast<size_t>(i)].parentBody;
    if (parent >= 0) Ic[static_cast<size_t>(parent)] += Ic[static_cast<size_t>(i)];
  }

  auto screw = [&](Eigen::Index i) {
    vector6 s;
    if (jointTypeIsPrismatic(joints_[static_cast<size_t>(i)].type)) {
      s << vector3_t::Zero(), kin.axis[i];
    } else {
      s << kin.axis[i], kin.anchor[i].cross(kin.axis[i]);
    }
    return s;
  };

  matrix_t D = matrix_t::Zero(N, N);
  for (Eigen::Index j = 0; j < N; ++j) {
    const vector6 f = Ic[static_cast<size_t>(j)] * screw(j);
    for (int i = static_cast<int>(j); i >= 0; i = joints_[static_cast<size_t>(i)].parentBody) {
      const scalar_t dij = screw(i).dot(f);
      D(i, j) = dij;
      D(j, i) = dij;
    }
  }
  return D;
}

RobotModel::VelocityData RobotModel::velocityPass(const Kinematics& kin, const vector_t& qd) const {
  const size_t N = joints_.size();
  VelocityData vel;
  vel.omega.resize(N);
  vel.vcom.resize(N);
  vel.alpha.resize(N);
  vel.acom.resize(N);
  vel.vorig.resize(N);
  vel.aorig.resize(N);
  for (size_t i = 0; i < N; ++i) {
    const Joint& j = joints_[i];
    const vector3_t wp = j.parentBody < 0 ? vector3_t::Zero() : vel.omega[j.parentBody];
    const vector3_t vp = j.parentBody < 0 ? vector3_t::Zero() : vel.vorig[j.parentBody];
    const vector3_t ap = j.parentBody < 0 ? vector3_t::Zero() : vel.alpha[j.parentBody];
    const vector3_t aop = j.parentBody < 0 ? vector3_t::Zero() : vel.aorig[j.parentBody];
    const vector3_t pp = j.parentBody < 0 ? vector3_t::Zero() : kin.p[j.parentBody];
    const vector3_t r = kin.p[i] - pp;
    const scalar_t qdi = qd(static_cast<Eigen::Index>(i));

    if (jointTypeIsPrismatic(j.type)) {
      const vector3_t vrel = kin.axis[i] * qdi;
      vel.omega[i] = wp;
      vel.alpha[i] = ap;
      vel.vorig[i] = vp + wp.cross(r) + vrel;
      vel.aorig[i] = aop + ap.cross(r) + wp.cross(wp.cross(r)) + 2.0 * wp.cross(vrel);
    } else {
      vel.omega[i] = wp + kin.axis[i] * qdi;
      vel.alpha[i] = ap + wp.cross(kin.axis[i] * qdi);
      vel.vorig[i] = vp + wp.cross(r);
      vel.aorig[i] = aop + ap.cross(r) + wp.cross(wp.cross(r));
    }
    const vector3_t rc = kin.R[i] * bodies_[i].com;
    vel.vcom[i] = vel.vorig[i] + vel.omega[i].cross(rc);
    vel.acom[i] = vel.aorig[i] + vel.alpha[i].cross(rc) + vel.omega[i].cross(vel.omega[i].cross(rc));
  }
  return vel;
}

vector_t RobotModel::biasForces(const vector_t& q, const vector_t& qd) const {
  const Kinematics kin = forwardKinematics(q);
  const VelocityData vel = velocityPass(kin, qd);
  const Eigen::Index N = nv();

  vector_t bias = vector_t::Zero(N);
  for (Eigen::Index k = 0; k < N; ++k) {
    const Body& b = bodies_[static_cast<size_t>(k)];
    if (b.mass == 0.0 && b.inertia.isZero(0.0)) continue;
    const matrix3_t Iw = kin.R[k] * b.inertia * kin.R[k].transpose();
    const vector3_t f = b.mass * vel.acom[k] + vector3_t(0.0, 0.0, b.mass * gravity_);
    const vector3_t tau = Iw * vel.alpha[k] + vel.omega[k].cross(Iw * vel.omega[k]);
    for (int i = static_cast<int>(k); i >= 0; i = joints_[static_cast<size_t>(i)].parentBody) {
      if (jointTypeIsPrismatic(joints_[static_cast<size_t>(i)].type)) {
        bias(i) += kin.axis[i].dot(f);
      } else {
        bias(i) += kin.axis[i].dot(tau + (kin.com[k] - kin.anchor[i]).cross(f));
      }
    }
  }
  return bias;
}

vector_t RobotModel::gravityVector(const vector_t& q) const {
  return biasForces(q, vector_t::Zero(nv()));
}

void RobotModel::checkContactIds(const std::vector<int>& contactIds) const {
  for (int id : contactIds) {
    if (id < 0 || id >= static_cast<int>(contacts_.size())) {
      throw Error(ErrorCode::UnknownContactFrame, "contact index out of range");
    }
  }
}

matrix_t RobotModel::contactJacobian(const vector_t& q, const std::vector<int>& contactIds) const {
  checkContactIds(contactIds);
  const Kinematics kin = forwardKinematics(q);
  matrix_t J = matrix_t::Zero(3 * static_cast<Eigen::Index>(contactIds.size()), nv());
  for (size_t c = 0; c < contactIds.size(); ++c) {
    const ContactFrame& frame = contacts_[static_cast<size_t>(contactIds[c])];
    const vector3_t x = kin.p[frame.body] + kin.R[frame.body] * frame.offset;
    for (int i = frame.body; i >= 0; i = joints_[static_cast<size_t>(i)].parentBody) {
      const vector3_t col = jointTypeIsPrismatic(joints_[static_cast<size_t>(i)].type)
                                ? kin.axis[i]
                                : vector3_t(kin.axis[i].cross(x - kin.anchor[i]));
      J.block<3, 1>(3 * static_cast<Eigen::Index>(c), i) = col;
    }
  }
  return J;
}

vector_t RobotModel::jdotQdot(const vector_t& q, const vector_t& qd,
                              const std::vector<int>& contactIds) const {
  checkContactIds(contactIds);
  const Kinematics kin = forwardKinematics(q);
  const VelocityData vel = velocityPass(kin, qd);
  vector_t out(3 * static_cast<Eigen::Index>(contactIds.size()));
  for (size_t c = 0; c < contactIds.size(); ++c) {
    const ContactFrame& frame = contacts_[static_cast<size_t>(contactIds[c])];
    const vector3_t r = kin.R[frame.body] * frame.offset;
    const vector3_t a = vel.aorig[frame.body] + vel.alpha[frame.body].cross(r) +
                        vel.omega[frame.body].cross(vel.omega[frame.body].cross(r));
    out.segment<3>(3 * static_cast<Eigen::Index>(c)) = a;
  }
  return out;
}

matrix_t RobotModel::centroidalMomentumMatrix(const vector_t& q) const {
  const Kinematics kin = forwardKinematics(q);
  const Eigen::Index N = nv();

  vector3_t c = vector3_t::Zero();
  for (Eigen::Index k = 0; k < N; ++k) c += bodies_[static_cast<size_t>(k)].mass * kin.com[k];
  c /= totalMass_;

  matrix_t A = matrix_t::Zero(6, N);
  for (Eigen::Index k = 0; k < N; ++k) {
    const Body& b = bodies_[static_cast<size_t>(k)];
    if (b.mass == 0.0 && b.inertia.isZero(0.0)) continue;
    const matrix3_t Iw = kin.R[k] * b.inertia * kin.R[k].transpose();
    for (int i = static_cast<int>(k); i >= 0; i = joints_[static_cast<size_t>(i)].parentBody) {
      if (jointTypeIsPrismatic(joints_[static_cast<size_t>(i)].type)) {
        const vector3_t jv = kin.axis[i];
        A.block<3, 1>(0, i) += b.mass * jv;
        A.block<3, 1>(3, i) += b.mass * (kin.com[k] - c).cross(jv);
      } else {
        const vector3_t jv = kin.axis[i].cross(kin.com[k] - kin.anchor[i]);
        A.block<3, 1>(0, i) += b.mass * jv;
        A.block<3, 1>(3, i) += Iw * kin.axis[i] + b.mass * (kin.com[k] - c).cross(jv);
      }
    }
  }
  return A;
}

vector_t RobotModel::inverseDynamics(const vector_t& q, const vector_t& qd, const vector_t& qdd,
                                     const vector_t& F, const std::vector<int>& contactIds) const {
  vector_t out = massMatrix(q) * qdd + biasForces(q, qd);
  if (!contactIds.empty()) {
    out -= contactJacobian(q, contactIds).transpose() * F;
  }
  return out;
}

vector3_t RobotModel::comPosition(const vector_t& q) const {
  const Kinematics kin = forwardKinematics(q);
  vector3_t c = vector3_t::Zero();
  for (size_t k = 0; k < bodies_.size(); ++k) c += bodies_[k].mass * kin.com[k];
  return c / totalMass_;
}

vector3_t RobotModel::contactPosition(const vector_t& q, int contactId) const {
  checkContactIds({contactId});
  const Kinematics kin = forwardKinematics(q);
  const ContactFrame& frame = contacts_[static_cast<size_t>(contactId)];
  return kin.p[frame.body] + kin.R[frame.body] * frame.offset;
}

vector3_t RobotModel::contactVelocity(const vector_t& q, const vector_t& qd, int contactId) const {
  checkContactIds({contactId});
  const Kinematics kin = forwardKinematics(q);
  const VelocityData vel = velocityPass(kin, qd);
  const ContactFrame& frame = contacts_[static_cast<size_t>(contactId)];
  return vel.vorig[frame.body] + vel.omega[frame.body].cross(kin.R[frame.body] * frame.offset);
}

scalar_t RobotModel::kineticEnergy(const vector_t& q, const vector_t& qd) const {
  const Kinematics kin = forwardKinematics(q);
  const VelocityData vel = velocityPass(kin, qd);
  scalar_t ke = 0.0;
  for (size_t k = 0; k < bodies_.size(); ++k) {
    const Body& b = bodies_[k];
    if (b.mass == 0.0 && b.inertia.isZero(0.0)) continue;
    const matrix3_t Iw = kin.R[k] * b.inertia * kin.R[k].transpose();
    ke += 0.5 * b.mass * vel.vcom[k].squaredNorm() + 0.5 * vel.omega[k].dot(Iw * vel.omega[k]);
  }
  return ke;
}

scalar_t RobotModel::potentialEnergy(const vector_t& q) const {
  const Kinematics kin = forwardKinematics(q);
  scalar_t pe = 0.0;
  for (size_t k = 0; k < bodies_.size(); ++k) {
    pe += bodies_[k].mass * gravity_ * kin.com[k].z();
  }
  return pe;
}

void RobotModel::validateState(const FullState& state) const {
  if (state.q.size() != nv() || state.qd.size() != nv()) {
    throw Error(ErrorCode::InvalidArgument, "state dimension mismatch");
  }
  if (!state.q.allFinite() || !state.qd.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "state has non-finite entries");
  }
  if (nb_ == 6 && std::abs(state.q(4)) > M_PI / 2.0 - 1e-3) {
    throw Error(ErrorCode::InvalidArgument, "base pitch too close to the Euler singularity");
  }
}

}  // namespace wbdrc
