// Floating-base rigid-body dynamics over a tree of single-axis joints.
// The 6-DOF base is a chain of massless connector bodies (px py pz rz ry rx),
// so the base pose is [x, y, z, yaw, pitch, roll] with R = Rz*Ry*Rx and every
// algorithm treats base and joint coordinates uniformly.
#pragma once

#include <string>
#include <vector>

#include "core/error.hpp"
#include "core/types.hpp"

namespace wbdrc {

enum class JointType { PX, PY, PZ, RX, RY, RZ };

bool jointTypeIsPrismatic(JointType type);
vector3_t jointTypeAxis(JointType type);
const char* jointTypeName(JointType type);
JointType jointTypeFromName(const std::string& name);

struct Joint {
  std::string name;
  JointType type = JointType::RY;
  int parentBody = -1;        // -1 = world
  vector3_t offset = vector3_t::Zero();  // joint origin in the parent body frame, m
  scalar_t lo = -1e9, hi = 1e9;          // position limits, rad or m
  bool actuated = false;
};

// Body i is the child of joint i; its frame origin sits on the joint.
struct Body {
  std::string name;
  scalar_t mass = 0.0;                    // kg (0 allowed for connector bodies)
  vector3_t com = vector3_t::Zero();      // COM in body frame, m
  matrix3_t inertia = matrix3_t::Zero();  // about the COM, body frame, kg m^2
};

struct ContactFrame {
  std::string name;
  int body = -1;
  vector3_t offset = vector3_t::Zero();  // point in the body frame, m
};

struct FullState {
  vector_t q;
  vector_t qd;
};

class RobotModel {
 public:
  RobotModel() = default;  // empty shell; populate via build()

  static RobotModel build(std::string name, std::vector<Joint> joints, std::vector<Body> bodies,
                          std::vector<ContactFrame> contacts);

  const std::string& name() const { return name_; }
  Eigen::Index nv() const { return static_cast<Eigen::Index>(joints_.size()); }
  Eigen::Index nb() const { return nb_; }           // unactuated base DOFs
  Eigen::Index n() const { return nv() - nb(); }    // actuated DOFs
  Eigen::Index numContacts() const { return static_cast<Eigen::Index>(contacts_.size()); }
  scalar_t totalMass() const { return totalMass_; }
  scalar_t gravity() const { return gravity_; }

  const std::vector<Joint>& joints() const { return joints_; }
  const std::vector<Body>& bodies() const { return bodies_; }
  const std::vector<ContactFrame>& contacts() const { return contacts_; }

  // Momentum components that can be nonzero for this mechanism: all six for a
  // 3D base, {h_x, h_z, L_y} for a planar px-pz-ry base.
  const std::vector<int>& centroidalRows() const { return centroidalRows_; }

  int contactIndex(const std::string& name) const;  // throws UnknownContactFrame
  int bodyIndex(const std::string& name) const;     // throws UnknownLink

  // Selection matrix S = [0_{n x nb}, I_n].
  matrix_t selectionMatrix() const;

  struct Kinematics {
    std::vector<matrix3_t> R;       // body orientation in world
    std::vector<vector3_t> p;       // body origin in world
    std::vector<vector3_t> axis;    // joint axis in world
    std::vector<vector3_t> anchor;  // joint anchor point in world (revolute screws)
    std::vector<vector3_t> com;     // body COM in world
  };
  Kinematics forwardKinematics(const vector_t& q) const;

  matrix_t massMatrix(const vector_t& q) const;                       // D(q)
  vector_t biasForces(const vector_t& q, const vector_t& qd) const;   // C qd + G
  vector_t gravityVector(const vector_t& q) const;                    // G(q)

  matrix_t contactJacobian(const vector_t& q, const std::vector<int>& contactIds) const;
  vector_t jdotQdot(const vector_t& q, const vector_t& qd, const std::vector<int>& contactIds) const;

  // A(q) with [h; L] = A qd; h about the world axes, L about the COM.
  matrix_t centroidalMomentumMatrix(const vector_t& q) const;

  // D qdd + C qd + G - J' F for the given contact set (F stacked 3D forces).
  vector_t inverseDynamics(const vector_t& q, const vector_t& qd, const vector_t& qdd,
                           const vector_t& F, const std::vector<int>& contactIds) const;

  vector3_t comPosition(const vector_t& q) const;
  vector3_t contactPosition(const vector_t& q, int contactId) const;
  vector3_t contactVelocity(const vector_t& q, const vector_t& qd, int contactId) const;

  scalar_t kineticEnergy(const vector_t& q, const vector_t& qd) const;
  scalar_t potentialEnergy(const vector_t& q) const;

  void validateState(const FullState& state) const;  // finiteness + pitch guard

 private:
  struct VelocityData {
    std::vector<vector3_t> omega;   // body angular velocity
    std::vector<vector3_t> vcom;    // COM linear velocity
    std::vector<vector3_t> alpha;   // angular acceleration at qdd = 0
    std::vector<vector3_t> acom;    // COM acceleration at qdd = 0
    std::vector<vector3_t> vorig;   // body-origin velocity
    std::vector<vector3_t> aorig;   // body-origin acceleration at qdd = 0
  };
  VelocityData velocityPass(const Kinematics& kin, const vector_t& qd) const;

  void checkContactIds(const std::vector<int>& contactIds) const;

  std::string name_;
  std::vector<Joint> joints_;
  std::vector<Body> bodies_;
  std::vector<ContactFrame> contacts_;
  std::vector<int> centroidalRows_;
  Eigen::Index nb_ = 0;
  scalar_t totalMass_ = 0.0;
  scalar_t gravity_ = 9.81;
};

}  // namespace wbdrc
