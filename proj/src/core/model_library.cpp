#include "core/model_library.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace wbdrc {

namespace {

matrix3_t diagInertia(scalar_t xx, scalar_t yy, scalar_t zz) {
  matrix3_t I = matrix3_t::Zero();
  I(0, 0) = xx;
  I(1, 1) = yy;
  I(2, 2) = zz;
  return I;
}

void appendBase3d(std::vector<Joint>& joints, std::vector<Body>& bodies, const Body& trunk) {
  const JointType chain[6] = {JointType::PX, JointType::PY, JointType::PZ,
                              JointType::RZ, JointType::RY, JointType::RX};
  const char* names[6] = {"base_px", "base_py", "base_pz", "base_rz", "base_ry", "base_rx"};
  for (int i = 0; i < 6; ++i) {
    Joint j;
    j.name = names[i];
    j.type = chain[i];
    j.parentBody = static_cast<int>(joints.size()) - 1;
    j.actuated = false;
    joints.push_back(j);
    Body b;
    b.name = i < 5 ? names[i] : trunk.name.c_str();
    if (i == 5) b = trunk;
    bodies.push_back(b);
  }
}

void appendBase2d(std::vector<Joint>& joints, std::vector<Body>& bodies, const Body& trunk) {
  const JointType chain[3] = {JointType::PX, JointType::PZ, JointType::RY};
  const char* names[3] = {"base_px", "base_pz", "base_ry"};
  for (int i = 0; i < 3; ++i) {
    Joint j;
    j.name = names[i];
    j.type = chain[i];
    j.parentBody = static_cast<int>(joints.size()) - 1;
    j.actuated = false;
    joints.push_back(j);
    Body b;
    b.name = names[i];
    if (i == 2) b = trunk;
    bodies.push_back(b);
  }
}

ModelInfo makePlanar3() {
  std::vector<Joint> joints;
  std::vector<Body> bodies;
  std::vector<ContactFrame> contacts;

  Body trunk;
  trunk.name = "trunk";
  trunk.mass = 5.0;
  trunk.inertia = diagInertia(0.02, 0.05, 0.02);
  appendBase2d(joints, bodies, trunk);

  Joint hip;
  hip.name = "hip";
  hip.type = JointType::RY;
  hip.parentBody = 2;
  hip.offset = vector3_t(0.0, 0.0, -0.05);
  hip.lo = -2.6;
  hip.hi = 2.6;
  hip.actuated = true;
  joints.push_back(hip);
  Body thigh;
  thigh.name = "thigh";
  thigh.mass = 0.5;
  thigh.com = vector3_t(0.0, 0.0, -0.1);
  thigh.inertia = diagInertia(0.002, 0.002, 0.0005);
  bodies.push_back(thigh);

  Joint knee;
  knee.name = "knee";
  knee.type = JointType::RY;
  knee.parentBody = 3;
  knee.offset = vector3_t(0.0, 0.0, -0.2);
  knee.lo = -2.6;
  knee.hi = 2.6;
  knee.actuated = true;
  joints.push_back(knee);
  Body shank;
  shank.name = "shank";
  shank.mass = 0.3;
  shank.com = vector3_t(0.0, 0.0, -0.1);
  shank.inertia = diagInertia(0.0012, 0.0012, 0.0003);
  bodies.push_back(shank);

  contacts.push_back({"foot_pt", 4, vector3_t(0.0, 0.0, -0.2)});

  ModelInfo info;
  info.model = RobotModel::build("planar3", std::move(joints), std::move(bodies), std::move(contacts));
  // A point foot balances only with the COM exactly above it; bisect the knee
  // angle so gravity has no moment about the contact, then set the base height
  // that puts the foot on the ground.
  vector_t pose = vector_t::Zero(5);
  pose(3) = 0.4;
  auto comMinusFoot = [&](scalar_t knee) {
    pose(4) = knee;
    return info.model.comPosition(pose).x() - info.model.contactPosition(pose, 0).x();
  };
  scalar_t lo = -1.4;
  scalar_t hi = -0.3;
  for (int i = 0; i < 200; ++i) {
    const scalar_t mid = 0.5 * (lo + hi);
    (comMinusFoot(lo) * comMinusFoot(mid) <= 0.0 ? hi : lo) = mid;
  }
  pose(4) = 0.5 * (lo + hi);
  pose(1) = -info.model.contactPosition(pose, 0).z();
  info.standPose = pose;
  info.desiredHeight = pose(1);
  info.legNames = {"foot"};
  info.legContacts = {{0}};
  info.payloadBody = "trunk";
  return info;
}

ModelInfo makeQuad12() {
  std::vector<Joint> joints;
  std::vector<Body> bodies;
  std::vector<ContactFrame> contacts;

  Body trunk;
  trunk.name = "trunk";
  trunk.mass = 7.3;
  trunk.inertia = diagInertia(0.0293, 0.0862, 0.1008);
  appendBase3d(joints, bodies, trunk);

  const char* legs[4] = {"FL", "FR", "RL", "RR"};
  const scalar_t sx[4] = {1.0, 1.0, -1.0, -1.0};
  const scalar_t sy[4] = {1.0, -1.0, 1.0, -1.0};
  for (int l = 0; l < 4; ++l) {
    const std::string leg = legs[l];
    const int trunkIdx = 5;

    Joint hx;
    hx.name = leg + "_hx";
    hx.type = JointType::RX;
    hx.parentBody = trunkIdx;
    hx.offset = vector3_t(0.18 * sx[l], 0.11 * sy[l], 0.0);
    hx.lo = -0.8;
    hx.hi = 0.8;
    hx.actuated = true;
    joints.push_back(hx);
    Body hip;
    hip.name = leg + "_hip";
    hip.mass = 0.6;
    hip.com = vector3_t(0.0, 0.03 * sy[l], 0.0);
    hip.inertia = diagInertia(5e-4, 5e-4, 5e-4);
    bodies.push_back(hip);

    Joint hy;
    hy.name = leg + "_hy";
    hy.type = JointType::RY;
    hy.parentBody = static_cast<int>(bodies.size()) - 1;
    hy.offset = vector3_t(0.0, 0.06 * sy[l], 0.0);
    hy.lo = -2.6;
    hy.hi = 2.6;
    hy.actuated = true;
    joints.push_back(hy);
    Body thigh;
    thigh.name = leg + "_thigh";
    thigh.mass = 0.7;
    thigh.com = vector3_t(0.0, 0.0, -0.105);
    thigh.inertia = diagInertia(2.6e-3, 2.6e-3, 5e-4);
    bodies.push_back(thigh);

    Joint kn;
    kn.name = leg + "_kn";
    kn.type = JointType::RY;
    kn.parentBody = static_cast<int>(bodies.size()) - 1;
    kn.offset = vector3_t(0.0, 0.0, -0.21);
    kn.lo = -2.7;
    kn.hi = 2.7;
    kn.actuated = true;
    joints.push_back(kn);
    Body shank;
    shank.name = leg + "_shank";
    shank.mass = 0.2;
    shank.com = vector3_t(0.0, 0.0, -0.105);
    shank.inertia = diagInertia(7.4e-4, 7.4e-4, 1e-4);
    bodies.push_back(shank);

    contacts.push_back({leg + "_foot", static_cast<int>(bodies.size()) - 1,
                        vector3_t(0.0, 0.0, -0.21)});
  }

  ModelInfo info;
  info.model = RobotModel::build("quad12", std::move(joints), std::move(bodies), std::move(contacts));
  const scalar_t height = 0.31;
  const scalar_t theta = std::acos(height / 0.42);
  info.standPose = vector_t::Zero(18);
  info.standPose(2) = height;
  for (int l = 0; l < 4; ++l) {
    info.standPose(6 + 3 * l + 1) = theta;
    info.standPose(6 + 3 * l + 2) = -2.0 * theta;
  }
  info.desiredHeight = height;
  info.legNames = {"FL", "FR", "RL", "RR"};
  info.legContacts = {{0}, {1}, {2}, {3}};
  info.payloadBody = "trunk";
  return info;
}

ModelInfo makeBiped12() {
  std::vector<Joint> joints;
  std::vector<Body> bodies;
  std::vector<ContactFrame> contacts;

  Body trunk;
  trunk.name = "trunk";
  trunk.mass = 8.0;
  trunk.com = vector3_t(0.0, 0.0, 0.10);
  trunk.inertia = diagInertia(0.075, 0.102, 0.057);
  appendBase3d(joints, bodies, trunk);

  const char* legs[2] = {"L", "R"};
  const scalar_t sy[2] = {1.0, -1.0};
  for (int l = 0; l < 2; ++l) {
    const std::string leg = legs[l];

    Joint yaw;
    yaw.name = leg + "_hz";
    yaw.type = JointType::RZ;
    yaw.parentBody = 5;
    yaw.offset = vector3_t(0.0, 0.10 * sy[l], -0.02);
    yaw.lo = -1.0;
    yaw.hi = 1.0;
    yaw.actuated = true;
    joints.push_back(yaw);
    Body hipYaw;
    hipYaw.name = leg + "_hip_yaw";
    hipYaw.mass = 0.3;
    hipYaw.com = vector3_t(0.0, 0.0, -0.015);
    hipYaw.inertia = diagInertia(4e-4, 4e-4, 4e-4);
    bodies.push_back(hipYaw);

    Joint roll;
    roll.name = leg + "_hx";
    roll.type = JointType::RX;
    roll.parentBody = static_cast<int>(bodies.size()) - 1;
    roll.offset = vector3_t(0.0, 0.0, -0.03);
    roll.lo = -0.8;
    roll.hi = 0.8;
    roll.actuated = true;
    joints.push_back(roll);
    Body hipRoll;
    hipRoll.name = leg + "_hip_roll";
    hipRoll.mass = 0.3;
    hipRoll.com = vector3_t::Zero();
    hipRoll.inertia = diagInertia(4e-4, 4e-4, 4e-4);
    bodies.push_back(hipRoll);

    Joint pitch;
    pitch.name = leg + "_hy";
    pitch.type = JointType::RY;
    pitch.parentBody = static_cast<int>(bodies.size()) - 1;
    pitch.offset = vector3_t(0.0, 0.0, -0.03);
    pitch.lo = -2.2;
    pitch.hi = 2.2;
    pitch.actuated = true;
    joints.push_back(pitch);
    Body thigh;
    thigh.name = leg + "_thigh";
    thigh.mass = 1.2;
    thigh.com = vector3_t(0.0, 0.0, -0.20);
    thigh.inertia = diagInertia(0.016, 0.016, 0.002);
    bodies.push_back(thigh);

    Joint knee;
    knee.name = leg + "_kn";
    knee.type = JointType::RY;
    knee.parentBody = static_cast<int>(bodies.size()) - 1;
    knee.offset = vector3_t(0.0, 0.0, -0.40);
    knee.lo = -0.05;
    knee.hi = 2.6;
    knee.actuated = true;
    joints.push_back(knee);
    Body shank;
    shank.name = leg + "_shank";
    shank.mass = 0.8;
    shank.com = vector3_t(0.0, 0.0, -0.20);
    shank.inertia = diagInertia(0.0107, 0.0107, 0.0015);
    bodies.push_back(shank);

    Joint ap;
    ap.name = leg + "_ay";
    ap.type = JointType::RY;
    ap.parentBody = static_cast<int>(bodies.size()) - 1;
    ap.offset = vector3_t(0.0, 0.0, -0.40);
    ap.lo = -1.2;
    ap.hi = 1.2;
    ap.actuated = true;
    joints.push_back(ap);
    Body anklePitch;
    anklePitch.name = leg + "_ankle";
    anklePitch.mass = 0.2;
    anklePitch.com = vector3_t::Zero();
    anklePitch.inertia = diagInertia(2e-4, 2e-4, 2e-4);
    bodies.push_back(anklePitch);

    Joint ar;
    ar.name = leg + "_ax";
    ar.type = JointType::RX;
    ar.parentBody = static_cast<int>(bodies.size()) - 1;
    ar.offset = vector3_t::Zero();
    ar.lo = -0.6;
    ar.hi = 0.6;
    ar.actuated = true;
    joints.push_back(ar);
    Body foot;
    foot.name = leg + "_foot";
    foot.mass = 0.5;
    foot.com = vector3_t(0.02, 0.0, -0.04);
    foot.inertia = diagInertia(0.001, 0.002, 0.002);
    bodies.push_back(foot);

    const int footIdx = static_cast<int>(bodies.size()) - 1;
    contacts.push_back({leg + "_toe_in", footIdx, vector3_t(0.10, -0.04 * sy[l], -0.06)});
    contacts.push_back({leg + "_toe_out", footIdx, vector3_t(0.10, 0.04 * sy[l], -0.06)});
    contacts.push_back({leg + "_heel_in", footIdx, vector3_t(-0.06, -0.04 * sy[l], -0.06)});
    contacts.push_back({leg + "_heel_out", footIdx, vector3_t(-0.06, 0.04 * sy[l], -0.06)});
  }

  ModelInfo info;
  info.model = RobotModel::build("biped12", std::move(joints), std::move(bodies), std::move(contacts));
  const scalar_t kneeSpan = 0.86 - 0.02 - 0.03 - 0.03 - 0.06;
  const scalar_t theta = std::acos(kneeSpan / 0.80);
  info.standPose = vector_t::Zero(18);
  info.standPose(2) = 0.86;
  for (int l = 0; l < 2; ++l) {
    info.standPose(6 + 6 * l + 2) = -theta;       // hip pitch
    info.standPose(6 + 6 * l + 3) = 2.0 * theta;  // knee
    info.standPose(6 + 6 * l + 4) = -theta;       // ankle pitch
  }
  info.desiredHeight = 0.86;
  info.legNames = {"L", "R"};
  info.legContacts = {{0, 1, 2, 3}, {4, 5, 6, 7}};
  info.payloadBody = "trunk";
  return info;
}

std::string legPrefix(const std::string& contactName) {
  const size_t pos = contactName.find('_');
  return pos == std::string::npos ? contactName : contactName.substr(0, pos);
}

}  // namespace

bool isBuiltinModel(const std::string& name) {
  return name == "planar3" || name == "quad12" || name == "biped12";
}

ModelInfo makeBuiltinModel(const std::string& name) {
  if (name == "planar3") return makePlanar3();
  if (name == "quad12") return makeQuad12();
  if (name == "biped12") return makeBiped12();
  throw Error(ErrorCode::ConfigError, "unknown robot profile '" + name + "'");
}

ModelInfo makeModelInfo(RobotModel model, vector_t standPose, scalar_t desiredHeight,
                        std::string payloadBody) {
  ModelInfo info;
  info.payloadBody = std::move(payloadBody);
  for (size_t i = 0; i < model.contacts().size(); ++i) {
    const std::string leg = legPrefix(model.contacts()[i].name);
    size_t slot = 0;
    for (; slot < info.legNames.size(); ++slot) {
      if (info.legNames[slot] == leg) break;
    }
    if (slot == info.legNames.size()) {
      info.legNames.push_back(leg);
      info.legContacts.emplace_back();
    }
    info.legContacts[slot].push_back(static_cast<int>(i));
  }
  info.model = std::move(model);
  info.standPose = std::move(standPose);
  info.desiredHeight = desiredHeight;
  return info;
}

namespace {

vector_t parseNumbers(const std::string& text, Eigen::Index count, int lineNo) {
  std::string cleaned = text;
  for (char& c : cleaned) {
    if (c == ',') c = ' ';
  }
  std::istringstream ss(cleaned);
  vector_t out(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    if (!(ss >> out(i))) {
      throw Error(ErrorCode::ConfigError,
                  "expected " + std::to_string(count) + " numbers at line " + std::to_string(lineNo));
    }
  }
  return out;
}

std::map<std::string, std::string> parseFields(std::istringstream& ss) {
  std::map<std::string, std::string> fields;
  std::string token;
  while (ss >> token) {
    const size_t eq = token.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigError, "expected key=value, got '" + token + "'");
    }
    fields[token.substr(0, eq)] = token.substr(eq + 1);
  }
  return fields;
}

matrix3_t inertiaFromSix(const vector_t& v) {
  matrix3_t I;
  I << v(0), v(3), v(4), v(3), v(1), v(5), v(4), v(5), v(2);
  return I;
}

Body bodyFromFields(const std::string& name, std::map<std::string, std::string>& fields, int lineNo) {
  Body b;
  b.name = name;
  if (fields.count("mass")) b.mass = parseNumbers(fields["mass"], 1, lineNo)(0);
  if (fields.count("com")) b.com = parseNumbers(fields["com"], 3, lineNo);
  if (fields.count("inertia")) b.inertia = inertiaFromSix(parseNumbers(fields["inertia"], 6, lineNo));
  return b;
}

}  // namespace

RobotModel loadModelFile(const std::string& path) {
  std::ifstream file(path);
  if (!file) {
    throw Error(ErrorCode::ConfigError, "cannot open model file '" + path + "'");
  }

  std::string modelName = "unnamed";
  std::vector<Joint> joints;
  std::vector<Body> bodies;
  std::vector<ContactFrame> contacts;

  auto bodyIdx = [&](const std::string& name, int lineNo) {
    if (name == "world") return -1;
    for (size_t i = 0; i < bodies.size(); ++i) {
      if (bodies[i].name == name) return static_cast<int>(i);
    }
    throw Error(ErrorCode::ConfigError,
                "unknown parent body '" + name + "' at line " + std::to_string(lineNo));
  };

  std::string line;
  int lineNo = 0;
  while (std::getline(file, line)) {
    ++lineNo;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string kind;
    if (!(ss >> kind)) continue;

    if (kind == "model") {
      ss >> modelName;
    } else if (kind == "base3d" || kind == "base2d") {
      std::string name;
      if (!(ss >> name)) {
        throw Error(ErrorCode::ConfigError, "base record needs a name at line " + std::to_string(lineNo));
      }
      auto fields = parseFields(ss);
      const Body trunk = bodyFromFields(name, fields, lineNo);
      if (kind == "base3d") {
        appendBase3d(joints, bodies, trunk);
      } else {
        appendBase2d(joints, bodies, trunk);
      }
    } else if (kind == "body") {
      std::string name;
      if (!(ss >> name)) {
        throw Error(ErrorCode::ConfigError, "body record needs a name at line " + std::to_string(lineNo));
      }
      auto fields = parseFields(ss);
      if (!fields.count("parent") || !fields.count("joint")) {
        throw Error(ErrorCode::ConfigError,
                    "body '" + name + "' needs parent= and joint= at line " + std::to_string(lineNo));
      }
      Joint j;
      j.name = name;
      j.type = jointTypeFromName(fields["joint"]);
      j.parentBody = bodyIdx(fields["parent"], lineNo);
      if (fields.count("offset")) j.offset = parseNumbers(fields["offset"], 3, lineNo);
      if (fields.count("limits")) {
        const vector_t lim = parseNumbers(fields["limits"], 2, lineNo);
        j.lo = lim(0);
        j.hi = lim(1);
      }
      j.actuated = true;
      if (fields.count("actuated")) j.actuated = parseNumbers(fields["actuated"], 1, lineNo)(0) != 0.0;
      joints.push_back(j);
      bodies.push_back(bodyFromFields(name, fields, lineNo));
    } else if (kind == "contact") {
      std::string name;
      if (!(ss >> name)) {
        throw Error(ErrorCode::ConfigError, "contact record needs a name at line " + std::to_string(lineNo));
      }
      auto fields = parseFields(ss);
      if (!fields.count("body")) {
        throw Error(ErrorCode::ConfigError,
                    "contact '" + name + "' needs body= at line " + std::to_string(lineNo));
      }
      ContactFrame c;
      c.name = name;
      c.body = bodyIdx(fields["body"], lineNo);
      if (fields.count("offset")) c.offset = parseNumbers(fields["offset"], 3, lineNo);
      contacts.push_back(c);
    } else {
      throw Error(ErrorCode::ConfigError,
                  "unknown record '" + kind + "' at line " + std::to_string(lineNo));
    }
  }
  return RobotModel::build(modelName, std::move(joints), std::move(bodies), std::move(contacts));
}

void saveModelFile(const RobotModel& model, const std::string& path) {
  std::ofstream file(path);
  if (!file) {
    throw Error(ErrorCode::ConfigError, "cannot write model file '" + path + "'");
  }
  file.precision(17);

  auto vec3 = [](const vector3_t& v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v.x() << "," << v.y() << "," << v.z();
    return ss.str();
  };
  auto inertia6 = [](const matrix3_t& I) {
    std::ostringstream ss;
    ss.precision(17);
    ss << I(0, 0) << "," << I(1, 1) << "," << I(2, 2) << "," << I(0, 1) << "," << I(0, 2) << ","
       << I(1, 2);
    return ss.str();
  };

  file << "# robot description, units: kg m rad; inertia about the body COM as\n";
  file << "# ixx,iyy,izz,ixy,ixz,iyz; base3d/base2d expand to the floating-base chain\n";
  file << "model " << model.name() << "\n\n";

  const auto& joints = model.joints();
  const auto& bodies = model.bodies();
  const Eigen::Index nb = model.nb();
  const Body& trunk = bodies[static_cast<size_t>(nb - 1)];
  file << (nb == 6 ? "base3d " : "base2d ") << trunk.name << " mass=" << trunk.mass
       << " com=" << vec3(trunk.com) << " inertia=" << inertia6(trunk.inertia) << "\n";

  for (size_t i = static_cast<size_t>(nb); i < joints.size(); ++i) {
    const Joint& j = joints[i];
    const Body& b = bodies[i];
    file << "body " << b.name << " parent=" << bodies[static_cast<size_t>(j.parentBody)].name
         << " joint=" << jointTypeName(j.type) << " offset=" << vec3(j.offset)
         << " mass=" << b.mass << " com=" << vec3(b.com) << " inertia=" << inertia6(b.inertia)
         << " limits=" << j.lo << "," << j.hi << "\n";
  }
  file << "\n";
  for (const auto& c : model.contacts()) {
    file << "contact " << c.name << " body=" << bodies[static_cast<size_t>(c.body)].name
         << " offset=" << vec3(c.offset) << "\n";
  }
}

}  // namespace wbdrc
