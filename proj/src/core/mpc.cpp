// Sequential quadratic programming over the centroidal dynamics plus the
// reconstruction of whole-body references from the converged plan.
#include "core/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "core/numsolve.hpp"
#include "core/wbc.hpp"

namespace wbdrc {

namespace {

matrix3_t skew(const vector3_t& v) {
  matrix3_t s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

struct Dims {
  Eigen::Index nr = 0;  // tracked momentum rows
  Eigen::Index nb = 0;
  Eigen::Index nv = 0;
  Eigen::Index n = 0;
  Eigen::Index nc = 0;
  Eigen::Index nx = 0;  // nr + nv
  Eigen::Index nu = 0;  // 3 nc + n
};

Dims dimsOf(const RobotModel& model) {
  Dims d;
  d.nr = static_cast<Eigen::Index>(model.centroidalRows().size());
  d.nb = model.nb();
  d.nv = model.nv();
  d.n = model.n();
  d.nc = model.numContacts();
  d.nx = d.nr + d.nv;
  d.nu = 3 * d.nc + d.n;
  return d;
}

// Momentum matrix restricted to the tracked rows.
matrix_t momentumRows(const RobotModel& model, const vector_t& q) {
  const matrix_t A = model.centroidalMomentumMatrix(q);
  const auto& rows = model.centroidalRows();
  matrix_t Asel(static_cast<Eigen::Index>(rows.size()), model.nv());
  for (size_t k = 0; k < rows.size(); ++k) {
    Asel.row(static_cast<Eigen::Index>(k)) = A.row(rows[k]);
  }
  return Asel;
}

std::vector<int> allContactIds(const Dims& d) {
  std::vector<int> ids(static_cast<size_t>(d.nc));
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  return ids;
}

// Contact pattern and tracking targets at one grid node.
struct NodeContext {
  scalar_t time = 0.0;
  std::vector<int> stance;
  std::vector<int> swing;
  std::vector<std::pair<int, scalar_t>> clearance;  // swing contact id -> target height
  vector_t xdes;
  vector_t udes;
};

std::vector<NodeContext> buildNodes(const ModelInfo& info, const Dims& d,
                                    const MpcSettings& settings, const ContactSchedule& schedule,
                                    const Command& command, scalar_t tNow, const vector_t& qm) {
  const RobotModel& model = info.model;
  if (schedule.numLegs != static_cast<int>(info.legContacts.size())) {
    throw Error(ErrorCode::InvalidArgument, "contact schedule does not match the model legs");
  }
  const scalar_t dt = settings.horizon / static_cast<scalar_t>(settings.nodes - 1);
  const scalar_t swingDuration = schedule.cycleDuration - schedule.stanceDuration;
  const scalar_t mass = model.totalMass();
  const auto& rows = model.centroidalRows();

  std::vector<NodeContext> nodes(static_cast<size_t>(settings.nodes));
  for (int i = 0; i < settings.nodes; ++i) {
    NodeContext& node = nodes[static_cast<size_t>(i)];
    const scalar_t elapsed = dt * static_cast<scalar_t>(i);
    node.time = tNow + elapsed;
    for (int leg = 0; leg < schedule.numLegs; ++leg) {
      const auto& ids = info.legContacts[static_cast<size_t>(leg)];
      if (schedule.inStance(leg, node.time)) {
        node.stance.insert(node.stance.end(), ids.begin(), ids.end());
      } else {
        const scalar_t s =
            (schedule.legPhaseSeconds(leg, node.time) - schedule.stanceDuration) / swingDuration;
        const scalar_t target = settings.liftHeight * 4.0 * s * (1.0 - s);
        for (int id : ids) {
          node.swing.push_back(id);
          node.clearance.emplace_back(id, target);
        }
      }
    }

    node.xdes = vector_t::Zero(d.nx);
    for (Eigen::Index k = 0; k < d.nr; ++k) {
      if (rows[static_cast<size_t>(k)] == 0) node.xdes(k) = mass * command.vx;
      if (rows[static_cast<size_t>(k)] == 1) node.xdes(k) = mass * command.vy;
    }
    for (Eigen::Index j = 0; j < d.nb; ++j) {
      scalar_t v = 0.0;
      switch (model.joints()[static_cast<size_t>(j)].type) {
        case JointType::PX: v = qm(j) + command.vx * elapsed; break;
        case JointType::PY: v = qm(j) + command.vy * elapsed; break;
        case JointType::PZ: v = command.height; break;
        case JointType::RZ: v = qm(j) + command.yawRate * elapsed; break;
        default: break;  // level attitude
      }
      node.xdes(d.nr + j) = v;
    }
    node.xdes.tail(d.n) = info.standPose.tail(d.n);

    node.udes = vector_t::Zero(d.nu);
    if (!node.stance.empty()) {
      const scalar_t fz = mass * model.gravity() / static_cast<scalar_t>(node.stance.size());
      for (int id : node.stance) node.udes(3 * id + 2) = fz;
    }
    // Full stance means the reference is a statically held pose, so replace
    // the even split by the closest force set that also balances the gravity
    // moment there; otherwise standing plans creep toward evening the load.
    if (static_cast<Eigen::Index>(node.stance.size()) == d.nc) {
      const vector_t qRef = node.xdes.tail(d.nv);
      const vector3_t c = model.comPosition(qRef);
      matrix_t M = matrix_t::Zero(d.nr, 3 * d.nc);
      vector_t wrench = vector_t::Zero(d.nr);
      for (Eigen::Index k = 0; k < d.nc; ++k) {
        const matrix3_t lever = skew(model.contactPosition(qRef, static_cast<int>(k)) - c);
        for (Eigen::Index r = 0; r < d.nr; ++r) {
          const int row = rows[static_cast<size_t>(r)];
          if (row < 3) {
            M(r, 3 * k + row) = 1.0;
          } else {
            M.block(r, 3 * k, 1, 3) = lever.row(row - 3);
          }
        }
      }
      for (Eigen::Index r = 0; r < d.nr; ++r) {
        if (rows[static_cast<size_t>(r)] == 2) wrench(r) = mass * model.gravity();
      }
      const Eigen::Index nf = 3 * d.nc;
      matrix_t kkt = matrix_t::Zero(nf + d.nr, nf + d.nr);
      kkt.topLeftCorner(nf, nf).setIdentity();
      kkt.topRightCorner(nf, d.nr) = M.transpose();
      kkt.bottomLeftCorner(d.nr, nf) = M;
      vector_t kktRhs(nf + d.nr);
      kktRhs << node.udes.head(nf), wrench;
      Eigen::FullPivLU<matrix_t> kktLu(kkt);
      if (kktLu.isInvertible()) {
        node.udes.head(nf) = kktLu.solve(kktRhs).head(nf);
      }
    }
  }
  return nodes;
}

// Dynamics and stance-velocity values with their Jacobians at one node.
// qd rows over hL/qdj and momentum rows over F are analytic; everything that
// moves with q comes from forward differences.
struct NodeLin {
  vector_t f;
  matrix_t Ax, Bu;
  vector_t s;
  matrix_t Sx, Su;
};

NodeLin linearizeNode(const RobotModel& model, const Dims& d, const NodeContext& node,
                      const std::vector<int>& allIds, const vector_t& x, const vector_t& u) {
  NodeLin lin;
  lin.f = centroidalDerivative(model, x, u, allIds);
  const vector_t q = x.tail(d.nv);
  const Eigen::Index ns = 3 * static_cast<Eigen::Index>(node.stance.size());
  const matrix_t Jst = ns > 0 ? model.contactJacobian(q, node.stance) : matrix_t(0, d.nv);
  lin.s = Jst * lin.f.tail(d.nv);

  lin.Ax = matrix_t::Zero(d.nx, d.nx);
  lin.Bu = matrix_t::Zero(d.nx, d.nu);
  lin.Sx = matrix_t::Zero(ns, d.nx);
  lin.Su = matrix_t::Zero(ns, d.nu);

  const matrix_t Asel = momentumRows(model, q);
  Eigen::FullPivLU<matrix_t> lu(Asel.leftCols(d.nb));
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::SingularBaseBlock, "momentum matrix base block is singular");
  }
  const matrix_t AbInv = lu.inverse();
  const matrix_t JstbAbInv = Jst.leftCols(d.nb) * AbInv;

  lin.Ax.block(d.nr, 0, d.nb, d.nr) = AbInv;
  if (d.n > 0) {
    lin.Bu.block(d.nr, 3 * d.nc, d.nb, d.n) = -AbInv * Asel.rightCols(d.n);
    lin.Bu.block(d.nr + d.nb, 3 * d.nc, d.n, d.n).setIdentity();
  }

  const vector3_t c = model.comPosition(q);
  const auto& rows = model.centroidalRows();
  for (Eigen::Index k = 0; k < d.nc; ++k) {
    const matrix3_t lever = skew(model.contactPosition(q, static_cast<int>(k)) - c);
    for (Eigen::Index r = 0; r < d.nr; ++r) {
      const int row = rows[static_cast<size_t>(r)];
      if (row < 3) {
        lin.Bu(r, 3 * k + row) = 1.0;
      } else {
        lin.Bu.block(r, 3 * k, 1, 3) = lever.row(row - 3);
      }
    }
  }

  if (ns > 0) {
    lin.Sx.leftCols(d.nr) = JstbAbInv;
    if (d.n > 0) {
      lin.Su.rightCols(d.n) = Jst.rightCols(d.n) - JstbAbInv * Asel.rightCols(d.n);
    }
  }

  for (Eigen::Index j = 0; j < d.nv; ++j) {
    const scalar_t h = 1e-6 * (1.0 + std::abs(q(j)));
    vector_t xp = x;
    xp(d.nr + j) += h;
    const vector_t fp = centroidalDerivative(model, xp, u, allIds);
    lin.Ax.col(d.nr + j) = (fp - lin.f) / h;
    if (ns > 0) {
      const matrix_t Jp = model.contactJacobian(xp.tail(d.nv), node.stance);
      lin.Sx.col(d.nr + j) = (Jp * fp.tail(d.nv) - lin.s) / h;
    }
  }
  return lin;
}

// Keeps a maximal independent subset of rows so the KKT system stays regular
// when several contact points ride on one rigid foot.
void dropDependentRows(matrix_t& M, vector_t& r) {
  if (M.rows() == 0) return;
  Eigen::ColPivHouseholderQR<matrix_t> qr(M.transpose());
  qr.setThreshold(1e-5);
  const Eigen::Index rank = qr.rank();
  if (rank == M.rows()) return;
  const auto& perm = qr.colsPermutation().indices();
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<size_t>(rank));
  for (Eigen::Index k = 0; k < rank; ++k) keep.push_back(perm(k));
  std::sort(keep.begin(), keep.end());
  matrix_t M2(rank, M.cols());
  vector_t r2(rank);
  for (Eigen::Index k = 0; k < rank; ++k) {
    M2.row(k) = M.row(keep[static_cast<size_t>(k)]);
    r2(k) = r(keep[static_cast<size_t>(k)]);
  }
  M = std::move(M2);
  r = std::move(r2);
}

// At node 0 the state is pinned, so zero stance velocity must be reachable
// with the joint rates alone.
void checkInitialStance(const RobotModel& model, const Dims& d, const NodeContext& node0,
                        const vector_t& xm) {
  if (node0.stance.empty()) return;
  const vector_t q = xm.tail(d.nv);
  const matrix_t Jst = model.contactJacobian(q, node0.stance);
  const matrix_t Asel = momentumRows(model, q);
  Eigen::FullPivLU<matrix_t> lu(Asel.leftCols(d.nb));
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::SingularBaseBlock, "momentum matrix base block is singular");
  }
  vector_t s0 = Jst.leftCols(d.nb) * lu.solve(xm.head(d.nr));
  if (d.n > 0) {
    const matrix_t Su =
        Jst.rightCols(d.n) - Jst.leftCols(d.nb) * lu.solve(Asel.rightCols(d.n));
    const vector_t qdj = Su.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(-s0);
    s0 += Su * qdj;
  }
  if (s0.norm() > 1e-3) {
    throw Error(ErrorCode::Infeasible,
                "stance feet cannot reach zero velocity at the measured state");
  }
}

struct Merit {
  scalar_t cost = 0.0;
  scalar_t eq = 0.0;      // l1 norm of the hard equality violations
  scalar_t defect = 0.0;  // max-norm of the Euler defects
};

scalar_t stateWeight(const MpcWeights& w, const Dims& d, Eigen::Index k) {
  if (k < d.nr) return w.momentum;
  if (k < d.nr + d.nb) return w.pose;
  return w.jointPose;
}

Merit evalMerit(const RobotModel& model, const Dims& d, const MpcSettings& settings,
                const std::vector<NodeContext>& nodes, const std::vector<int>& allIds,
                const vector_t& xm, scalar_t dt, const std::vector<vector_t>& X,
                const std::vector<vector_t>& U) {
  Merit m;
  const matrix_t C1 = frictionPyramid(settings.mu, 1);
  const int N = static_cast<int>(nodes.size());
  m.eq += (X[0] - xm).lpNorm<1>();
  for (int i = 0; i < N; ++i) {
    const NodeContext& node = nodes[static_cast<size_t>(i)];
    const vector_t& x = X[static_cast<size_t>(i)];
    const vector_t& u = U[static_cast<size_t>(i)];
    const scalar_t wScale = (i == N - 1) ? 1.0 + settings.weights.terminalScale : 1.0;
    for (Eigen::Index k = 0; k < d.nx; ++k) {
      const scalar_t w = stateWeight(settings.weights, d, k) * wScale;
      const scalar_t e = x(k) - node.xdes(k);
      m.cost += w * e * e;
    }
    for (Eigen::Index k = 0; k < d.nu; ++k) {
      const scalar_t e = u(k) - node.udes(k);
      m.cost += settings.weights.input * e * e;
    }
    const vector_t q = x.tail(d.nv);
    for (int id : node.stance) {
      const vector_t viol = C1 * u.segment(3 * id, 3);
      for (Eigen::Index r = 0; r < viol.size(); ++r) {
        const scalar_t v = std::max(0.0, viol(r));
        m.cost += settings.weights.friction * v * v;
      }
    }
    for (const auto& [id, target] : node.clearance) {
      const scalar_t v = std::max(0.0, target - model.contactPosition(q, id).z());
      m.cost += settings.weights.swing * v * v;
    }
    for (int id : node.swing) {
      m.eq += u.segment(3 * id, 3).lpNorm<1>();
    }
    const vector_t f = centroidalDerivative(model, x, u, allIds);
    if (i + 1 < N) {
      if (!node.stance.empty()) {
        const matrix_t Jst = model.contactJacobian(q, node.stance);
        m.eq += (Jst * f.tail(d.nv)).lpNorm<1>();
      }
      const vector_t defect = X[static_cast<size_t>(i) + 1] - x - dt * f;
      m.eq += defect.lpNorm<1>();
      m.defect = std::max(m.defect, defect.lpNorm<Eigen::Infinity>());
    }
  }
  return m;
}

void addDense(std::vector<triplet_t>& T, Eigen::Index r0, Eigen::Index c0, const matrix_t& M) {
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    for (Eigen::Index c = 0; c < M.cols(); ++c) {
      if (M(r, c) != 0.0) T.emplace_back(r0 + r, c0 + c, M(r, c));
    }
  }
}

struct QpData {
  sparse_matrix_t H;
  vector_t g;
  sparse_matrix_t A;
  vector_t b;
};

QpData assembleQp(const RobotModel& model, const Dims& d, const MpcSettings& settings,
                  const std::vector<NodeContext>& nodes, const std::vector<NodeLin>& lin,
                  const vector_t& xm, scalar_t dt, const std::vector<vector_t>& X,
                  const std::vector<vector_t>& U) {
  const int N = static_cast<int>(nodes.size());
  const Eigen::Index stride = d.nx + d.nu;
  const Eigen::Index dim = stride * N;
  const matrix_t C1 = frictionPyramid(settings.mu, 1);

  std::vector<triplet_t> hT;
  std::vector<triplet_t> aT;
  vector_t g = vector_t::Zero(dim);
  std::vector<scalar_t> bRows;
  Eigen::Index row = 0;

  for (Eigen::Index k = 0; k < d.nx; ++k) {
    aT.emplace_back(row + k, k, 1.0);
    bRows.push_back(xm(k));
  }
  row += d.nx;

  for (int i = 0; i < N; ++i) {
    const Eigen::Index xo = stride * i;
    const Eigen::Index uo = xo + d.nx;
    const NodeContext& node = nodes[static_cast<size_t>(i)];
    const NodeLin& L = lin[static_cast<size_t>(i)];
    const vector_t& x = X[static_cast<size_t>(i)];
    const vector_t& u = U[static_cast<size_t>(i)];
    const scalar_t wScale = (i == N - 1) ? 1.0 + settings.weights.terminalScale : 1.0;

    for (Eigen::Index k = 0; k < d.nx; ++k) {
      const scalar_t w = stateWeight(settings.weights, d, k) * wScale;
      hT.emplace_back(xo + k, xo + k, 2.0 * w);
      g(xo + k) -= 2.0 * w * node.xdes(k);
    }
    for (Eigen::Index k = 0; k < d.nu; ++k) {
      hT.emplace_back(uo + k, uo + k, 2.0 * settings.weights.input);
      g(uo + k) -= 2.0 * settings.weights.input * node.udes(k);
    }

    // Friction hinge: linear in F, so the quadratic model is exact while the
    // row stays active.
    for (int id : node.stance) {
      const vector3_t Fc = u.segment(3 * id, 3);
      const vector_t viol = C1 * Fc;
      for (Eigen::Index r = 0; r < viol.size(); ++r) {
        if (viol(r) <= 0.0) continue;
        const vector3_t a = C1.row(r).transpose();
        const scalar_t r0 = viol(r) - a.dot(Fc);
        for (Eigen::Index p = 0; p < 3; ++p) {
          if (a(p) == 0.0) continue;
          g(uo + 3 * id + p) += 2.0 * settings.weights.friction * r0 * a(p);
          for (Eigen::Index q2 = 0; q2 < 3; ++q2) {
            if (a(q2) == 0.0) continue;
            hT.emplace_back(uo + 3 * id + p, uo + 3 * id + q2,
                            2.0 * settings.weights.friction * a(p) * a(q2));
          }
        }
      }
    }

    // Swing clearance hinge, Gauss-Newton through the contact Jacobian z-row.
    if (!node.clearance.empty()) {
      const vector_t q = x.tail(d.nv);
      for (const auto& [id, target] : node.clearance) {
        const scalar_t cval = target - model.contactPosition(q, id).z();
        if (cval <= 0.0) continue;
        const vector_t a = -model.contactJacobian(q, {id}).row(2).transpose();
        const scalar_t r0 = cval - a.dot(q);
        for (Eigen::Index p = 0; p < d.nv; ++p) {
          if (a(p) == 0.0) continue;
          g(xo + d.nr + p) += 2.0 * settings.weights.swing * r0 * a(p);
          for (Eigen::Index q2 = 0; q2 < d.nv; ++q2) {
            if (a(q2) == 0.0) continue;
            hT.emplace_back(xo + d.nr + p, xo + d.nr + q2,
                            2.0 * settings.weights.swing * a(p) * a(q2));
          }
        }
      }
    }

    if (i + 1 < N) {
      const vector_t rhs = dt * (L.f - L.Ax * x - L.Bu * u);
      for (Eigen::Index k = 0; k < d.nx; ++k) {
        aT.emplace_back(row + k, stride * (i + 1) + k, 1.0);
      }
      addDense(aT, row, xo, -(matrix_t::Identity(d.nx, d.nx) + dt * L.Ax));
      addDense(aT, row, uo, -dt * L.Bu);
      for (Eigen::Index k = 0; k < d.nx; ++k) bRows.push_back(rhs(k));
      row += d.nx;
    }

    for (int id : node.swing) {
      for (Eigen::Index k = 0; k < 3; ++k) {
        aT.emplace_back(row, uo + 3 * id + k, 1.0);
        bRows.push_back(0.0);
        ++row;
      }
    }

    // Stance velocity rows ride on the defect chain, so the padded last node
    // carries none.
    if (i + 1 < N && !node.stance.empty()) {
      matrix_t M(L.Sx.rows(), d.nx + d.nu);
      M << L.Sx, L.Su;
      vector_t r = L.Sx * x + L.Su * u - L.s;
      if (i == 0) {
        // x_0 is pinned by the initial-condition block, so fold its columns
        // into the right-hand side; keeping them would duplicate those rows.
        r -= L.Sx * xm;
        M.leftCols(d.nx).setZero();
      }
      dropDependentRows(M, r);
      addDense(aT, row, xo, M.leftCols(d.nx));
      addDense(aT, row, uo, M.rightCols(d.nu));
      for (Eigen::Index k = 0; k < r.size(); ++k) bRows.push_back(r(k));
      row += r.size();
    }
  }

  QpData qp;
  qp.H.resize(dim, dim);
  qp.H.setFromTriplets(hT.begin(), hT.end());
  qp.A.resize(row, dim);
  qp.A.setFromTriplets(aT.begin(), aT.end());
  qp.g = std::move(g);
  qp.b = Eigen::Map<vector_t>(bRows.data(), static_cast<Eigen::Index>(bRows.size()));
  return qp;
}

vector_t packIterate(const Dims& d, const std::vector<vector_t>& X,
                     const std::vector<vector_t>& U) {
  const Eigen::Index stride = d.nx + d.nu;
  vector_t z(stride * static_cast<Eigen::Index>(X.size()));
  for (size_t i = 0; i < X.size(); ++i) {
    z.segment(stride * static_cast<Eigen::Index>(i), d.nx) = X[i];
    z.segment(stride * static_cast<Eigen::Index>(i) + d.nx, d.nu) = U[i];
  }
  return z;
}

void unpackIterate(const Dims& d, const vector_t& z, std::vector<vector_t>& X,
                   std::vector<vector_t>& U) {
  const Eigen::Index stride = d.nx + d.nu;
  for (size_t i = 0; i < X.size(); ++i) {
    X[i] = z.segment(stride * static_cast<Eigen::Index>(i), d.nx);
    U[i] = z.segment(stride * static_cast<Eigen::Index>(i) + d.nx, d.nu);
  }
}

vector_t sampleGrid(const std::vector<vector_t>& V, scalar_t t0, scalar_t dt, scalar_t t) {
  const int N = static_cast<int>(V.size());
  scalar_t s = (t - t0) / dt;
  s = std::clamp(s, 0.0, static_cast<scalar_t>(N - 1));
  const int lo = std::min(static_cast<int>(s), N - 2);
  const scalar_t a = s - static_cast<scalar_t>(lo);
  return (1.0 - a) * V[static_cast<size_t>(lo)] + a * V[static_cast<size_t>(lo) + 1];
}

}  // namespace

vector_t centroidalState(const RobotModel& model, const vector_t& q, const vector_t& qd) {
  const Dims d = dimsOf(model);
  if (q.size() != d.nv || qd.size() != d.nv) {
    throw Error(ErrorCode::InvalidArgument, "state size does not match the model");
  }
  const vector6_t hl6 = model.centroidalMomentumMatrix(q) * qd;
  vector_t xc(d.nx);
  const auto& rows = model.centroidalRows();
  for (Eigen::Index k = 0; k < d.nr; ++k) xc(k) = hl6(rows[static_cast<size_t>(k)]);
  xc.tail(d.nv) = q;
  return xc;
}

vector_t centroidalDerivative(const RobotModel& model, const vector_t& xc, const vector_t& uc,
                              const std::vector<int>& contactIds) {
  const Dims d = dimsOf(model);
  if (d.nr != d.nb) {
    throw Error(ErrorCode::InvalidArgument,
                "tracked momentum rows must match the floating-base dimension");
  }
  const Eigen::Index m = static_cast<Eigen::Index>(contactIds.size());
  if (xc.size() != d.nx || uc.size() != 3 * m + d.n) {
    throw Error(ErrorCode::InvalidArgument, "centroidal state or input has the wrong size");
  }
  const vector_t q = xc.tail(d.nv);
  const vector_t qdj = uc.tail(d.n);

  vector6_t hldot = vector6_t::Zero();
  hldot(2) = -model.totalMass() * model.gravity();
  const vector3_t c = model.comPosition(q);
  for (Eigen::Index k = 0; k < m; ++k) {
    const vector3_t f = uc.segment<3>(3 * k);
    const vector3_t p = model.contactPosition(q, contactIds[static_cast<size_t>(k)]);
    hldot.head<3>() += f;
    hldot.tail<3>() += (p - c).cross(f);
  }

  const matrix_t Asel = momentumRows(model, q);
  Eigen::FullPivLU<matrix_t> lu(Asel.leftCols(d.nb));
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::SingularBaseBlock, "momentum matrix base block is singular");
  }

  vector_t out(d.nx);
  const auto& rows = model.centroidalRows();
  for (Eigen::Index k = 0; k < d.nr; ++k) out(k) = hldot(rows[static_cast<size_t>(k)]);
  out.segment(d.nr, d.nb) = lu.solve(xc.head(d.nr) - Asel.rightCols(d.n) * qdj);
  out.tail(d.n) = qdj;
  return out;
}

MpcSolution solveMpc(const ModelInfo& info, const MpcSettings& settings,
                     const ContactSchedule& schedule, const Command& command, scalar_t tNow,
                     const vector_t& q, const vector_t& qd, const MpcSolution* warmStart) {
  const RobotModel& model = info.model;
  const Dims d = dimsOf(model);
  if (d.nr != d.nb) {
    throw Error(ErrorCode::InvalidArgument,
                "tracked momentum rows must match the floating-base dimension");
  }
  if (settings.nodes < 2 || settings.horizon <= 0.0) {
    throw Error(ErrorCode::ConfigError, "mpc needs a positive horizon and at least two nodes");
  }
  if (settings.mu <= 0.0 || settings.liftHeight < 0.0 || settings.maxIterations < 1) {
    throw Error(ErrorCode::ConfigError, "mpc friction, lift height, or iteration budget invalid");
  }
  const MpcWeights& w = settings.weights;
  if (w.momentum <= 0.0 || w.pose <= 0.0 || w.jointPose <= 0.0 || w.input <= 0.0 ||
      w.terminalScale < 0.0 || w.friction < 0.0 || w.swing < 0.0) {
    throw Error(ErrorCode::ConfigError, "mpc weights must be positive");
  }
  if (q.size() != d.nv || qd.size() != d.nv) {
    throw Error(ErrorCode::InvalidArgument, "state size does not match the model");
  }

  const vector_t xm = centroidalState(model, q, qd);
  const scalar_t dt = settings.horizon / static_cast<scalar_t>(settings.nodes - 1);
  const std::vector<NodeContext> nodes =
      buildNodes(info, d, settings, schedule, command, tNow, q);
  const std::vector<int> allIds = allContactIds(d);

  checkInitialStance(model, d, nodes.front(), xm);

  const int N = settings.nodes;
  std::vector<vector_t> X(static_cast<size_t>(N));
  std::vector<vector_t> U(static_cast<size_t>(N));
  const bool warm = warmStart != nullptr && warmStart->X.size() >= 2 &&
                    warmStart->U.size() == warmStart->X.size() && warmStart->dt > 0.0 &&
                    warmStart->X.front().size() == d.nx && warmStart->U.front().size() == d.nu;
  for (int i = 0; i < N; ++i) {
    if (warm) {
      const scalar_t t = tNow + dt * static_cast<scalar_t>(i);
      X[static_cast<size_t>(i)] = sampleGrid(warmStart->X, warmStart->t0, warmStart->dt, t);
      U[static_cast<size_t>(i)] = sampleGrid(warmStart->U, warmStart->t0, warmStart->dt, t);
    } else {
      X[static_cast<size_t>(i)] = xm;
      U[static_cast<size_t>(i)] = nodes[static_cast<size_t>(i)].udes;
    }
  }
  if (warm) X[0] = xm;

  Merit cur = evalMerit(model, d, settings, nodes, allIds, xm, dt, X, U);
  const scalar_t meritPenalty = 1e4;
  scalar_t phi = cur.cost + meritPenalty * cur.eq;
  scalar_t phiPrev = phi;
  scalar_t rho = 1e-6;
  int iters = 0;
  bool converged = false;

  std::vector<NodeLin> lin(static_cast<size_t>(N));
  std::vector<vector_t> Xc(static_cast<size_t>(N));
  std::vector<vector_t> Uc(static_cast<size_t>(N));
  sparse_matrix_t id(static_cast<Eigen::Index>(N) * (d.nx + d.nu),
                     static_cast<Eigen::Index>(N) * (d.nx + d.nu));
  id.setIdentity();

  for (int iter = 1; iter <= settings.maxIterations && !converged; ++iter) {
    iters = iter;
    for (int i = 0; i < N; ++i) {
      lin[static_cast<size_t>(i)] = linearizeNode(model, d, nodes[static_cast<size_t>(i)], allIds,
                                                  X[static_cast<size_t>(i)],
                                                  U[static_cast<size_t>(i)]);
    }
    const QpData qp = assembleQp(model, d, settings, nodes, lin, xm, dt, X, U);
    const vector_t zbar = packIterate(d, X, U);

    vector_t z;
    bool solved = false;
    for (int attempt = 0; attempt < 10 && !solved; ++attempt) {
      const sparse_matrix_t Hreg = qp.H + 2.0 * rho * id;
      const vector_t greg = qp.g - 2.0 * rho * zbar;
      try {
        z = solveEqualityQpSparse(Hreg, greg, qp.A, qp.b);
        solved = true;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::SingularKKT) throw;
        rho = std::max(rho * 20.0, 1e-8);
      }
    }
    if (!solved) {
      throw Error(ErrorCode::SqpDiverged, "subproblem stayed singular");
    }

    const vector_t dz = z - zbar;
    const scalar_t fullStep = dz.lpNorm<Eigen::Infinity>();
    const scalar_t stepFloor = settings.stepTolerance * (1.0 + zbar.lpNorm<Eigen::Infinity>());
    if (fullStep <= stepFloor) {
      unpackIterate(d, z, Xc, Uc);
      const Merit cand = evalMerit(model, d, settings, nodes, allIds, xm, dt, Xc, Uc);
      if (cand.cost + meritPenalty * cand.eq <= phi) {
        X = Xc;
        U = Uc;
        cur = cand;
      }
      converged = true;
      continue;
    }

    // A partial step keeps the same fraction of the linearized infeasibility,
    // so backtracking trades the exploding cost terms against it smoothly.
    bool accepted = false;
    scalar_t alpha = 1.0;
    for (int cut = 0; cut < 13 && !accepted; ++cut) {
      unpackIterate(d, zbar + alpha * dz, Xc, Uc);
      const Merit cand = evalMerit(model, d, settings, nodes, allIds, xm, dt, Xc, Uc);
      const scalar_t phic = cand.cost + meritPenalty * cand.eq;
      if (phic <= phi - 1e-12) {
        X = Xc;
        U = Uc;
        cur = cand;
        phi = phic;
        accepted = true;
      } else {
        alpha *= 0.5;
      }
    }
    if (!accepted) {
      throw Error(ErrorCode::SqpDiverged, "no descent step found");
    }
    if (alpha >= 1.0) {
      rho = std::max(rho / 3.0, 1e-9);
    } else {
      rho = std::min(rho * 5.0, 1e6);
    }
    if (alpha * fullStep <= stepFloor) converged = true;
    if (cur.defect <= settings.defectTolerance &&
        phiPrev - phi <= 1e-6 * (1.0 + std::abs(phi))) {
      converged = true;
    }
    phiPrev = phi;
  }

  if (cur.defect > settings.defectTolerance) {
    throw Error(ErrorCode::SqpDiverged, "dynamics defects did not converge");
  }

  MpcSolution sol;
  sol.t0 = tNow;
  sol.dt = dt;
  sol.X = std::move(X);
  sol.U = std::move(U);
  sol.iterations = iters;
  sol.defectResidual = cur.defect;
  sol.cost = cur.cost;
  return sol;
}

scalar_t ReferenceTrajectory::endTime() const {
  if (nodes.size() < 2) return t0;
  return t0 + dt * static_cast<scalar_t>(nodes.size() - 1);
}

ReferenceSample ReferenceTrajectory::sample(scalar_t t) const {
  if (nodes.empty()) {
    throw Error(ErrorCode::InvalidArgument, "sampling an empty reference trajectory");
  }
  if (nodes.size() == 1 || dt <= 0.0) return nodes.front();
  scalar_t s = (t - t0) / dt;
  s = std::clamp(s, 0.0, static_cast<scalar_t>(nodes.size() - 1));
  const size_t lo = std::min(static_cast<size_t>(s), nodes.size() - 2);
  const scalar_t a = s - static_cast<scalar_t>(lo);
  const ReferenceSample& p0 = nodes[lo];
  const ReferenceSample& p1 = nodes[lo + 1];
  ReferenceSample out;
  out.q = (1.0 - a) * p0.q + a * p1.q;
  out.qd = (1.0 - a) * p0.qd + a * p1.qd;
  out.qdd = (1.0 - a) * p0.qdd + a * p1.qdd;
  out.F = (1.0 - a) * p0.F + a * p1.F;
  out.tau = (1.0 - a) * p0.tau + a * p1.tau;
  return out;
}

ReferenceTrajectory reconstructReference(const RobotModel& model, const MpcSolution& plan) {
  const Dims d = dimsOf(model);
  if (d.nr != d.nb) {
    throw Error(ErrorCode::InvalidArgument,
                "tracked momentum rows must match the floating-base dimension");
  }
  ReferenceTrajectory traj;
  traj.t0 = plan.t0;
  traj.dt = plan.dt;
  const size_t N = plan.X.size();
  if (N == 0) return traj;
  if (plan.U.size() != N || (N > 1 && plan.dt <= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "plan grid is inconsistent");
  }
  const std::vector<int> allIds = allContactIds(d);
  traj.nodes.resize(N);

  for (size_t i = 0; i < N; ++i) {
    const vector_t& x = plan.X[i];
    const vector_t& u = plan.U[i];
    if (x.size() != d.nx || u.size() != d.nu) {
      throw Error(ErrorCode::InvalidArgument, "plan node size does not match the model");
    }
    ReferenceSample& node = traj.nodes[i];
    node.q = x.tail(d.nv);
    node.F = u.head(3 * d.nc);

    const matrix_t Asel = momentumRows(model, node.q);
    Eigen::FullPivLU<matrix_t> lu(Asel.leftCols(d.nb));
    if (!lu.isInvertible()) {
      throw Error(ErrorCode::SingularBaseBlock, "momentum matrix base block is singular");
    }
    node.qd = vector_t(d.nv);
    node.qd.head(d.nb) = lu.solve(x.head(d.nr) - Asel.rightCols(d.n) * u.tail(d.n));
    node.qd.tail(d.n) = u.tail(d.n);
  }

  vector_t qddj = vector_t::Zero(d.n);
  for (size_t i = 0; i < N; ++i) {
    if (i + 1 < N) {
      qddj = (plan.U[i + 1].tail(d.n) - plan.U[i].tail(d.n)) / plan.dt;
    }
    ReferenceSample& node = traj.nodes[i];
    const matrix_t D = model.massMatrix(node.q);
    const vector_t bias = model.biasForces(node.q, node.qd);
    const matrix_t J = model.contactJacobian(node.q, allIds);
    const vector_t generalized = J.transpose() * node.F - bias;
    Eigen::FullPivLU<matrix_t> luD(D.topLeftCorner(d.nb, d.nb));
    if (!luD.isInvertible()) {
      throw Error(ErrorCode::SingularD11, "floating-base inertia block is singular");
    }
    node.qdd = vector_t(d.nv);
    node.qdd.head(d.nb) =
        luD.solve(generalized.head(d.nb) - D.topRightCorner(d.nb, d.n) * qddj);
    node.qdd.tail(d.n) = qddj;
    node.tau = (D * node.qdd - generalized).tail(d.n);
  }
  return traj;
}

}  // namespace wbdrc
