#include "core/numsolve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

namespace wbdrc {

namespace {

constexpr scalar_t kFeasTol = 1e-8;
constexpr scalar_t kStatTol = 1e-6;

struct ActiveSetSolution {
  vector_t x;
  vector_t lambdaEq;
  vector_t lambdaIn;
  std::vector<Eigen::Index> active;
  int iterations = 0;
  scalar_t stationarity = 0.0;
};

// Primal active-set loop. Assumes x is feasible and H symmetric PSD.
ActiveSetSolution runActiveSet(const matrix_t& H, const vector_t& g, const matrix_t& Aeq,
                               const vector_t& beq, const matrix_t& Ain, const vector_t& bin,
                               vector_t x, int maxIter) {
  const Eigen::Index d = x.size();
  const Eigen::Index me = Aeq.rows();
  const Eigen::Index mi = Ain.rows();

  std::vector<bool> inW(static_cast<size_t>(mi), false);
  for (Eigen::Index i = 0; i < mi; ++i) {
    if (Ain.row(i).dot(x) - bin(i) > -1e-11) inW[static_cast<size_t>(i)] = true;
  }

  auto assembleWorking = [&](matrix_t& Aw, std::vector<Eigen::Index>& rows) {
    rows.clear();
    for (Eigen::Index i = 0; i < mi; ++i) {
      if (inW[static_cast<size_t>(i)]) rows.push_back(i);
    }
    Aw.resize(me + static_cast<Eigen::Index>(rows.size()), d);
    if (me > 0) Aw.topRows(me) = Aeq;
    for (size_t k = 0; k < rows.size(); ++k) {
      Aw.row(me + static_cast<Eigen::Index>(k)) = Ain.row(rows[k]);
    }
  };

  matrix_t Aw;
  std::vector<Eigen::Index> workRows;

  for (int iter = 0; iter < maxIter; ++iter) {
    assembleWorking(Aw, workRows);

    matrix_t Z;
    Eigen::Index kernelDim = d;
    if (Aw.rows() > 0) {
      Eigen::FullPivLU<matrix_t> lu(Aw);
      kernelDim = lu.dimensionOfKernel();
      if (kernelDim > 0) Z = lu.kernel();
    } else {
      Z = matrix_t::Identity(d, d);
    }

    const vector_t grad = H * x + g;

    vector_t p = vector_t::Zero(d);
    vector_t rayDir;
    if (kernelDim > 0) {
      const matrix_t Hr = Z.transpose() * H * Z;
      const vector_t gr = Z.transpose() * grad;
      Eigen::SelfAdjointEigenSolver<matrix_t> eig(Hr);
      const vector_t& ev = eig.eigenvalues();
      const matrix_t& V = eig.eigenvectors();
      const scalar_t curvTol = 1e-11 * std::max<scalar_t>(1.0, ev.cwiseAbs().maxCoeff());
      const scalar_t gradTol = 1e-10 * (1.0 + grad.norm());

      vector_t yNewton = vector_t::Zero(kernelDim);
      vector_t yRay = vector_t::Zero(kernelDim);
      for (Eigen::Index k = 0; k < kernelDim; ++k) {
        const scalar_t gi = V.col(k).dot(gr);
        if (ev(k) > curvTol) {
          yNewton -= (gi / ev(k)) * V.col(k);
        } else {
          yRay -= gi * V.col(k);
        }
      }
      if (yRay.norm() > gradTol) {
        rayDir = Z * yRay;
      } else {
        p = Z * yNewton;
      }
    }

    if (rayDir.size() > 0) {
      // Zero-curvature descent direction: either blocked or the QP is unbounded.
      scalar_t alpha = std::numeric_limits<scalar_t>::infinity();
      Eigen::Index blocker = -1;
      for (Eigen::Index i = 0; i < mi; ++i) {
        if (inW[static_cast<size_t>(i)]) continue;
        const scalar_t ap = Ain.row(i).dot(rayDir);
        if (ap > 1e-12 * (1.0 + rayDir.norm())) {
          const scalar_t ratio = std::max<scalar_t>(0.0, (bin(i) - Ain.row(i).dot(x)) / ap);
          if (ratio < alpha) {
            alpha = ratio;
            blocker = i;
          }
        }
      }
      if (blocker < 0) {
        throw Error(ErrorCode::Unbounded, "objective unbounded along a feasible ray");
      }
      x += alpha * rayDir;
      inW[static_cast<size_t>(blocker)] = true;
      continue;
    }

    if (p.lpNorm<Eigen::Infinity>() <= 1e-11 * (1.0 + x.lpNorm<Eigen::Infinity>())) {
      // Stationary on the working set: check multipliers.
      vector_t lambda;
      if (Aw.rows() > 0) {
        lambda = Aw.transpose().colPivHouseholderQr().solve(-grad);
      } else {
        lambda = vector_t::Zero(0);
      }
      Eigen::Index worst = -1;
      scalar_t worstVal = -1e-9;
      for (size_t k = 0; k < workRows.size(); ++k) {
        const scalar_t lk = lambda(me + static_cast<Eigen::Index>(k));
        if (lk < worstVal) {
          worstVal = lk;
          worst = workRows[k];
        }
      }
      if (worst >= 0) {
        inW[static_cast<size_t>(worst)] = false;
        continue;
      }

      ActiveSetSolution sol;
      sol.x = x;
      sol.iterations = iter + 1;
      sol.lambdaEq = me > 0 ? vector_t(lambda.head(me)) : vector_t(0);
      sol.lambdaIn = vector_t::Zero(mi);
      for (size_t k = 0; k < workRows.size(); ++k) {
        sol.lambdaIn(workRows[k]) = std::max<scalar_t>(0.0, lambda(me + static_cast<Eigen::Index>(k)));
      }
      sol.active = workRows;
      vector_t stat = grad;
      if (me > 0) stat += Aeq.transpose() * sol.lambdaEq;
      if (mi > 0) stat += Ain.transpose() * sol.lambdaIn;
      sol.stationarity = stat.lpNorm<Eigen::Infinity>();
      return sol;
    }

    // Line step toward the EQP optimum, clipped at the nearest blocking constraint.
    scalar_t alpha = 1.0;
    Eigen::Index blocker = -1;
    for (Eigen::Index i = 0; i < mi; ++i) {
      if (inW[static_cast<size_t>(i)]) continue;
      const scalar_t ap = Ain.row(i).dot(p);
      if (ap > 1e-12 * (1.0 + p.norm())) {
        const scalar_t ratio = std::max<scalar_t>(0.0, (bin(i) - Ain.row(i).dot(x)) / ap);
        if (ratio < alpha) {
          alpha = ratio;
          blocker = i;
        }
      }
    }
    x += alpha * p;
    if (blocker >= 0) inW[static_cast<size_t>(blocker)] = true;
  }

  throw Error(ErrorCode::MaxIterations, "active-set iteration limit exceeded");
}

// Minimum-norm least-squares solve, used for feasible starts and restoration.
vector_t leastSquares(const matrix_t& A, const vector_t& b) {
  return A.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
}

scalar_t maxViolation(const matrix_t& Ain, const vector_t& bin, const vector_t& x) {
  if (Ain.rows() == 0) return 0.0;
  return (Ain * x - bin).maxCoeff();
}

// Finds a feasible point or throws Infeasible. Phase 1 minimizes the worst
// violation t with a small regularizer keeping the problem strictly convex.
vector_t findFeasiblePoint(const matrix_t& Aeq, const vector_t& beq, const matrix_t& Ain,
                           const vector_t& bin, Eigen::Index d, int maxIter) {
  vector_t x = vector_t::Zero(d);
  if (Aeq.rows() > 0) {
    x = leastSquares(Aeq, beq);
    const scalar_t eqErr = (Aeq * x - beq).lpNorm<Eigen::Infinity>();
    if (eqErr > 1e-9 * (1.0 + beq.lpNorm<Eigen::Infinity>())) {
      throw Error(ErrorCode::Infeasible, "equality constraints are inconsistent");
    }
  }
  scalar_t viol = maxViolation(Ain, bin, x);
  if (viol <= kFeasTol) return x;

  const Eigen::Index mi = Ain.rows();
  const scalar_t delta = 1e-7 / (1.0 + viol * viol);
  matrix_t H1 = delta * matrix_t::Identity(d + 1, d + 1);
  vector_t g1 = vector_t::Zero(d + 1);
  g1(d) = 1.0;
  matrix_t Aeq1(Aeq.rows(), d + 1);
  if (Aeq.rows() > 0) {
    Aeq1 << Aeq, vector_t::Zero(Aeq.rows());
  }
  matrix_t Ain1(mi + 1, d + 1);
  vector_t bin1(mi + 1);
  Ain1.topLeftCorner(mi, d) = Ain;
  Ain1.topRightCorner(mi, 1) = -vector_t::Ones(mi);
  Ain1.bottomLeftCorner(1, d).setZero();
  Ain1(mi, d) = -1.0;
  bin1.head(mi) = bin;
  bin1(mi) = 0.0;

  vector_t x1(d + 1);
  x1.head(d) = x;
  x1(d) = viol + 1.0;
  ActiveSetSolution sol = runActiveSet(H1, g1, Aeq1, beq, Ain1, bin1, x1, maxIter);
  if (sol.x(d) > 1e-8) {
    throw Error(ErrorCode::Infeasible, "no point satisfies the constraints");
  }
  x = sol.x.head(d);

  // Restoration: pin near-active rows exactly to absorb phase-1 slack.
  for (int pass = 0; pass < 3 && maxViolation(Ain, bin, x) > 1e-12; ++pass) {
    std::vector<Eigen::Index> tight;
    for (Eigen::Index i = 0; i < mi; ++i) {
      if (Ain.row(i).dot(x) - bin(i) > -1e-12) tight.push_back(i);
    }
    matrix_t Aact(Aeq.rows() + static_cast<Eigen::Index>(tight.size()), d);
    vector_t ract(Aact.rows());
    if (Aeq.rows() > 0) {
      Aact.topRows(Aeq.rows()) = Aeq;
      ract.head(Aeq.rows()) = beq - Aeq * x;
    }
    for (size_t k = 0; k < tight.size(); ++k) {
      Aact.row(Aeq.rows() + static_cast<Eigen::Index>(k)) = Ain.row(tight[k]);
      ract(Aeq.rows() + static_cast<Eigen::Index>(k)) = bin(tight[k]) - Ain.row(tight[k]).dot(x);
    }
    x += leastSquares(Aact, ract);
  }
  if (maxViolation(Ain, bin, x) > kFeasTol) {
    throw Error(ErrorCode::Infeasible, "feasibility restoration failed");
  }
  return x;
}

void validate(const QuadraticProgram& qp) {
  const Eigen::Index d = qp.numVars();
  if (d <= 0) throw Error(ErrorCode::InvalidArgument, "QP has no variables");
  if (qp.H.rows() != d || qp.H.cols() != d) {
    throw Error(ErrorCode::InvalidArgument, "Hessian dimension mismatch");
  }
  if (qp.Aeq.rows() != qp.beq.size() || (qp.Aeq.rows() > 0 && qp.Aeq.cols() != d)) {
    throw Error(ErrorCode::InvalidArgument, "equality block dimension mismatch");
  }
  if (qp.Ain.rows() != qp.bin.size() || (qp.Ain.rows() > 0 && qp.Ain.cols() != d)) {
    throw Error(ErrorCode::InvalidArgument, "inequality block dimension mismatch");
  }
}

}  // namespace

vector_t solveQp(const QuadraticProgram& qp, QpReport* report) {
  validate(qp);
  const Eigen::Index d = qp.numVars();
  const Eigen::Index mi = qp.Ain.rows();
  const int maxIter = 200 + 25 * static_cast<int>(mi + d);

  const matrix_t H = 0.5 * (qp.H + qp.H.transpose());
  const matrix_t emptyA(0, d);
  const vector_t emptyB(0);
  const matrix_t& Aeq = qp.Aeq.rows() > 0 ? qp.Aeq : emptyA;
  const vector_t& beq = qp.Aeq.rows() > 0 ? qp.beq : emptyB;
  const matrix_t& Ain = mi > 0 ? qp.Ain : emptyA;
  const vector_t& bin = mi > 0 ? qp.bin : emptyB;

  vector_t x0 = findFeasiblePoint(Aeq, beq, Ain, bin, d, maxIter);
  ActiveSetSolution sol = runActiveSet(H, qp.g, Aeq, beq, Ain, bin, x0, maxIter);

  scalar_t feas = maxViolation(Ain, bin, sol.x);
  if (Aeq.rows() > 0) {
    feas = std::max(feas, (Aeq * sol.x - beq).lpNorm<Eigen::Infinity>());
  }
  if (feas > kFeasTol || sol.stationarity > kStatTol) {
    throw Error(ErrorCode::MaxIterations, "KKT tolerances not met");
  }
  if (report != nullptr) {
    report->iterations = sol.iterations;
    report->activeSet = sol.active;
    report->stationarity = sol.stationarity;
    report->feasibility = feas;
    report->lambdaEq = sol.lambdaEq;
    report->lambdaIn = sol.lambdaIn;
  }
  return sol.x;
}

vector_t solveEqualityQpSparse(const sparse_matrix_t& H, const vector_t& g,
                               const sparse_matrix_t& A, const vector_t& b) {
  const Eigen::Index n = g.size();
  const Eigen::Index m = b.size();
  if (H.rows() != n || H.cols() != n || A.cols() != n || A.rows() != m) {
    throw Error(ErrorCode::InvalidArgument, "KKT block dimension mismatch");
  }

  sparse_matrix_t K(n + m, n + m);
  std::vector<triplet_t> trips;
  trips.reserve(static_cast<size_t>(H.nonZeros() + 2 * A.nonZeros()) + 1);
  for (int k = 0; k < H.outerSize(); ++k) {
    for (sparse_matrix_t::InnerIterator it(H, k); it; ++it) {
      trips.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (int k = 0; k < A.outerSize(); ++k) {
    for (sparse_matrix_t::InnerIterator it(A, k); it; ++it) {
      trips.emplace_back(n + it.row(), it.col(), it.value());
      trips.emplace_back(it.col(), n + it.row(), it.value());
    }
  }
  K.setFromTriplets(trips.begin(), trips.end());
  K.makeCompressed();

  Eigen::SparseLU<sparse_matrix_t> lu(K);
  if (lu.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularKKT, "equality-QP KKT factorization failed");
  }
  vector_t rhs(n + m);
  rhs.head(n) = -g;
  rhs.tail(m) = b;
  vector_t z = lu.solve(rhs);
  for (int pass = 0; pass < 2; ++pass) {
    const vector_t r = rhs - K * z;
    if (r.lpNorm<Eigen::Infinity>() < 1e-12 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) break;
    z += lu.solve(r);
  }
  return z.head(n);
}

matrix_t solveLyapunov(const matrix_t& A) {
  const Eigen::Index n = A.rows();
  if (n == 0 || A.cols() != n) {
    throw Error(ErrorCode::InvalidArgument, "Lyapunov input must be square");
  }
  Eigen::EigenSolver<matrix_t> es(A, false);
  if (es.eigenvalues().real().maxCoeff() > -1e-12) {
    throw Error(ErrorCode::NotHurwitz, "matrix has an eigenvalue with nonnegative real part");
  }

  // vec(A'P + PA) = (I kron A' + A' kron I) vec(P)
  sparse_matrix_t M(n * n, n * n);
  std::vector<triplet_t> trips;
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      const scalar_t arc = A(r, c);
      if (arc == 0.0) continue;
      for (Eigen::Index i = 0; i < n; ++i) {
        trips.emplace_back(i * n + c, i * n + r, arc);  // I kron A'
        trips.emplace_back(c * n + i, r * n + i, arc);  // A' kron I
      }
    }
  }
  M.setFromTriplets(trips.begin(), trips.end());
  M.makeCompressed();

  Eigen::SparseLU<sparse_matrix_t> lu(M);
  if (lu.info() != Eigen::Success) {
    throw Error(ErrorCode::NotHurwitz, "Lyapunov operator is singular");
  }

  vector_t rhs = vector_t::Zero(n * n);
  for (Eigen::Index i = 0; i < n; ++i) rhs(i * n + i) = -1.0;
  vector_t p = lu.solve(rhs);

  auto reshape = [n](const vector_t& v) {
    matrix_t P(n, n);
    for (Eigen::Index c = 0; c < n; ++c) P.col(c) = v.segment(c * n, n);
    return P;
  };

  matrix_t P = reshape(p);
  P = 0.5 * (P + P.transpose());
  for (int pass = 0; pass < 3; ++pass) {
    const matrix_t R = A.transpose() * P + P * A + matrix_t::Identity(n, n);
    if (R.lpNorm<Eigen::Infinity>() <= 1e-12) break;
    vector_t rv(n * n);
    for (Eigen::Index c = 0; c < n; ++c) rv.segment(c * n, n) = -R.col(c);
    P += reshape(lu.solve(rv));
    P = 0.5 * (P + P.transpose());
  }
  return P;
}

vector_t solveHierarchical(const std::vector<Task>& stack) {
  if (stack.empty()) {
    throw Error(ErrorCode::InvalidArgument, "empty task stack");
  }
  Eigen::Index d = 0;
  for (const auto& task : stack) {
    if (task.A.rows() > 0) d = task.A.cols();
    if (task.C.rows() > 0) d = task.C.cols();
  }
  if (d == 0) throw Error(ErrorCode::InvalidArgument, "task stack has no constraints");
  for (const auto& task : stack) {
    if ((task.A.rows() > 0 && (task.A.cols() != d || task.A.rows() != task.b.size())) ||
        (task.C.rows() > 0 && (task.C.cols() != d || task.C.rows() != task.d.size()))) {
      throw Error(ErrorCode::InvalidArgument, "task dimension mismatch");
    }
  }

  matrix_t frozenA(0, d);
  vector_t frozenB(0);
  matrix_t accumC(0, d);
  vector_t accumD(0);
  vector_t x = vector_t::Zero(d);

  for (size_t level = 0; level < stack.size(); ++level) {
    const Task& task = stack[level];

    QuadraticProgram qp;
    qp.H = 1e-12 * matrix_t::Identity(d, d);
    qp.g = vector_t::Zero(d);
    if (task.A.rows() > 0) {
      qp.H += task.A.transpose() * task.A;
      qp.g = -task.A.transpose() * task.b;
    }
    if (task.C.rows() > 0) {
      matrix_t C(accumC.rows() + task.C.rows(), d);
      C << accumC, task.C;
      vector_t dd(accumD.size() + task.d.size());
      dd << accumD, task.d;
      accumC = std::move(C);
      accumD = std::move(dd);
    }
    qp.Aeq = frozenA;
    qp.beq = frozenB;
    qp.Ain = accumC;
    qp.bin = accumD;

    try {
      x = solveQp(qp);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Infeasible && level == 0) {
        throw Error(ErrorCode::Infeasible, "level-1 tasks are inconsistent");
      }
      throw;
    }

    if (task.A.rows() > 0) {
      matrix_t newA(frozenA.rows() + task.A.rows(), d);
      newA << frozenA, task.A;
      vector_t newB(frozenB.size() + task.A.rows());
      newB << frozenB, task.A * x;
      frozenA = std::move(newA);
      frozenB = std::move(newB);
    }
  }
  return x;
}

}  // namespace wbdrc
