// Dense numerical kernels shared by the controller modules: convex QP solver
// (primal active set), continuous Lyapunov-equation solver, and strict-priority
// hierarchical least squares.
#pragma once

#include <vector>

#include "core/error.hpp"
#include "core/types.hpp"

namespace wbdrc {

// min 1/2 x'Hx + g'x  s.t.  Aeq x = beq,  Ain x <= bin.
// Empty constraint blocks (0 rows) are allowed.
struct QuadraticProgram {
  matrix_t H;
  vector_t g;
  matrix_t Aeq;
  vector_t beq;
  matrix_t Ain;
  vector_t bin;

  Eigen::Index numVars() const { return g.size(); }
};

struct QpReport {
  int iterations = 0;
  std::vector<Eigen::Index> activeSet;  // active inequality rows at the solution
  scalar_t stationarity = 0.0;          // inf-norm of the KKT stationarity residual
  scalar_t feasibility = 0.0;           // inf-norm of the constraint violation
  vector_t lambdaEq;                    // equality multipliers
  vector_t lambdaIn;                    // inequality multipliers (zero when inactive)
};

// Throws Error{Infeasible, Unbounded, MaxIterations}.
vector_t solveQp(const QuadraticProgram& qp, QpReport* report = nullptr);

// Equality-constrained QP solved through its sparse KKT system; the fast path
// for the large structured subproblems of the MPC transcription. H must carry
// both triangles of the symmetric Hessian. Throws Error{SingularKKT}.
vector_t solveEqualityQpSparse(const sparse_matrix_t& H, const vector_t& g,
                               const sparse_matrix_t& A, const vector_t& b);

// Solves A'P + PA = -I by Kronecker vectorization (sparse assembly + LU).
// Throws Error{NotHurwitz} if any eigenvalue of A has a nonnegative real part.
// The returned P is symmetric positive definite with residual
// ||A'P + PA + I||_inf <= 1e-10.
matrix_t solveLyapunov(const matrix_t& A);

// One priority level: equalities A x = b (least-squares objective) and hard
// inequalities C x <= d. Either block may be empty.
struct Task {
  matrix_t A;
  vector_t b;
  matrix_t C;
  vector_t d;

  Task() = default;
  Task(matrix_t A_, vector_t b_, matrix_t C_, vector_t d_)
      : A(std::move(A_)), b(std::move(b_)), C(std::move(C_)), d(std::move(d_)) {}
};

// Strict-priority least squares over an ordered task stack: level k minimizes
// ||A_k x - b_k||^2 subject to every earlier level keeping its achieved
// residual (residual-freezing equality constraints) and to the inequalities of
// levels <= k. Throws Error{Infeasible} when level 1 is inconsistent.
vector_t solveHierarchical(const std::vector<Task>& stack);

}  // namespace wbdrc
