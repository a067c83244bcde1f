#include "core/estimator.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "core/error.hpp"
#include "core/numsolve.hpp"

namespace wbdrc {

namespace {

// Explicit Euler keeps the triple pole of the observer stable up to
// dt*omega0 = 0.35; the quad-sim profile sits exactly on the boundary, so
// the check carries a relative pad against rounding of the product.
constexpr scalar_t kStepStabilityMargin = 0.35;

}  // namespace

matrix_t observerSystemMatrix(Eigen::Index nv) {
  matrix3_t block;
  block << -3.0, 1.0, 0.0,  //
      -3.0, 0.0, 1.0,       //
      -1.0, 0.0, 0.0;
  matrix_t A = matrix_t::Zero(3 * nv, 3 * nv);
  for (Eigen::Index r = 0; r < 3; ++r) {
    for (Eigen::Index c = 0; c < 3; ++c) {
      A.block(r * nv, c * nv, nv, nv) = block(r, c) * matrix_t::Identity(nv, nv);
    }
  }
  return A;
}

EstimatorGains makeEstimatorGains(const RobotModel& model, scalar_t omega0, scalar_t gamma,
                                  scalar_t thetaBound, int mafWindow) {
  if (omega0 <= 0.0 || gamma < 0.0 || thetaBound <= 0.0 || mafWindow < 1) {
    throw Error(ErrorCode::ConfigError, "estimator gains must be positive (omega0, bound, MAF)");
  }
  EstimatorGains gains;
  gains.omega0 = omega0;
  const Eigen::Index twoN = 2 * model.n();
  gains.gammaDiag = gamma * vector_t::Ones(twoN);
  gains.thetaMin = -thetaBound * vector_t::Ones(twoN);
  gains.thetaMax = thetaBound * vector_t::Ones(twoN);
  gains.P = solveLyapunov(observerSystemMatrix(model.nv()));
  gains.mafWindow = mafWindow;
  return gains;
}

EstimatorGains estimatorGainsForProfile(const RobotModel& model, const std::string& profile) {
  if (profile == "biped-sim") return makeEstimatorGains(model, 100.0, 5e4, 100.0, 7);
  if (profile == "quad-sim") return makeEstimatorGains(model, 350.0, 6e5, 100.0, 3);
  if (profile == "quad-exp") return makeEstimatorGains(model, 200.0, 6e3, 100.0, 5);
  throw Error(ErrorCode::ConfigError, "unknown estimator profile '" + profile + "'");
}

EstimatorState makeEstimatorState(const RobotModel& model, const vector_t& q,
                                  const vector_t& qd) {
  EstimatorState state;
  state.x1 = q;
  state.x2 = qd;
  state.x3 = vector_t::Zero(model.nv());
  state.thetaHat = vector_t::Zero(2 * model.n());
  return state;
}

matrix_t regressor(const vector_t& eq, const vector_t& eqd) {
  const Eigen::Index n = eq.size();
  if (eqd.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "regressor error vectors disagree in size");
  }
  matrix_t Eq = matrix_t::Zero(n, 2 * n);
  Eq.leftCols(n).diagonal() = eq;
  Eq.rightCols(n).diagonal() = eqd;
  return Eq;
}

vector_t project(const EstimatorGains& gains, const vector_t& thetaHat, const vector_t& v) {
  vector_t out = v;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const bool atMax = thetaHat(i) >= gains.thetaMax(i);
    const bool atMin = thetaHat(i) <= gains.thetaMin(i);
    if ((atMax && v(i) > 0.0) || (atMin && v(i) < 0.0)) out(i) = 0.0;
  }
  return out;
}

vector_t etaBar(const EstimatorState& state, const EstimatorGains& gains, const vector_t& q,
                const vector_t& qd) {
  const Eigen::Index nv = state.x1.size();
  vector_t eta(3 * nv);
  eta.head(nv) = q - state.x1;
  eta.segment(nv, nv) = (qd - state.x2) / gains.omega0;
  eta.tail(nv) = -state.x3 / (gains.omega0 * gains.omega0);
  return eta;
}

vector_t adaptationFunction(const EstimatorGains& gains, const RobotModel& model,
                            const matrix_t& Eq, const vector_t& etaBarVec) {
  const Eigen::Index nv = model.nv();
  // C1' picks the second block of P etaBar; S keeps its actuated rows.
  const vector_t secondBlock = (gains.P * etaBarVec).segment(nv, nv);
  return Eq.transpose() * secondBlock.tail(model.n()) / gains.omega0;
}

void adaptStep(EstimatorState& state, const EstimatorGains& gains, const vector_t& alpha,
               scalar_t dt) {
  const vector_t rate = project(gains, state.thetaHat, gains.gammaDiag.asDiagonal() * alpha);
  state.thetaHat += dt * rate;
  state.thetaHat = state.thetaHat.cwiseMax(gains.thetaMin).cwiseMin(gains.thetaMax);
}

void esoStep(EstimatorState& state, const EstimatorGains& gains, const RobotModel& model,
             const vector_t& q, const vector_t& qd, const vector_t& tau, const vector_t& Fref,
             const std::vector<int>& contactIds, const matrix_t& Eq, scalar_t dt) {
  const scalar_t w = gains.omega0;
  if (dt * w > kStepStabilityMargin * (1.0 + 1e-9)) {
    throw Error(ErrorCode::GainTooHighForStep,
                "dt*omega0 exceeds the explicit-Euler stability margin 0.35");
  }
  if (Eq.rows() != model.n() || Eq.cols() != 2 * model.n()) {
    throw Error(ErrorCode::InvalidArgument, "regressor must be n x 2n");
  }
  if (Fref.size() != 3 * static_cast<Eigen::Index>(contactIds.size())) {
    throw Error(ErrorCode::InvalidArgument, "reference force size must match the contact set");
  }
  const matrix_t D = model.massMatrix(q);
  const Eigen::LDLT<matrix_t> ldlt(D);
  vector_t generalized = model.selectionMatrix().transpose() * tau - model.biasForces(q, qd);
  if (!contactIds.empty()) {
    generalized += model.contactJacobian(q, contactIds).transpose() * Fref;
  }
  const vector_t nominalAccel = ldlt.solve(generalized);  // f0 + g0 uhat

  const vector_t iota = q - state.x1;
  const vector_t x1dot = state.x2 + 3.0 * w * iota;
  vector_t x2dot = nominalAccel + state.x3 + 3.0 * w * w * iota;
  x2dot.tail(model.n()) += Eq * state.thetaHat;
  const vector_t x3dot = w * w * w * iota;

  state.x1 += dt * x1dot;
  state.x2 += dt * x2dot;
  state.x3 += dt * x3dot;
}

vector_t estimateDisturbance(const EstimatorState& state, const RobotModel& model,
                             const vector_t& q, const matrix_t& Eq) {
  vector_t inner = state.x3;
  inner.tail(model.n()) += Eq * state.thetaHat;
  return model.massMatrix(q) * inner;
}

MovingAverageFilter::MovingAverageFilter(int window) : window_(window) {
  if (window < 1) throw Error(ErrorCode::ConfigError, "MAF window must be at least 1");
}

vector_t MovingAverageFilter::filter(const vector_t& sample) {
  buffer_.push_back(sample);
  if (static_cast<int>(buffer_.size()) > window_) buffer_.pop_front();
  vector_t mean = vector_t::Zero(sample.size());
  for (const vector_t& v : buffer_) mean += v;
  return mean / static_cast<scalar_t>(buffer_.size());
}

DisturbanceEstimator::DisturbanceEstimator(const RobotModel& model, EstimatorGains gains)
    : model_(model),
      gains_(std::move(gains)),
      state_(makeEstimatorState(model, vector_t::Zero(model.nv()), vector_t::Zero(model.nv()))),
      maf_(gains_.mafWindow),
      lastRaw_(vector_t::Zero(model.nv())) {}

void DisturbanceEstimator::reset(const vector_t& q, const vector_t& qd) {
  state_ = makeEstimatorState(model_, q, qd);
  maf_.reset();
  lastRaw_.setZero();
}

vector_t DisturbanceEstimator::tick(const vector_t& q, const vector_t& qd, const vector_t& qRef,
                                    const vector_t& qdRef, const vector_t& tau,
                                    const vector_t& Fref, const std::vector<int>& contactIds,
                                    scalar_t dt) {
  const Eigen::Index n = model_.n();
  const matrix_t Eq = regressor(qRef.tail(n) - q.tail(n), qdRef.tail(n) - qd.tail(n));
  const vector_t eta = etaBar(state_, gains_, q, qd);
  const vector_t alpha = adaptationFunction(gains_, model_, Eq, eta);
  esoStep(state_, gains_, model_, q, qd, tau, Fref, contactIds, Eq, dt);
  adaptStep(state_, gains_, alpha, dt);
  lastRaw_ = estimateDisturbance(state_, model_, q, Eq);
  return maf_.filter(lastRaw_);
}

}  // namespace wbdrc
