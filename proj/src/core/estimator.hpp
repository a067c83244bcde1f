#pragma once

#include <deque>
#include <string>
#include <vector>

#include "core/robot_model.hpp"
#include "core/types.hpp"

namespace wbdrc {

// Adaptive extended-state disturbance observer. State x1/x2 estimate the
// generalized position/velocity, x3 the acceleration-level disturbance, and
// thetaHat the joint-space PD-form uncertainty parameters with regressor
// E_q = [diag(e_q), diag(de_q)].
struct EstimatorState {
  vector_t x1, x2, x3;  // nv each
  vector_t thetaHat;    // 2n
};

struct EstimatorGains {
  scalar_t omega0 = 0.0;  // observer bandwidth, 1/s
  vector_t gammaDiag;     // 2n, diagonal of the adaptation-rate matrix
  vector_t thetaMin;      // 2n
  vector_t thetaMax;      // 2n
  matrix_t P;             // 3nv x 3nv, solves A'P + PA = -I
  int mafWindow = 1;
};

// A = [[-3,1,0],[-3,0,1],[-1,0,0]] (x) I_nv: the scaled observer-error
// system matrix (error flow is eta_dot = omega0 * A * eta plus couplings).
matrix_t observerSystemMatrix(Eigen::Index nv);

EstimatorGains makeEstimatorGains(const RobotModel& model, scalar_t omega0, scalar_t gamma,
                                  scalar_t thetaBound, int mafWindow);

// Named profiles: "biped-sim" (omega0 100, gamma 5e4, MAF 7),
// "quad-sim" (350, 6e5, 3), "quad-exp" (200, 6e3, 5); theta bounds +-100.
EstimatorGains estimatorGainsForProfile(const RobotModel& model, const std::string& profile);

// x1 = q, x2 = qd, x3 = 0, thetaHat = 0.
EstimatorState makeEstimatorState(const RobotModel& model, const vector_t& q,
                                  const vector_t& qd);

// E_q = [diag(eq), diag(eqd)], n x 2n, from joint-space tracking errors.
matrix_t regressor(const vector_t& eq, const vector_t& eqd);

// Componentwise discontinuous projection: zeroes rate components that push
// thetaHat outward at an active bound, passes everything else through.
vector_t project(const EstimatorGains& gains, const vector_t& thetaHat, const vector_t& v);

// Measurable scaled estimation error
// etaBar = [x1 - xh1; (x2 - xh2)/omega0; -xh3/omega0^2].
vector_t etaBar(const EstimatorState& state, const EstimatorGains& gains, const vector_t& q,
                const vector_t& qd);

// alpha = E_q' S C1' P etaBar / omega0 with C1 the second-block injector.
vector_t adaptationFunction(const EstimatorGains& gains, const RobotModel& model,
                            const matrix_t& Eq, const vector_t& etaBarVec);

// thetaHat += dt * project(thetaHat, Gamma alpha), then clamped to the bounds
// (discrete-time overshoot guard).
void adaptStep(EstimatorState& state, const EstimatorGains& gains, const vector_t& alpha,
               scalar_t dt);

// Explicit-Euler update of the three observer equations with innovation
// iota = q - xh1, f0 = -D^-1 (C qd + G), g0 uhat = D^-1 (S' tau + J' Fref).
// Throws GainTooHighForStep when dt * omega0 exceeds the 0.35 Euler margin.
void esoStep(EstimatorState& state, const EstimatorGains& gains, const RobotModel& model,
             const vector_t& q, const vector_t& qd, const vector_t& tau, const vector_t& Fref,
             const std::vector<int>& contactIds, const matrix_t& Eq, scalar_t dt);

// fhat = D(x1) (xh3 + S' E_q thetaHat), generalized force.
vector_t estimateDisturbance(const EstimatorState& state, const RobotModel& model,
                             const vector_t& q, const matrix_t& Eq);

class MovingAverageFilter {
 public:
  explicit MovingAverageFilter(int window);
  // Mean of the last `window` samples (fewer during startup).
  vector_t filter(const vector_t& sample);
  void reset() { buffer_.clear(); }

 private:
  int window_;
  std::deque<vector_t> buffer_;
};

// One controller tick of the full estimator pipeline: regressor, adaptation,
// observer update, reconstruction, moving-average smoothing.
class DisturbanceEstimator {
 public:
  DisturbanceEstimator(const RobotModel& model, EstimatorGains gains);

  // Returns the filtered generalized disturbance force fhat_filter.
  vector_t tick(const vector_t& q, const vector_t& qd, const vector_t& qRef,
                const vector_t& qdRef, const vector_t& tau, const vector_t& Fref,
                const std::vector<int>& contactIds, scalar_t dt);

  const EstimatorState& state() const { return state_; }
  const EstimatorGains& gains() const { return gains_; }
  const vector_t& lastRaw() const { return lastRaw_; }
  void reset(const vector_t& q, const vector_t& qd);

 private:
  const RobotModel& model_;
  EstimatorGains gains_;
  EstimatorState state_;
  MovingAverageFilter maf_;
  vector_t lastRaw_;
};

}  // namespace wbdrc
