#include "core/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <memory>

#include "core/error.hpp"
#include "core/estimator.hpp"
#include "core/gait.hpp"
#include "core/model_library.hpp"
#include "core/robot_model.hpp"
#include "core/sim.hpp"
#include "core/wbc.hpp"

namespace wbdrc {
namespace {

constexpr scalar_t kTickDt = 1e-3;

int mpcPeriodTicks(const std::string& profile) {
  if (profile == "biped-sim") return 20;  // 50 Hz
  if (profile == "quad-exp") return 10;   // 100 Hz
  return 50;                              // quad-sim, 20 Hz
}

MpcSettings mpcSettingsFor(const Scenario& scenario) {
  MpcSettings settings;
  settings.horizon = scenario.mpcHorizon > 0.0 ? scenario.mpcHorizon : 0.6;
  settings.nodes = scenario.mpcNodes > 0 ? scenario.mpcNodes : 16;
  return settings;
}

Eigen::Index heightIndex(const RobotModel& model) {
  for (Eigen::Index i = 0; i < model.nb(); ++i) {
    if (model.joints()[static_cast<size_t>(i)].type == JointType::PZ) return i;
  }
  throw Error(ErrorCode::ConfigError, "model has no vertical base coordinate");
}

void validateDisturbance(const RobotModel& model, const Scenario& scenario) {
  for (const TorqueScaleSpec& spec : scenario.disturbance.torqueScales) {
    bool found = false;
    for (const Joint& joint : model.joints()) {
      if (joint.name == spec.joint) {
        if (!joint.actuated) {
          throw Error(ErrorCode::ConfigError,
                      "torque_scale joint '" + spec.joint + "' is not actuated");
        }
        found = true;
        break;
      }
    }
    if (!found) {
      throw Error(ErrorCode::ConfigError, "torque_scale joint '" + spec.joint + "' does not exist");
    }
  }
  if (scenario.disturbance.payload.mass > 0.0) {
    try {
      model.bodyIndex(scenario.disturbance.payload.body);
    } catch (const Error&) {
      throw Error(ErrorCode::ConfigError,
                  "payload body '" + scenario.disturbance.payload.body + "' does not exist");
    }
  }
}

std::vector<int> stanceContacts(const ModelInfo& info, const ContactSchedule& schedule,
                                scalar_t t) {
  std::vector<int> ids;
  const std::vector<int> flags = schedule.contactState(t);
  for (size_t leg = 0; leg < info.legContacts.size(); ++leg) {
    if (flags[leg] == 0) continue;
    ids.insert(ids.end(), info.legContacts[leg].begin(), info.legContacts[leg].end());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

class CsvTrace {
 public:
  CsvTrace(const std::string& path, const Scenario& scenario, const std::string& variant,
           unsigned seed, const RobotModel& model) {
    file_ = std::fopen(path.c_str(), "w");
    if (file_ == nullptr) {
      throw Error(ErrorCode::ConfigError, "cannot open trace file '" + path + "'");
    }
    std::fprintf(file_, "# wbdrc-csv v1\n");
    std::fprintf(file_, "# scenario %s variant %s seed %u\n", scenario.name.c_str(),
                 variant.c_str(), seed);
    const auto block = [&](const char* label, Eigen::Index count) {
      for (Eigen::Index i = 0; i < count; ++i) std::fprintf(file_, ",%s%d", label, static_cast<int>(i));
    };
    std::fprintf(file_, "t");
    block("q", model.nv());
    block("qd", model.nv());
    std::fprintf(file_, ",base_height");
    block("fhat", model.nv());
    block("theta", 2 * model.n());
    block("x3", model.nv());
    block("F", 3 * model.numContacts());
    block("Fr", 3 * model.numContacts());
    block("ud", model.n());
    block("d", model.nv());
    std::fprintf(file_, "\n");
  }

  ~CsvTrace() {
    if (file_ != nullptr) std::fclose(file_);
  }
  CsvTrace(const CsvTrace&) = delete;
  CsvTrace& operator=(const CsvTrace&) = delete;

  void value(scalar_t v) { std::fprintf(file_, ",%.12g", v); }
  void vec(const vector_t& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) value(v(i));
  }
  void beginRow(scalar_t t) { std::fprintf(file_, "%.12g", t); }
  void endRow() { std::fprintf(file_, "\n"); }

 private:
  std::FILE* file_ = nullptr;
};

}  // namespace

RunReport runScenario(const Scenario& scenario, const RunOptions& options) {
  const std::string variant =
      options.variantOverride.empty() ? scenario.variant : options.variantOverride;
  if (variant != "wbdrc" && variant != "standard") {
    throw Error(ErrorCode::ConfigError, "variant must be wbdrc or standard, got '" + variant + "'");
  }
  const std::string outDir = options.outDirOverride.empty() ? scenario.outDir : options.outDirOverride;
  const std::string profile = gainsProfileFor(scenario);

  ModelInfo info = makeBuiltinModel(scenario.robot);
  const RobotModel& model = info.model;
  const Eigen::Index nv = model.nv();
  const Eigen::Index n = model.n();
  const Eigen::Index nc = model.numContacts();
  const Eigen::Index hIdx = heightIndex(model);

  Scenario resolved = scenario;
  if (resolved.disturbance.payload.mass > 0.0 && resolved.disturbance.payload.body.empty()) {
    resolved.disturbance.payload.body = info.payloadBody;
  }
  validateDisturbance(model, resolved);

  Command command = resolved.command;
  if (command.height <= 0.0) command.height = info.desiredHeight;

  const ContactSchedule schedule = makeContactSchedule(
      resolved.gait, static_cast<int>(info.legContacts.size()), resolved.cycleDuration);
  Simulator sim(model, info.legContacts, schedule, resolved.disturbance, kTickDt, 4);
  sim.reset(info.standPose, vector_t::Zero(nv));

  DisturbanceEstimator estimator(model, estimatorGainsForProfile(model, profile));
  estimator.reset(info.standPose, vector_t::Zero(nv));
  const WbcSetup setup = wbcSetupForProfile(model, profile);
  const MpcSettings mpcSettings = mpcSettingsFor(resolved);
  const int mpcPeriod = mpcPeriodTicks(profile);

  RunReport report;
  report.variant = variant;
  std::unique_ptr<CsvTrace> trace;
  if (options.writeCsv) {
    std::filesystem::create_directories(outDir);
    report.csvPath = (std::filesystem::path(outDir) / (resolved.name + "-" + variant + ".csv")).string();
    trace = std::make_unique<CsvTrace>(report.csvPath, resolved, variant, options.seed, model);
  }

  auto warn = [&](const std::string& message) {
    if (report.warnings.size() < 20) report.warnings.push_back(message);
  };

  MpcSolution plan;
  bool havePlan = false;
  ReferenceTrajectory traj;
  int planFailures = 0;
  vector_t lastCommand = vector_t::Zero(n);
  int holdTicks = 0;

  RunMetrics& metrics = report.metrics;
  scalar_t heightSq = 0.0;
  std::vector<scalar_t> estimatorError;
  const int ticks = static_cast<int>(std::llround(resolved.duration / kTickDt));
  int logged = 0;

  for (int k = 0; k < ticks; ++k) {
    const scalar_t t = static_cast<scalar_t>(k) * kTickDt;
    const vector_t q = sim.simState().state.q;
    const vector_t qd = sim.simState().state.qd;

    if (!q.allFinite() || !qd.allFinite()) {
      metrics.fell = true;
      metrics.fallTime = t;
      warn("state became non-finite at t=" + std::to_string(t));
      break;
    }
    const scalar_t height = q(hIdx);
    if (height < 0.5 * command.height) {
      metrics.fell = true;
      metrics.fallTime = t;
      break;
    }

    if (k % mpcPeriod == 0) {
      try {
        plan = solveMpc(info, mpcSettings, schedule, command, t, q, qd, havePlan ? &plan : nullptr);
        traj = reconstructReference(model, plan);
        havePlan = true;
        planFailures = 0;
        ++metrics.mpcSolves;
      } catch (const Error& e) {
        ++metrics.mpcFailures;
        ++planFailures;
        if (!havePlan || planFailures > 3) {
          throw Error(ErrorCode::ControllerFault,
                      "planner failed with no usable trajectory: " + std::string(e.what()));
        }
        warn("planner failure at t=" + std::to_string(t) + ", holding previous plan: " + e.what());
      }
    }

    const ReferenceSample ref = traj.sample(t);
    const std::vector<int> stanceIds = stanceContacts(info, schedule, t);
    vector_t Fref = vector_t::Zero(3 * static_cast<Eigen::Index>(stanceIds.size()));
    for (size_t i = 0; i < stanceIds.size(); ++i) {
      Fref.segment<3>(3 * static_cast<Eigen::Index>(i)) = ref.F.segment<3>(3 * stanceIds[i]);
    }

    // The observer input uses the foot forces the plant actually produced over
    // the last period (pinned contacts would otherwise absorb base wrenches
    // into the reference-force mismatch, hiding them from the estimate). The
    // first tick has no measurement yet and seeds with the reference statics.
    vector_t Fobs = Fref;
    if (k > 0) {
      for (size_t i = 0; i < stanceIds.size(); ++i) {
        Fobs.segment<3>(3 * static_cast<Eigen::Index>(i)) =
            sim.simState().contactForces.segment<3>(3 * stanceIds[i]);
      }
    }
    const vector_t fhat =
        estimator.tick(q, qd, ref.q, ref.qd, lastCommand, Fobs, stanceIds, kTickDt);
    const EstimatorState& est = estimator.state();
    const EstimatorGains& gains = estimator.gains();
    if (((est.thetaHat - gains.thetaMin).array() < -1e-12).any() ||
        ((gains.thetaMax - est.thetaHat).array() < -1e-12).any()) {
      metrics.thetaInBounds = false;
    }

    const bool injectEstimate = variant == "wbdrc" && !options.zeroEstimate;
    const vector_t fhatUsed = injectEstimate ? fhat : vector_t(vector_t::Zero(nv));

    vector_t ud;
    vector_t FrFull = vector_t::Zero(3 * nc);
    try {
      const WrenchCommand wrench =
          redistributeGrf(model, setup, fhatUsed, ref.q, Fref, stanceIds, ref.tau);
      const matrix_t Jst = model.contactJacobian(ref.q, stanceIds);
      vector_t realized = Jst.transpose() * wrench.Fr + wrench.fhatW;
      realized.tail(n) += ref.tau;
      metrics.wrenchIdentityMax = std::max(metrics.wrenchIdentityMax,
                                           (wrench.desiredW - realized).lpNorm<Eigen::Infinity>());
      const WbcSolution wbc =
          solveWbc(model, setup, q, qd, stanceIds, ref.qdd, wrench.Fr, wrench.fhatW);
      ud = jointTorqueCommand(setup, wbc.tau, ref.q.tail(n), ref.qd.tail(n), q.tail(n), qd.tail(n));
      for (size_t i = 0; i < stanceIds.size(); ++i) {
        FrFull.segment<3>(3 * stanceIds[i]) = wrench.Fr.segment<3>(3 * static_cast<Eigen::Index>(i));
      }
      holdTicks = 0;
    } catch (const Error& e) {
      ++metrics.wbcHolds;
      ud = holdTicks == 0 ? lastCommand : vector_t(vector_t::Zero(n));
      ++holdTicks;
      warn("whole-body stage infeasible at t=" + std::to_string(t) + ": " + e.what());
    }

    const vector_t injected = wrenchGeneralizedForce(model, resolved.disturbance, t);
    const scalar_t deviation = std::abs(height - command.height);
    heightSq += (height - command.height) * (height - command.height);
    metrics.maxHeightDeviation = std::max(metrics.maxHeightDeviation, deviation);
    estimatorError.push_back(
        (fhat.head(model.nb()) - injected.head(model.nb())).lpNorm<Eigen::Infinity>());

    if (trace) {
      trace->beginRow(t);
      trace->vec(q);
      trace->vec(qd);
      trace->value(height);
      trace->vec(fhat);
      trace->vec(est.thetaHat);
      trace->vec(est.x3);
      trace->vec(sim.simState().contactForces);
      trace->vec(FrFull);
      trace->vec(ud);
      trace->vec(injected);
      trace->endRow();
    }
    ++logged;

    sim.step(ud);
    lastCommand = ud;
    metrics.simulatedDuration = t + kTickDt;
  }

  metrics.heightRmse = logged > 0 ? std::sqrt(heightSq / logged) : 0.0;
  const size_t window = estimatorError.size() / 5;
  if (window > 0) {
    scalar_t sum = 0.0;
    for (size_t i = estimatorError.size() - window; i < estimatorError.size(); ++i) {
      sum += estimatorError[i];
    }
    metrics.estimatorSteadyError = sum / static_cast<scalar_t>(window);
  }
  metrics.unilateralViolations = sim.unilateralViolationCount();
  for (size_t i = 0; i < sim.warnings().size() && i < 5; ++i) warn(sim.warnings()[i]);
  return report;
}

CompareReport compareScenario(const Scenario& scenario, const RunOptions& options) {
  CompareReport report;
  RunOptions variantOptions = options;
  variantOptions.variantOverride = "wbdrc";
  report.wbdrc = runScenario(scenario, variantOptions);
  variantOptions.variantOverride = "standard";
  report.standard = runScenario(scenario, variantOptions);
  const scalar_t a = report.wbdrc.metrics.heightRmse;
  const scalar_t b = report.standard.metrics.heightRmse;
  report.rmseRatio = b > 0.0 ? a / b : (a == 0.0 ? 1.0 : std::numeric_limits<scalar_t>::infinity());
  return report;
}

}  // namespace wbdrc
