// Copyright 2026 The Tustin-Net Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tustin/mpc.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "tustin/errors.h"

namespace tustin {
namespace {

double WrapAngle(double a) {
  double r = std::remainder(a, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

TorquePlan Project(const TorquePlan& u, double u_max) {
  return u.cwiseMax(-u_max).cwiseMin(u_max);
}

// Length in N m of the projected step of fixed size `step`.
double Stationarity(const TorquePlan& u, const TorquePlan& gradient,
                    double step, double u_max) {
  return (u - Project(u - step * gradient, u_max)).norm();
}

double Dot(const TorquePlan& a, const TorquePlan& b) {
  return (a.array() * b.array()).sum();
}

Eigen::Vector4d ToPacked(const PlantState& s, const TustinNetModel& model) {
  return ToNetState(s, model).ToVector();
}

PlantState FromPacked(const Eigen::Vector4d& x, const TustinNetModel& model) {
  return ToPlantState(NetState::FromVector(x), model);
}

}  // namespace

Eigen::Vector4d TustinNetStepModel::Next(const Eigen::Vector4d& x,
                                         const Torque& u) const {
  return Step(model_, NetState::FromVector(x), u).ToVector();
}

void TustinNetStepModel::Jacobians(const Eigen::Vector4d& x, const Torque& u,
                                   Eigen::Matrix4d* A,
                                   Eigen::Matrix<double, 4, 2>* B) const {
  const StepJacobians jac = ComputeStepJacobians(
      model_, NetState::FromVector(x), u, JacobianParts::kStateInput);
  *A = jac.state;
  *B = jac.input;
}

void MpcConfig::Validate() const {
  if (horizon < 1) throw std::invalid_argument("MPC horizon must be >= 1");
  if (!(u_max >= 0.0)) throw std::invalid_argument("u_max must be >= 0");
  if (max_iterations < 0) throw std::invalid_argument("max_iterations < 0");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(Q).eigenvalues().minCoeff() <
          -1e-12) {
    throw std::invalid_argument("Q must be symmetric positive semi-definite");
  }
  if ((R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(R).eigenvalues().minCoeff() <=
          0.0) {
    throw std::invalid_argument("R must be symmetric positive definite");
  }
}

Eigen::Vector4d StateError(const StepModel& model, const Eigen::Vector4d& x,
                           const Eigen::Vector4d& reference) {
  const double as = model.angle_scale();
  const double vs = model.velocity_scale();
  Eigen::Vector4d e;
  e[0] = WrapAngle(as * x[0] - reference[0]) / as;
  e[1] = x[1] - reference[1] / vs;
  e[2] = WrapAngle(as * x[2] - reference[2]) / as;
  e[3] = x[3] - reference[3] / vs;
  return e;
}

CostAndGradient HorizonCost(const StepModel& model, const Eigen::Vector4d& s0,
                            const TorquePlan& torques, const MpcConfig& config,
                            const Torque& previous_torque) {
  const Eigen::Index n = torques.rows();
  const double ts = model.torque_scale();
  std::vector<Eigen::Vector4d> xs(n + 1);
  std::vector<Eigen::Matrix4d> As(n);
  std::vector<Eigen::Matrix<double, 4, 2>> Bs(n);
  xs[0] = s0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Torque u = torques.row(k).transpose();
    model.Jacobians(xs[k], u, &As[k], &Bs[k]);
    xs[k + 1] = model.Next(xs[k], u);
  }

  CostAndGradient out;
  out.gradient = TorquePlan::Zero(n, 2);
  std::vector<Torque> v(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Torque prev = k == 0 ? previous_torque
                               : Torque(torques.row(k - 1).transpose());
    const Torque u = torques.row(k).transpose();
    v[k] = (config.weight_increments ? Torque(u - prev) : u) / ts;
    out.cost += v[k].dot(config.R * v[k]);
  }
  Eigen::Vector4d lambda = Eigen::Vector4d::Zero();
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    const Eigen::Vector4d e = StateError(model, xs[k + 1], config.reference);
    out.cost += e.dot(config.Q * e);
    lambda += 2.0 * config.Q * e;
    Torque g = Bs[k].transpose() * lambda + 2.0 * config.R * v[k] / ts;
    if (config.weight_increments && k + 1 < n) {
      g -= 2.0 * config.R * v[k + 1] / ts;
    }
    out.gradient.row(k) = g.transpose();
    lambda = As[k].transpose() * lambda;
  }
  return out;
}

TorquePlan ShiftWarmStart(const TorquePlan& previous) {
  TorquePlan next = previous;
  const Eigen::Index n = previous.rows();
  if (n > 1) next.topRows(n - 1) = previous.bottomRows(n - 1);
  return next;
}

MpcSolution SolveMpc(const StepModel& model, const Eigen::Vector4d& s0,
                     const MpcConfig& config,
                     const std::optional<TorquePlan>& warm_start,
                     const Torque& previous_torque) {
  config.Validate();
  const Eigen::Index n = config.horizon;
  TorquePlan u = TorquePlan::Zero(n, 2);
  if (warm_start) {
    if (warm_start->rows() != n) {
      throw DimensionError("warm start length differs from the MPC horizon");
    }
    u = *warm_start;
  }
  u = Project(u, config.u_max);
  CostAndGradient cg = HorizonCost(model, s0, u, config, previous_torque);

  // Exact curvature of the input penalty sets the first trial step.
  const double ts = model.torque_scale();
  const double curvature =
      2.0 * Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(config.R)
                .eigenvalues()
                .maxCoeff() /
      (ts * ts) * (config.weight_increments ? 4.0 : 1.0);
  const double step0 = 1.0 / curvature;
  double alpha = step0;
  constexpr double kArmijo = 1e-4;

  MpcSolution sol;
  for (int it = 0; it < config.max_iterations; ++it) {
    if (Stationarity(u, cg.gradient, step0, config.u_max) <
        config.gradient_tolerance) {
      sol.converged = true;
      break;
    }
    bool accepted = false;
    TorquePlan u_new;
    CostAndGradient cg_new;
    for (int bt = 0; bt < 60; ++bt) {
      u_new = Project(u - alpha * cg.gradient, config.u_max);
      const TorquePlan d = u_new - u;
      if (d.squaredNorm() == 0.0) break;
      cg_new = HorizonCost(model, s0, u_new, config, previous_torque);
      if (cg_new.cost <= cg.cost + kArmijo * Dot(cg.gradient, d)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    const TorquePlan s = u_new - u;
    const TorquePlan y = cg_new.gradient - cg.gradient;
    const double sy = Dot(s, y);
    alpha = sy > 0.0 ? s.squaredNorm() / sy : 2.0 * alpha;
    u = u_new;
    cg = std::move(cg_new);
    ++sol.iterations;
  }
  if (!sol.converged) {
    sol.converged = Stationarity(u, cg.gradient, step0, config.u_max) <
                    config.gradient_tolerance;
  }

  sol.torques = u;
  sol.cost = cg.cost;
  sol.predicted.reserve(n + 1);
  sol.predicted.push_back(s0);
  for (Eigen::Index k = 0; k < n; ++k) {
    sol.predicted.push_back(
        model.Next(sol.predicted.back(), u.row(k).transpose()));
  }
  return sol;
}

const char* FilterName(FilterKind kind) {
  switch (kind) {
    case FilterKind::kUkf:
      return "ukf";
    case FilterKind::kEkf:
      return "ekf";
    case FilterKind::kJukf:
      return "jukf";
  }
  return "?";
}

FilterKind ParseFilter(const std::string& name) {
  if (name == "ukf") return FilterKind::kUkf;
  if (name == "ekf") return FilterKind::kEkf;
  if (name == "jukf") return FilterKind::kJukf;
  throw std::invalid_argument("unknown filter '" + name + "'");
}

ClosedLoopLog ClosedLoop(const PendulumParams& plant,
                         const TustinNetModel& model,
                         const ClosedLoopConfig& loop, const MpcConfig& mpc,
                         const PlantState& x0) {
  plant.Validate();
  model.Validate();
  mpc.Validate();
  if (loop.adaptive && loop.filter != FilterKind::kJukf) {
    throw std::invalid_argument("adaptation requires the joint UKF");
  }
  if (!(loop.duration > 0.0)) throw std::invalid_argument("duration <= 0");

  GaussianBelief belief;
  belief.mean = loop.initial_estimate
                    ? ToPacked(PlantState::FromVector(*loop.initial_estimate),
                               model)
                    : ToPacked(x0, model);
  const double sp = loop.initial_position_sigma / model.angle_scale;
  const double sv = loop.initial_velocity_sigma / model.velocity_scale;
  belief.covariance = Eigen::Vector4d(sp * sp, sv * sv, sp * sp, sv * sv)
                          .asDiagonal();
  if (loop.filter == FilterKind::kJukf) {
    belief = MakeJointBelief(model, belief, loop.parameter_variance);
  }

  std::mt19937_64 rng(loop.noise_seed);
  std::normal_distribution<double> noise(0.0, loop.noise.measurement_sigma);

  const long steps = std::lround(loop.duration / model.Ts);
  ClosedLoopLog log;
  log.samples.reserve(static_cast<std::size_t>(steps));
  TustinNetModel current = model;
  PlantState x = x0;
  Torque u_prev = Torque::Zero();
  std::optional<TorquePlan> warm;

  for (long k = 0; k < steps; ++k) {
    Eigen::Vector2d y = x.angles();
    if (loop.measurement_noise) {
      y[0] += noise(rng);
      y[1] += noise(rng);
    }
    if (k > 0) {
      switch (loop.filter) {
        case FilterKind::kUkf:
          belief = UkfPredict(current, belief, u_prev, loop.noise, loop.ukf);
          break;
        case FilterKind::kEkf:
          belief = EkfPredict(current, belief, u_prev, loop.noise);
          break;
        case FilterKind::kJukf:
          belief = JukfPredict(model, belief, u_prev, loop.noise, loop.ukf);
          break;
      }
    }
    const UpdateResult update =
        loop.filter == FilterKind::kEkf
            ? EkfUpdate(current, belief, y, loop.noise)
            : UkfUpdate(current, belief, y, loop.noise, loop.ukf);
    belief = update.belief;
    if (loop.adaptive) current = ExtractModel(model, belief);

    const GaussianBelief state = StateMarginal(belief);
    const MpcSolution sol = SolveMpc(TustinNetStepModel(current), state.mean,
                                     mpc, warm, u_prev);
    Torque u = sol.torques.row(0).transpose();
    u = u.cwiseMax(-mpc.u_max).cwiseMin(mpc.u_max);

    ClosedLoopSample sample;
    sample.t = static_cast<double>(k) * model.Ts;
    sample.state = x;
    sample.torque = u;
    sample.estimate = FromPacked(state.mean, model);
    const Eigen::Vector4d sd = state.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    sample.estimate_sigma << sd[0] * model.angle_scale,
        sd[1] * model.velocity_scale, sd[2] * model.angle_scale,
        sd[3] * model.velocity_scale;
    sample.innovation = update.innovation * model.angle_scale;
    sample.mpc_cost = sol.cost;
    sample.solver_iterations = sol.iterations;
    log.samples.push_back(sample);

    x = SimulateStep(x, u, plant, model.Ts, loop.substeps);
    warm = ShiftWarmStart(sol.torques);
    u_prev = u;
  }
  log.final_model = current;
  return log;
}

namespace {

template <typename F>
void ForWindow(const ClosedLoopLog& log, double window, F&& f) {
  if (log.samples.empty()) return;
  const double t_end = log.samples.back().t;
  for (const auto& s : log.samples) {
    if (s.t >= t_end - window - 1e-9) f(s);
  }
}

}  // namespace

Eigen::Vector2d ClosedLoopLog::MeanAngleError(const Eigen::Vector4d& reference,
                                              double window) const {
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  int count = 0;
  ForWindow(*this, window, [&](const ClosedLoopSample& s) {
    sum[0] += std::abs(WrapAngle(s.state.theta1 - reference[0]));
    sum[1] += std::abs(WrapAngle(s.state.theta2 - reference[2]));
    ++count;
  });
  return count > 0 ? Eigen::Vector2d(sum / count) : sum;
}

Eigen::Vector2d ClosedLoopLog::MaxAbsAngle(const Eigen::Vector4d& reference,
                                           double window) const {
  Eigen::Vector2d m = Eigen::Vector2d::Zero();
  ForWindow(*this, window, [&](const ClosedLoopSample& s) {
    m[0] = std::max(m[0], std::abs(WrapAngle(s.state.theta1 - reference[0])));
    m[1] = std::max(m[1], std::abs(WrapAngle(s.state.theta2 - reference[2])));
  });
  return m;
}

Eigen::Vector2d ClosedLoopLog::MaxAbsVelocity(double window) const {
  Eigen::Vector2d m = Eigen::Vector2d::Zero();
  ForWindow(*this, window, [&](const ClosedLoopSample& s) {
    m[0] = std::max(m[0], std::abs(s.state.dtheta1));
    m[1] = std::max(m[1], std::abs(s.state.dtheta2));
  });
  return m;
}

double ClosedLoopLog::MeanInnovationNorm(double window) const {
  double sum = 0.0;
  int count = 0;
  ForWindow(*this, window, [&](const ClosedLoopSample& s) {
    sum += s.innovation.norm();
    ++count;
  });
  return count > 0 ? sum / count : 0.0;
}

double ClosedLoopLog::ConsistencyFraction() const {
  if (samples.empty()) return 0.0;
  int inside = 0;
  for (const auto& s : samples) {
    const Eigen::Vector4d truth = s.state.ToVector();
    const Eigen::Vector4d est = s.estimate.ToVector();
    Eigen::Vector4d err = truth - est;
    err[0] = WrapAngle(err[0]);
    err[2] = WrapAngle(err[2]);
    if ((err.cwiseAbs().array() <= 3.0 * s.estimate_sigma.array()).all()) {
      ++inside;
    }
  }
  return static_cast<double>(inside) / static_cast<double>(samples.size());
}

void WriteClosedLoopCsv(std::ostream& out, const ClosedLoopLog& log) {
  out << "t,theta1,dtheta1,theta2,dtheta2,u1,u2,theta1_hat,dtheta1_hat,"
         "theta2_hat,dtheta2_hat,mpc_cost,solver_iters\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& s : log.samples) {
    std::snprintf(buf, sizeof(buf), "%.6f", s.t);
    out << buf;
    for (double v : {s.state.theta1, s.state.dtheta1, s.state.theta2,
                     s.state.dtheta2, s.torque[0], s.torque[1],
                     s.estimate.theta1, s.estimate.dtheta1, s.estimate.theta2,
                     s.estimate.dtheta2, s.mpc_cost}) {
      out << ',' << num(v);
    }
    out << ',' << s.solver_iterations << '\n';
  }
}

void WriteClosedLoopCsv(const std::filesystem::path& path,
                        const ClosedLoopLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  WriteClosedLoopCsv(out, log);
}

}  // namespace tustin
