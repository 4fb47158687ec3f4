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

#include "tustin/estimation.h"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "tustin/errors.h"

namespace tustin {
namespace {

constexpr int kStateDim = 4;

// Measurement selector rows: normalized positions sit at packed indices 0, 2.
Eigen::MatrixXd Selector(Eigen::Index n) {
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2, n);
  H(0, 0) = 1.0;
  H(1, 2) = 1.0;
  return H;
}

void CheckMeasurement(const Eigen::Vector2d& y) {
  if (!y.allFinite()) throw MeasurementError("non-finite angle measurement");
}

// Lower Cholesky factor treating tiny pivots as exact zeros; returns false
// on a clearly negative pivot.
bool SemidefiniteCholesky(const Eigen::MatrixXd& S, Eigen::MatrixXd* L) {
  const Eigen::Index n = S.rows();
  const double scale = std::max(1.0, S.diagonal().cwiseAbs().maxCoeff());
  const double zero_tol = 1e-14 * scale;
  L->setZero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = S(j, j) - L->row(j).head(j).squaredNorm();
    if (d < -zero_tol) return false;
    if (d <= zero_tol) continue;  // zero column
    const double ljj = std::sqrt(d);
    (*L)(j, j) = ljj;
    if (j + 1 < n) {
      L->col(j).tail(n - j - 1) =
          (S.col(j).tail(n - j - 1) -
           L->bottomLeftCorner(n - j - 1, j) * L->row(j).head(j).transpose()) /
          ljj;
    }
  }
  return true;
}

UpdateResult JosephUpdate(const GaussianBelief& predicted,
                          const Eigen::MatrixXd& cross,  // P H^T, n x 2
                          const Eigen::MatrixXd& innovation_cov,
                          const Eigen::VectorXd& innovation,
                          const Eigen::MatrixXd& R) {
  const Eigen::Index n = predicted.size();
  UpdateResult out;
  out.innovation = innovation;
  out.innovation_covariance = innovation_cov;
  out.gain = innovation_cov.ldlt().solve(cross.transpose()).transpose();
  const Eigen::MatrixXd H = Selector(n);
  const Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(n, n) - out.gain * H;
  out.belief.mean = predicted.mean + out.gain * innovation;
  Eigen::MatrixXd P = IKH * predicted.covariance * IKH.transpose() +
                      out.gain * R * out.gain.transpose();
  out.belief.covariance = 0.5 * (P + P.transpose());
  return out;
}

// Propagates every column of `points` (packed state, optionally followed by
// output-layer parameters) through one Tustin-Net step.
Eigen::MatrixXd PropagatePoints(const TustinNetModel& model,
                                const Eigen::MatrixXd& points,
                                const Torque& u) {
  const Eigen::Index count = points.cols();
  const bool joint = points.rows() > kStateDim;
  Eigen::MatrixXd features(kFeatureCount, count);
  for (Eigen::Index i = 0; i < count; ++i) {
    features.col(i) = EncodeFeatures(
        model, NetState::FromVector(points.col(i).head<kStateDim>()), u);
  }
  Eigen::MatrixXd increments;
  if (!joint) {
    increments = model.mlp.Forward(features);
  } else {
    const Eigen::MatrixXd hidden = model.mlp.LastHidden(features);
    const Eigen::Index width = hidden.rows();
    increments.resize(2, count);
    for (Eigen::Index i = 0; i < count; ++i) {
      const auto psi = points.col(i).tail(points.rows() - kStateDim);
      increments(0, i) = psi.segment(0, width).dot(hidden.col(i)) + psi[2 * width];
      increments(1, i) =
          psi.segment(width, width).dot(hidden.col(i)) + psi[2 * width + 1];
    }
  }
  const double c = 0.5 * model.Ts * model.Kv;
  Eigen::MatrixXd next = points;
  for (int joint_index = 0; joint_index < 2; ++joint_index) {
    const int pos = 2 * joint_index;
    const int vel = pos + 1;
    next.row(vel) = points.row(vel) + increments.row(joint_index);
    next.row(pos) = points.row(pos) + c * (next.row(vel) + points.row(vel));
  }
  return next;
}

GaussianBelief TustinPredict(const TustinNetModel& model,
                             const GaussianBelief& belief, const Torque& u,
                             const NoiseConfig& noise, const UkfConfig& config) {
  const Eigen::Index n = belief.size();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  Q.topLeftCorner<kStateDim, kStateDim>() = noise.StateProcessCovariance();
  if (n > kStateDim) {
    Q.bottomRightCorner(n - kStateDim, n - kStateDim).diagonal().setConstant(
        noise.parameter_sigma * noise.parameter_sigma);
  }
  return UnscentedPredict(
      belief,
      [&](const Eigen::MatrixXd& points) {
        return PropagatePoints(model, points, u);
      },
      Q, config);
}

}  // namespace

bool GaussianBelief::IsSymmetricPsd(double tolerance) const {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    return false;
  }
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() >= tolerance) {
    return false;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance,
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tolerance;
}

Eigen::Matrix4d NoiseConfig::StateProcessCovariance() const {
  const double p = position_sigma * position_sigma;
  const double v = velocity_sigma * velocity_sigma;
  return Eigen::Vector4d(p, v, p, v).asDiagonal();
}

Eigen::Matrix2d NoiseConfig::MeasurementCovariance(double angle_scale) const {
  const double s = measurement_sigma / angle_scale;
  return Eigen::Matrix2d::Identity() * s * s;
}

Eigen::MatrixXd PsdCholesky(const Eigen::MatrixXd& S) {
  const Eigen::MatrixXd sym = 0.5 * (S + S.transpose());
  Eigen::MatrixXd L;
  if (SemidefiniteCholesky(sym, &L)) return L;
  const Eigen::Index n = sym.rows();
  for (double jitter = 1e-10; jitter <= 1e-6 * (1 + 1e-12); jitter *= 2.0) {
    Eigen::LLT<Eigen::MatrixXd> llt(sym +
                                    jitter * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw IllConditionedBeliefError(
      "covariance is not positive semi-definite even after jitter");
}

SigmaPoints ComputeSigmaPoints(const GaussianBelief& belief,
                               const UkfConfig& config) {
  const Eigen::Index n = belief.size();
  if (belief.covariance.rows() != n || belief.covariance.cols() != n) {
    throw DimensionError("belief covariance does not match its mean");
  }
  const double nd = static_cast<double>(n);
  const double kappa = config.kappa.value_or(3.0 - nd);
  const double lambda = config.alpha * config.alpha * (nd + kappa) - nd;
  const double spread = nd + lambda;
  if (!(spread > 0)) {
    throw std::invalid_argument("sigma-point spread n + lambda must be positive");
  }
  const Eigen::MatrixXd L = PsdCholesky(spread * belief.covariance);

  SigmaPoints sp;
  sp.points.resize(n, 2 * n + 1);
  sp.points.col(0) = belief.mean;
  for (Eigen::Index i = 0; i < n; ++i) {
    sp.points.col(1 + i) = belief.mean + L.col(i);
    sp.points.col(1 + n + i) = belief.mean - L.col(i);
  }
  sp.mean_weights = Eigen::VectorXd::Constant(2 * n + 1, 0.5 / spread);
  sp.cov_weights = sp.mean_weights;
  sp.mean_weights[0] = lambda / spread;
  sp.cov_weights[0] =
      lambda / spread + (1.0 - config.alpha * config.alpha + config.beta);
  return sp;
}

GaussianBelief RecoverBelief(const Eigen::MatrixXd& points,
                             const Eigen::VectorXd& mean_weights,
                             const Eigen::VectorXd& cov_weights) {
  GaussianBelief out;
  out.mean = points * mean_weights;
  const Eigen::MatrixXd d = points.colwise() - out.mean;
  const Eigen::MatrixXd P = d * cov_weights.asDiagonal() * d.transpose();
  out.covariance = 0.5 * (P + P.transpose());
  return out;
}

GaussianBelief UnscentedPredict(const GaussianBelief& belief,
                                const PointMap& transition,
                                const Eigen::MatrixXd& Q,
                                const UkfConfig& config) {
  const SigmaPoints sp = ComputeSigmaPoints(belief, config);
  GaussianBelief out =
      RecoverBelief(transition(sp.points), sp.mean_weights, sp.cov_weights);
  if (out.size() != belief.size() || Q.rows() != out.size() ||
      Q.cols() != out.size()) {
    throw DimensionError("transition or process noise has the wrong size");
  }
  out.covariance += Q;
  return out;
}

UpdateResult UnscentedUpdate(const GaussianBelief& predicted,
                             const PointMap& measurement,
                             const Eigen::VectorXd& y, const Eigen::MatrixXd& R,
                             const UkfConfig& config) {
  if (!y.allFinite()) throw MeasurementError("non-finite measurement");
  const SigmaPoints sp = ComputeSigmaPoints(predicted, config);
  const Eigen::MatrixXd z = measurement(sp.points);
  if (z.rows() != y.size() || R.rows() != y.size() || R.cols() != y.size()) {
    throw DimensionError("measurement or its noise has the wrong size");
  }
  const Eigen::VectorXd z_mean = z * sp.mean_weights;
  const Eigen::MatrixXd dz = z.colwise() - z_mean;
  const Eigen::MatrixXd dx = sp.points.colwise() - predicted.mean;
  Eigen::MatrixXd S = dz * sp.cov_weights.asDiagonal() * dz.transpose() + R;
  S = 0.5 * (S + S.transpose());
  const Eigen::MatrixXd Pxz = dx * sp.cov_weights.asDiagonal() * dz.transpose();
  UpdateResult out;
  out.innovation = y - z_mean;
  out.innovation_covariance = S;
  out.gain = S.ldlt().solve(Pxz.transpose()).transpose();
  out.belief.mean = predicted.mean + out.gain * out.innovation;
  const Eigen::MatrixXd P =
      predicted.covariance - out.gain * S * out.gain.transpose();
  out.belief.covariance = 0.5 * (P + P.transpose());
  return out;
}

GaussianBelief UkfPredict(const TustinNetModel& model,
                          const GaussianBelief& belief, const Torque& u,
                          const NoiseConfig& noise, const UkfConfig& config) {
  if (belief.size() != kStateDim) {
    throw DimensionError("state UKF expects a 4-dimensional belief");
  }
  return TustinPredict(model, belief, u, noise, config);
}

GaussianBelief JukfPredict(const TustinNetModel& model,
                           const GaussianBelief& belief, const Torque& u,
                           const NoiseConfig& noise, const UkfConfig& config) {
  if (belief.size() != kStateDim + model.mlp.LastLayerParameterCount()) {
    throw DimensionError(
        "joint UKF belief must hold the state and every output-layer parameter");
  }
  return TustinPredict(model, belief, u, noise, config);
}

GaussianBelief EkfPredict(const TustinNetModel& model,
                          const GaussianBelief& belief, const Torque& u,
                          const NoiseConfig& noise) {
  if (belief.size() != kStateDim) {
    throw DimensionError("EKF expects a 4-dimensional belief");
  }
  const NetState s = NetState::FromVector(belief.mean);
  const StepJacobians jac =
      ComputeStepJacobians(model, s, u, JacobianParts::kStateInput);
  GaussianBelief out;
  out.mean = Step(model, s, u).ToVector();
  const Eigen::MatrixXd P =
      jac.state * belief.covariance * jac.state.transpose() +
      noise.StateProcessCovariance();
  out.covariance = 0.5 * (P + P.transpose());
  return out;
}

UpdateResult UkfUpdate(const TustinNetModel& model,
                       const GaussianBelief& predicted,
                       const Eigen::Vector2d& y, const NoiseConfig& noise,
                       const UkfConfig& config) {
  CheckMeasurement(y);
  const SigmaPoints sp = ComputeSigmaPoints(predicted, config);
  const Eigen::MatrixXd H = Selector(predicted.size());
  const Eigen::MatrixXd z = H * sp.points;
  const Eigen::Vector2d z_mean = z * sp.mean_weights;
  const Eigen::MatrixXd dz = z.colwise() - z_mean;
  const Eigen::MatrixXd dx = sp.points.colwise() - predicted.mean;
  const Eigen::Matrix2d R = noise.MeasurementCovariance(model.angle_scale);
  const Eigen::Matrix2d Pzz = dz * sp.cov_weights.asDiagonal() * dz.transpose() + R;
  const Eigen::MatrixXd Pxz = dx * sp.cov_weights.asDiagonal() * dz.transpose();
  return JosephUpdate(predicted, Pxz, 0.5 * (Pzz + Pzz.transpose()),
                      y / model.angle_scale - z_mean, R);
}

UpdateResult EkfUpdate(const TustinNetModel& model,
                       const GaussianBelief& predicted,
                       const Eigen::Vector2d& y, const NoiseConfig& noise) {
  CheckMeasurement(y);
  const Eigen::MatrixXd H = Selector(predicted.size());
  const Eigen::Matrix2d R = noise.MeasurementCovariance(model.angle_scale);
  const Eigen::MatrixXd PHt = predicted.covariance * H.transpose();
  const Eigen::Matrix2d S = H * PHt + R;
  return JosephUpdate(predicted, PHt, 0.5 * (S + S.transpose()),
                      y / model.angle_scale - H * predicted.mean, R);
}

GaussianBelief UkfStep(const TustinNetModel& model,
                       const GaussianBelief& belief, const Torque& u,
                       const Eigen::Vector2d& y, const NoiseConfig& noise,
                       const UkfConfig& config) {
  return UkfUpdate(model, UkfPredict(model, belief, u, noise, config), y, noise,
                   config)
      .belief;
}

GaussianBelief EkfStep(const TustinNetModel& model,
                       const GaussianBelief& belief, const Torque& u,
                       const Eigen::Vector2d& y, const NoiseConfig& noise) {
  return EkfUpdate(model, EkfPredict(model, belief, u, noise), y, noise).belief;
}

GaussianBelief JukfStep(const TustinNetModel& model,
                        const GaussianBelief& belief, const Torque& u,
                        const Eigen::Vector2d& y, const NoiseConfig& noise,
                        const UkfConfig& config) {
  return UkfUpdate(model, JukfPredict(model, belief, u, noise, config), y,
                   noise, config)
      .belief;
}

GaussianBelief MakeJointBelief(const TustinNetModel& model,
                               const GaussianBelief& state_belief,
                               double parameter_variance) {
  if (state_belief.size() != kStateDim) {
    throw DimensionError("state belief must be 4-dimensional");
  }
  const Eigen::Index m = model.mlp.LastLayerParameterCount();
  GaussianBelief joint;
  joint.mean.resize(kStateDim + m);
  joint.mean << state_belief.mean, model.mlp.LastLayerParameters();
  joint.covariance = Eigen::MatrixXd::Zero(kStateDim + m, kStateDim + m);
  joint.covariance.topLeftCorner<kStateDim, kStateDim>() =
      state_belief.covariance;
  joint.covariance.bottomRightCorner(m, m).diagonal().setConstant(
      parameter_variance);
  return joint;
}

TustinNetModel ExtractModel(const TustinNetModel& model,
                            const GaussianBelief& joint_belief) {
  const Eigen::Index m = model.mlp.LastLayerParameterCount();
  if (joint_belief.size() != kStateDim + m) {
    throw DimensionError("joint belief does not match the model's output layer");
  }
  TustinNetModel adapted = model;
  adapted.mlp.SetLastLayerParameters(joint_belief.mean.tail(m));
  return adapted;
}

GaussianBelief StateMarginal(const GaussianBelief& belief) {
  return {belief.mean.head<kStateDim>(),
          belief.covariance.topLeftCorner<kStateDim, kStateDim>()};
}

}  // namespace tustin
