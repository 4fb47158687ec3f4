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

#ifndef TUSTIN_ESTIMATION_H_
#define TUSTIN_ESTIMATION_H_

#include <functional>
#include <optional>

#include <Eigen/Core>

#include "tustin/tustin_net.h"

namespace tustin {

// Mean and covariance of a Gaussian over the packed normalized network state
// [pos1, vel1, pos2, vel2], optionally followed by output-layer parameters.
struct GaussianBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  Eigen::Index size() const { return mean.size(); }
  // Symmetric to `tolerance` and no eigenvalue below -tolerance.
  bool IsSymmetricPsd(double tolerance = 1e-10) const;
};

// Standard deviations; the filters square them.
struct NoiseConfig {
  double position_sigma = 1e-6;      // normalized position, per step
  double velocity_sigma = 1e-2;      // normalized velocity, per step
  double parameter_sigma = 0.0;      // output-layer random walk, per step
  double measurement_sigma = 1e-3;   // rad

  // Process covariance of the 4 state entries, normalized units.
  Eigen::Matrix4d StateProcessCovariance() const;
  // Measurement covariance in normalized position units.
  Eigen::Matrix2d MeasurementCovariance(double angle_scale) const;
};

// Scaled unscented transform. kappa defaults to 3 - n.
struct UkfConfig {
  double alpha = 0.5;
  double beta = 2.0;
  std::optional<double> kappa;
};

struct SigmaPoints {
  Eigen::MatrixXd points;         // n x (2n + 1), column 0 is the mean
  Eigen::VectorXd mean_weights;
  Eigen::VectorXd cov_weights;
};

// Lower-triangular L with L L^T = S for symmetric PSD S. Zero pivots give
// zero columns; a negative pivot triggers jitter of 1e-10 I, doubled up to
// 1e-6, before IllConditionedBeliefError.
Eigen::MatrixXd PsdCholesky(const Eigen::MatrixXd& S);

SigmaPoints ComputeSigmaPoints(const GaussianBelief& belief,
                               const UkfConfig& config);

// Weighted mean and covariance of transformed sigma points.
GaussianBelief RecoverBelief(const Eigen::MatrixXd& points,
                             const Eigen::VectorXd& mean_weights,
                             const Eigen::VectorXd& cov_weights);

// Outcome of one measurement update, kept for traces and residual metrics.
struct UpdateResult {
  GaussianBelief belief;
  Eigen::VectorXd innovation;  // normalized position units for the pendulum
  Eigen::MatrixXd innovation_covariance;
  Eigen::MatrixXd gain;
};

// Maps a matrix of column points to a matrix of transformed columns.
using PointMap = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

// Unscented transform through `transition`, then additive noise Q.
GaussianBelief UnscentedPredict(const GaussianBelief& belief,
                                const PointMap& transition,
                                const Eigen::MatrixXd& Q,
                                const UkfConfig& config);

// Unscented measurement update with additive noise R; sigma points are drawn
// from `predicted`.
UpdateResult UnscentedUpdate(const GaussianBelief& predicted,
                             const PointMap& measurement,
                             const Eigen::VectorXd& y, const Eigen::MatrixXd& R,
                             const UkfConfig& config);

// Prediction steps. The state-only variants work on 4-dim beliefs; the joint
// variant on 4 + LastLayerParameterCount() dimensions.
GaussianBelief UkfPredict(const TustinNetModel& model,
                          const GaussianBelief& belief, const Torque& u,
                          const NoiseConfig& noise, const UkfConfig& config);
GaussianBelief EkfPredict(const TustinNetModel& model,
                          const GaussianBelief& belief, const Torque& u,
                          const NoiseConfig& noise);
GaussianBelief JukfPredict(const TustinNetModel& model,
                           const GaussianBelief& belief, const Torque& u,
                           const NoiseConfig& noise, const UkfConfig& config);

// Measurement of the two angles `y` (rad), Joseph-form covariance.
UpdateResult UkfUpdate(const TustinNetModel& model,
                       const GaussianBelief& predicted,
                       const Eigen::Vector2d& y, const NoiseConfig& noise,
                       const UkfConfig& config);
UpdateResult EkfUpdate(const TustinNetModel& model,
                       const GaussianBelief& predicted,
                       const Eigen::Vector2d& y, const NoiseConfig& noise);

// Predict with u, then update with y.
GaussianBelief UkfStep(const TustinNetModel& model,
                       const GaussianBelief& belief, const Torque& u,
                       const Eigen::Vector2d& y, const NoiseConfig& noise,
                       const UkfConfig& config);
GaussianBelief EkfStep(const TustinNetModel& model,
                       const GaussianBelief& belief, const Torque& u,
                       const Eigen::Vector2d& y, const NoiseConfig& noise);
GaussianBelief JukfStep(const TustinNetModel& model,
                        const GaussianBelief& belief, const Torque& u,
                        const Eigen::Vector2d& y, const NoiseConfig& noise,
                        const UkfConfig& config);

// Joint belief with the model's current output layer as parameter mean.
GaussianBelief MakeJointBelief(const TustinNetModel& model,
                               const GaussianBelief& state_belief,
                               double parameter_variance);

// Copy of `model` whose output layer is the parameter part of the mean.
TustinNetModel ExtractModel(const TustinNetModel& model,
                            const GaussianBelief& joint_belief);

// State marginal of a joint belief.
GaussianBelief StateMarginal(const GaussianBelief& belief);

}  // namespace tustin

#endif  // TUSTIN_ESTIMATION_H_
