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

#ifndef TUSTIN_LQR_H_
#define TUSTIN_LQR_H_

#include <Eigen/Core>

#include "tustin/dynamics.h"

namespace tustin {

// Discrete-time linearization x(k+1) - x_bar = A (x(k) - x_bar) + B (u - u_bar)
// of the sampled plant, in PlantState ordering.
struct LinearModel {
  Eigen::Matrix4d A;
  Eigen::Matrix<double, 4, 2> B;
  PlantState x_bar;
  Torque u_bar = Torque::Zero();
};

// Central differences of the one-period flow map. Throws EquilibriumError if
// (x_bar, u_bar) is not a fixed point of the flow to within 1e-8.
LinearModel Linearize(const PendulumParams& p, const PlantState& x_bar,
                      const Torque& u_bar, double Ts, int substeps,
                      double step = 1e-6);

struct DareSolution {
  Eigen::MatrixXd P;
  Eigen::MatrixXd K;  // u = -K x
  int iterations = 0;
};

// Iterates the Riccati difference equation from P = Q until the max-abs
// change drops below `tolerance`. Throws StabilizabilityError after
// `max_iterations`.
DareSolution SolveDare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                       const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                       double tolerance = 1e-10, int max_iterations = 100000);

// Infinite-horizon gain for `model`.
Eigen::Matrix<double, 2, 4> DareGain(const LinearModel& model,
                                     const Eigen::Matrix4d& Q,
                                     const Eigen::Matrix2d& R);

// clamp(u_bar - K (x - x_bar), +-u_max)
Torque LqrControl(const Eigen::Matrix<double, 2, 4>& K, const PlantState& x,
                  const PlantState& x_bar, const Torque& u_bar, double u_max);

}  // namespace tustin

#endif  // TUSTIN_LQR_H_
