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

#include "tustin/lqr.h"

#include <Eigen/Cholesky>
#include <Eigen/LU>

namespace tustin {

LinearModel Linearize(const PendulumParams& p, const PlantState& x_bar,
                      const Torque& u_bar, double Ts, int substeps,
                      double step) {
  const Eigen::Vector4d x0 = x_bar.ToVector();
  auto flow = [&](const Eigen::Vector4d& x, const Torque& u) {
    return SimulateStep(PlantState::FromVector(x), u, p, Ts, substeps)
        .ToVector();
  };
  const double residual = (flow(x0, u_bar) - x0).cwiseAbs().maxCoeff();
  if (!(residual < 1e-8)) {
    throw EquilibriumError("operating point is not an equilibrium (residual " +
                           std::to_string(residual) + ")");
  }
  LinearModel model;
  model.x_bar = x_bar;
  model.u_bar = u_bar;
  for (int j = 0; j < 4; ++j) {
    Eigen::Vector4d dx = Eigen::Vector4d::Zero();
    dx[j] = step;
    model.A.col(j) = (flow(x0 + dx, u_bar) - flow(x0 - dx, u_bar)) / (2 * step);
  }
  for (int j = 0; j < 2; ++j) {
    Torque du = Torque::Zero();
    du[j] = step;
    model.B.col(j) = (flow(x0, u_bar + du) - flow(x0, u_bar - du)) / (2 * step);
  }
  return model;
}

DareSolution SolveDare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                       const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                       double tolerance, int max_iterations) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != B.cols() || R.cols() != B.cols()) {
    throw DimensionError("inconsistent Riccati matrix shapes");
  }
  DareSolution sol;
  sol.P = Q;
  for (int it = 1; it <= max_iterations; ++it) {
    const Eigen::MatrixXd BtP = B.transpose() * sol.P;
    const Eigen::MatrixXd gain = (R + BtP * B).ldlt().solve(BtP * A);
    Eigen::MatrixXd next =
        Q + A.transpose() * sol.P * A - A.transpose() * BtP.transpose() * gain;
    next = 0.5 * (next + next.transpose()).eval();
    if (!next.allFinite()) break;
    const double change = (next - sol.P).cwiseAbs().maxCoeff();
    sol.P = std::move(next);
    if (change < tolerance) {
      sol.iterations = it;
      const Eigen::MatrixXd BtPf = B.transpose() * sol.P;
      sol.K = (R + BtPf * B).ldlt().solve(BtPf * A);
      return sol;
    }
  }
  throw StabilizabilityError(
      "Riccati recursion did not converge; is (A, B) stabilizable?");
}

Eigen::Matrix<double, 2, 4> DareGain(const LinearModel& model,
                                     const Eigen::Matrix4d& Q,
                                     const Eigen::Matrix2d& R) {
  return SolveDare(model.A, model.B, Q, R).K;
}

Torque LqrControl(const Eigen::Matrix<double, 2, 4>& K, const PlantState& x,
                  const PlantState& x_bar, const Torque& u_bar, double u_max) {
  const Torque u = u_bar - K * (x.ToVector() - x_bar.ToVector());
  return u.cwiseMax(-u_max).cwiseMin(u_max);
}

}  // namespace tustin
