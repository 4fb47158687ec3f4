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

#include <cmath>
#include <complex>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

namespace tustin {
namespace {

// exp(A t) and its integral by truncated Taylor series.
void Discretize(const Eigen::Matrix4d& Ac, const Eigen::Matrix<double, 4, 2>& Bc,
                double t, Eigen::Matrix4d* Ad, Eigen::Matrix<double, 4, 2>* Bd) {
  Eigen::Matrix4d term = Eigen::Matrix4d::Identity();
  Eigen::Matrix4d integral = Eigen::Matrix4d::Identity() * t;
  *Ad = Eigen::Matrix4d::Identity();
  for (int k = 1; k < 30; ++k) {
    term = term * Ac * t / k;
    *Ad += term;
    integral += term * t / (k + 1);
  }
  *Bd = integral * Bc;
}

TEST(LqrTest, ScalarDareMatchesClosedForm) {
  const double a = 1.2, b = 0.5, q = 2.0, r = 0.3;
  Eigen::MatrixXd A(1, 1), B(1, 1), Q(1, 1), R(1, 1);
  A << a;
  B << b;
  Q << q;
  R << r;
  const DareSolution sol = SolveDare(A, B, Q, R);
  // b^2 P^2 + (r - a^2 r - q b^2) P - q r = 0, positive root.
  const double c1 = b * b, c2 = r - a * a * r - q * b * b, c3 = -q * r;
  const double P = (-c2 + std::sqrt(c2 * c2 - 4 * c1 * c3)) / (2 * c1);
  EXPECT_NEAR(sol.P(0, 0), P, 1e-9);
  EXPECT_NEAR(sol.K(0, 0), a * b * P / (r + b * b * P), 1e-9);
  EXPECT_LT(std::abs(a - b * sol.K(0, 0)), 1.0);
}

TEST(LqrTest, DareResidualVanishes) {
  Eigen::MatrixXd A(2, 2), B(2, 1), Q(2, 2), R(1, 1);
  A << 1, 1, 0, 1;
  B << 0, 1;
  Q << 1, 0, 0, 0;
  R << 0.3;
  const DareSolution sol = SolveDare(A, B, Q, R);
  const Eigen::MatrixXd& X = sol.P;
  const Eigen::MatrixXd residual =
      A.transpose() * X * A - X -
      A.transpose() * X * B * (B.transpose() * X * B + R).inverse() *
          B.transpose() * X * A +
      Q;
  EXPECT_LT(residual.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LqrTest, UnstabilizablePairThrows) {
  Eigen::MatrixXd A(1, 1), B(1, 1), Q(1, 1), R(1, 1);
  A << 2.0;
  B << 0.0;
  Q << 1.0;
  R << 1.0;
  EXPECT_THROW(SolveDare(A, B, Q, R, 1e-10, 2000), StabilizabilityError);
  EXPECT_THROW(SolveDare(A, Eigen::MatrixXd::Zero(2, 1), Q, R), DimensionError);
}

TEST(LqrTest, LinearizationMatchesMatrixExponentialOfContinuousJacobian) {
  const PendulumParams p;
  const double Ts = 0.01;
  const PlantState upright;
  Eigen::Matrix4d Ac;
  Eigen::Matrix<double, 4, 2> Bc;
  const double h = 1e-6;
  for (int j = 0; j < 4; ++j) {
    Eigen::Vector4d d = Eigen::Vector4d::Zero();
    d[j] = h;
    Ac.col(j) = (StateDerivative(d, Torque::Zero(), p) -
                 StateDerivative(-d, Torque::Zero(), p)) / (2 * h);
  }
  for (int j = 0; j < 2; ++j) {
    Torque du = Torque::Zero();
    du[j] = h;
    Bc.col(j) = (StateDerivative(Eigen::Vector4d::Zero(), du, p) -
                 StateDerivative(Eigen::Vector4d::Zero(), -du, p)) / (2 * h);
  }
  Eigen::Matrix4d Ad;
  Eigen::Matrix<double, 4, 2> Bd;
  Discretize(Ac, Bc, Ts, &Ad, &Bd);

  const LinearModel lin = Linearize(p, upright, Torque::Zero(), Ts, 10);
  EXPECT_LT((lin.A - Ad).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((lin.B - Bd).cwiseAbs().maxCoeff(), 1e-6);
  // First order agreement with I + Ts Ac.
  EXPECT_LT((lin.A - (Eigen::Matrix4d::Identity() + Ts * Ac)).cwiseAbs().maxCoeff(),
            Ts * Ts * Ac.cwiseAbs().maxCoeff() * Ac.cwiseAbs().maxCoeff());
}

TEST(LqrTest, UprightIsOpenLoopUnstableAndClosedLoopStable) {
  const PendulumParams p;
  const LinearModel lin = Linearize(p, PlantState{}, Torque::Zero(), 0.01, 10);
  const Eigen::Vector4cd open = lin.A.eigenvalues();
  EXPECT_GT(open.cwiseAbs().maxCoeff(), 1.0);
  const Eigen::Matrix4d Q = Eigen::Vector4d(10, 1, 10, 1).asDiagonal();
  const Eigen::Matrix2d R = 0.1 * Eigen::Matrix2d::Identity();
  const auto K = DareGain(lin, Q, R);
  const Eigen::Matrix4d closed = lin.A - lin.B * K;
  EXPECT_LT(closed.eigenvalues().cwiseAbs().maxCoeff(), 1.0);
}

TEST(LqrTest, HangingLinearizationIsStable) {
  const PendulumParams p;
  const LinearModel lin =
      Linearize(p, PlantState{std::numbers::pi, 0, 0, 0}, Torque::Zero(), 0.01, 10);
  EXPECT_LT(lin.A.eigenvalues().cwiseAbs().maxCoeff(), 1.0);
}

TEST(LqrTest, NonEquilibriumThrows) {
  const PendulumParams p;
  EXPECT_THROW(Linearize(p, PlantState{0.3, 0, 0, 0}, Torque::Zero(), 0.01, 10),
               EquilibriumError);
}

TEST(LqrTest, ControlIsSaturated) {
  Eigen::Matrix<double, 2, 4> K = Eigen::Matrix<double, 2, 4>::Zero();
  K(0, 0) = 100.0;
  K(1, 2) = -1.0;
  const Torque u = LqrControl(K, {1.0, 0, 0.5, 0}, PlantState{}, Torque::Zero(), 5.0);
  EXPECT_EQ(u[0], -5.0);
  EXPECT_DOUBLE_EQ(u[1], 0.5);
}

}  // namespace
}  // namespace tustin
