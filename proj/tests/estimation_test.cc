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
#include <limits>
#include <random>
#include <span>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "tustin/errors.h"

namespace tustin {
namespace {

constexpr int kSmallHidden[] = {10, 8};

// A network without hidden layers whose angle features are switched off, so
// one step is affine in the packed state and the torque.
TustinNetModel AffineModel() {
  TustinNetModel m = TustinNetModel::Create(4, std::span<const int>{});
  m.mlp.weight(0).leftCols(4).setZero();
  m.mlp.weight(0) *= 0.2;
  m.mlp.bias(0) << 0.003, -0.002;
  return m;
}

// x' = A x + B u + c for AffineModel(), built directly from the weights.
struct AffineStep {
  Eigen::Matrix4d A;
  Eigen::Matrix<double, 4, 2> B;
  Eigen::Vector4d c;
};

AffineStep AffineOracle(const TustinNetModel& m) {
  const Eigen::Matrix2d Wv = m.mlp.weight(0).middleCols(4, 2);
  const Eigen::Matrix2d Wu = m.mlp.weight(0).rightCols(2) / m.torque_scale;
  const Eigen::Vector2d b = m.mlp.bias(0);
  const double h = 0.5 * m.Ts * m.Kv;
  // velocity block: v' = (I + Wv) v + Wu u + b
  // position block: p' = p + h (v' + v)
  Eigen::Matrix<double, 4, 4> A = Eigen::Matrix4d::Zero();
  Eigen::Matrix<double, 4, 2> B = Eigen::Matrix<double, 4, 2>::Zero();
  Eigen::Vector4d c = Eigen::Vector4d::Zero();
  const int pos[] = {0, 2};
  const int vel[] = {1, 3};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double dv = (i == j ? 1.0 : 0.0) + Wv(i, j);
      A(vel[i], vel[j]) = dv;
      A(pos[i], vel[j]) = h * (dv + (i == j ? 1.0 : 0.0));
      B(vel[i], j) = Wu(i, j);
      B(pos[i], j) = h * Wu(i, j);
    }
    A(pos[i], pos[i]) = 1.0;
    c[vel[i]] = b[i];
    c[pos[i]] = h * b[i];
  }
  return {A, B, c};
}

GaussianBelief SomeBelief() {
  GaussianBelief b;
  b.mean = Eigen::Vector4d(0.02, -0.1, -0.01, 0.05);
  Eigen::Matrix4d L;
  L << 0.02, 0, 0, 0,
       0.01, 0.05, 0, 0,
       -0.004, 0.002, 0.03, 0,
       0.003, -0.01, 0.02, 0.04;
  b.covariance = L * L.transpose();
  return b;
}

TEST(PsdCholeskyTest, MatchesLltOnPositiveDefinite) {
  Eigen::Matrix3d A;
  A << 4, 1, 0.5, 1, 3, 0.2, 0.5, 0.2, 2;
  const Eigen::MatrixXd L = PsdCholesky(A);
  EXPECT_TRUE(L.isApprox(Eigen::MatrixXd(A.llt().matrixL()), 1e-14));
  EXPECT_TRUE(L.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().isZero());
}

TEST(PsdCholeskyTest, RankDeficientGivesZeroColumns) {
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(4, 4);
  S.topLeftCorner(2, 2) << 2.0, 0.5, 0.5, 1.0;
  const Eigen::MatrixXd L = PsdCholesky(S);
  EXPECT_TRUE((L * L.transpose()).isApprox(S, 1e-14));
  EXPECT_TRUE(L.col(2).isZero());
  EXPECT_TRUE(L.col(3).isZero());

  Eigen::Vector3d v(1.0, 2.0, -1.0);
  const Eigen::Matrix3d outer = v * v.transpose();
  const Eigen::MatrixXd L1 = PsdCholesky(outer);
  EXPECT_LT((L1 * L1.transpose() - outer).norm(), 1e-12);
}

TEST(PsdCholeskyTest, JitterRepairsTinyNegativeAndRejectsLarge) {
  Eigen::Matrix2d S;
  S << 1.0, 1.0, 1.0, 1.0 - 1e-9;
  const Eigen::MatrixXd L = PsdCholesky(S);
  EXPECT_LT((L * L.transpose() - S).norm(), 1e-5);
  Eigen::Matrix2d bad;
  bad << 1.0, 0.0, 0.0, -1.0;
  EXPECT_THROW(PsdCholesky(bad), IllConditionedBeliefError);
}

TEST(SigmaPointsTest, ReproduceMeanAndCovariance) {
  const GaussianBelief b = SomeBelief();
  for (double alpha : {0.5, 1.0, 1e-2}) {
    UkfConfig config;
    config.alpha = alpha;
    const SigmaPoints sp = ComputeSigmaPoints(b, config);
    ASSERT_EQ(sp.points.cols(), 9);
    EXPECT_EQ(sp.points.col(0), b.mean);
    EXPECT_NEAR(sp.mean_weights.sum(), 1.0, 1e-12);
    const GaussianBelief back =
        RecoverBelief(sp.points, sp.mean_weights, sp.cov_weights);
    EXPECT_LT((back.mean - b.mean).norm(), 1e-12);
    // The covariance weight of the centre point does not matter here.
    EXPECT_LT((back.covariance - b.covariance).norm(), 1e-12);
  }
}

TEST(SigmaPointsTest, DefaultScalingForAnyDimension) {
  // n + lambda = 3 alpha^2 whatever n is.
  for (int n : {1, 4, 30}) {
    GaussianBelief b;
    b.mean = Eigen::VectorXd::Zero(n);
    b.covariance = Eigen::MatrixXd::Identity(n, n);
    const SigmaPoints sp = ComputeSigmaPoints(b, UkfConfig{});
    EXPECT_NEAR(sp.points(0, 1), std::sqrt(3.0 * 0.25), 1e-12);
    EXPECT_NEAR(sp.mean_weights[1], 1.0 / (6.0 * 0.25), 1e-12);
    EXPECT_NEAR(sp.cov_weights[0] - sp.mean_weights[0], 1.0 - 0.25 + 2.0,
                1e-12);
  }
}

TEST(SigmaPointsTest, RejectsMismatchedBelief) {
  GaussianBelief b;
  b.mean = Eigen::VectorXd::Zero(3);
  b.covariance = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_THROW(ComputeSigmaPoints(b, UkfConfig{}), DimensionError);
}

TEST(GaussianBeliefTest, SymmetricPsdCheck) {
  GaussianBelief b = SomeBelief();
  EXPECT_TRUE(b.IsSymmetricPsd());
  b.covariance(0, 1) += 1e-6;
  EXPECT_FALSE(b.IsSymmetricPsd());
  b = SomeBelief();
  b.covariance(0, 0) = -1e-3;
  EXPECT_FALSE(b.IsSymmetricPsd());
}

class AffineFilterTest : public ::testing::Test {
 protected:
  TustinNetModel model_ = AffineModel();
  AffineStep oracle_ = AffineOracle(model_);
  NoiseConfig noise_;
};

TEST_F(AffineFilterTest, OracleMatchesNetworkStep) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-0.3, 0.3);
  for (int i = 0; i < 20; ++i) {
    const Eigen::Vector4d x(d(rng), d(rng), d(rng), d(rng));
    const Torque u(10 * d(rng), 10 * d(rng));
    const Eigen::Vector4d next =
        Step(model_, NetState::FromVector(x), u).ToVector();
    EXPECT_LT((next - (oracle_.A * x + oracle_.B * u + oracle_.c)).norm(),
              1e-14);
  }
}

TEST_F(AffineFilterTest, PredictionsMatchKalmanFilter) {
  const GaussianBelief b = SomeBelief();
  const Torque u(0.7, -1.1);
  const Eigen::Vector4d kf_mean = oracle_.A * b.mean + oracle_.B * u + oracle_.c;
  const Eigen::Matrix4d kf_cov = oracle_.A * b.covariance * oracle_.A.transpose() +
                                 noise_.StateProcessCovariance();
  const GaussianBelief ukf = UkfPredict(model_, b, u, noise_, UkfConfig{});
  const GaussianBelief ekf = EkfPredict(model_, b, u, noise_);
  EXPECT_LT((ukf.mean - kf_mean).norm(), 1e-8);
  EXPECT_LT((ukf.covariance - kf_cov).norm(), 1e-8);
  EXPECT_LT((ekf.mean - kf_mean).norm(), 1e-8);
  EXPECT_LT((ekf.covariance - kf_cov).norm(), 1e-8);
}

TEST_F(AffineFilterTest, FilteringMatchesKalmanFilterOverManySteps) {
  const double scale = model_.angle_scale;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2, 4);
  H(0, 0) = 1.0;
  H(1, 2) = 1.0;
  const Eigen::Matrix2d R = noise_.MeasurementCovariance(scale);
  const Eigen::Matrix4d Q = noise_.StateProcessCovariance();

  GaussianBelief kf = SomeBelief();
  GaussianBelief ukf = kf;
  GaussianBelief ekf = kf;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector4d x(0.05, 0.0, -0.02, 0.1);
  for (int k = 0; k < 100; ++k) {
    const Torque u(n(rng), n(rng));
    x = oracle_.A * x + oracle_.B * u + oracle_.c;
    const Eigen::Vector2d y =
        scale * (H * x) + 1e-3 * Eigen::Vector2d(n(rng), n(rng));

    Eigen::Vector4d m = oracle_.A * kf.mean + oracle_.B * u + oracle_.c;
    Eigen::Matrix4d P = oracle_.A * kf.covariance * oracle_.A.transpose() + Q;
    const Eigen::Matrix2d S = H * P * H.transpose() + R;
    const Eigen::Matrix<double, 4, 2> K = P * H.transpose() * S.inverse();
    kf.mean = m + K * (y / scale - H * m);
    kf.covariance = (Eigen::Matrix4d::Identity() - K * H) * P;

    ukf = UkfStep(model_, ukf, u, y, noise_, UkfConfig{});
    ekf = EkfStep(model_, ekf, u, y, noise_);
  }
  EXPECT_LT((ukf.mean - kf.mean).norm(), 1e-8);
  EXPECT_LT((ekf.mean - kf.mean).norm(), 1e-8);
  EXPECT_LT((ukf.covariance - kf.covariance).norm(), 1e-8);
  EXPECT_LT((ekf.covariance - kf.covariance).norm(), 1e-8);
  EXPECT_TRUE(ukf.IsSymmetricPsd());
}

TEST_F(AffineFilterTest, UpdateResultCarriesInnovation) {
  const GaussianBelief b = SomeBelief();
  const Eigen::Vector2d y(0.1, -0.05);
  const UpdateResult r = UkfUpdate(model_, b, y, noise_, UkfConfig{});
  const Eigen::Vector2d expected =
      y / model_.angle_scale - Eigen::Vector2d(b.mean[0], b.mean[2]);
  EXPECT_LT((r.innovation - expected).norm(), 1e-12);
  EXPECT_EQ(r.gain.rows(), 4);
  EXPECT_EQ(r.gain.cols(), 2);
  EXPECT_LT(r.belief.covariance.trace(), b.covariance.trace());
  EXPECT_THROW(
      UkfUpdate(model_, b,
                Eigen::Vector2d(std::numeric_limits<double>::quiet_NaN(), 0.0),
                noise_, UkfConfig{}),
      MeasurementError);
}

TEST(JointFilterTest, StateMarginalMatchesUkfWithFrozenParameters) {
  TustinNetModel model = TustinNetModel::Create(2, kSmallHidden);
  const NoiseConfig noise;
  const GaussianBelief b = SomeBelief();
  GaussianBelief joint = MakeJointBelief(model, b, 0.0);
  ASSERT_EQ(joint.size(), 4 + model.mlp.LastLayerParameterCount());
  EXPECT_EQ(joint.mean.tail(joint.size() - 4), model.mlp.LastLayerParameters());
  GaussianBelief state = b;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 0.05);
  for (int k = 0; k < 20; ++k) {
    const Torque u(n(rng), n(rng));
    const Eigen::Vector2d y(n(rng), n(rng));
    state = UkfStep(model, state, u, y, noise, UkfConfig{});
    joint = JukfStep(model, joint, u, y, noise, UkfConfig{});
  }
  const GaussianBelief marginal = StateMarginal(joint);
  EXPECT_LT((marginal.mean - state.mean).norm(), 1e-10);
  EXPECT_LT((marginal.covariance - state.covariance).norm(), 1e-10);
  const TustinNetModel extracted = ExtractModel(model, joint);
  EXPECT_LT((extracted.mlp.LastLayerParameters() -
             model.mlp.LastLayerParameters()).cwiseAbs().maxCoeff(),
            1e-10);
  EXPECT_THROW(ExtractModel(model, b), DimensionError);
  EXPECT_THROW(MakeJointBelief(model, joint, 0.0), DimensionError);
}

TEST(JointFilterTest, ParameterUncertaintyShrinksWithData) {
  TustinNetModel model = TustinNetModel::Create(5, kSmallHidden);
  NoiseConfig noise;
  GaussianBelief joint = MakeJointBelief(model, SomeBelief(), 1e-3);
  const double before = joint.covariance.trace();
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 30; ++k) {
    joint = JukfStep(model, joint, Torque(n(rng), n(rng)),
                     Eigen::Vector2d(0.01 * n(rng), 0.01 * n(rng)), noise,
                     UkfConfig{});
  }
  EXPECT_TRUE(joint.IsSymmetricPsd(1e-9));
  EXPECT_LT(joint.covariance.trace(), before);
}

// Scalar system x' = psi x + u with unknown psi, observed through x.
TEST(GenericUnscentedTest, LearnsScalarGainLikeLeastSquares) {
  const double psi_true = 0.8;
  const double meas_sigma = 0.01;
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.0);

  GaussianBelief belief;
  belief.mean = Eigen::Vector2d(0.0, 0.3);
  belief.covariance = Eigen::Vector2d(0.01, 1.0).asDiagonal();
  Eigen::MatrixXd Q = Eigen::Vector2d(1e-6, 0.0).asDiagonal();
  const Eigen::MatrixXd R = Eigen::MatrixXd::Constant(1, 1, meas_sigma * meas_sigma);
  const UkfConfig config;
  const PointMap measure = [](const Eigen::MatrixXd& pts) {
    return Eigen::MatrixXd(pts.topRows(1));
  };

  double x = 0.0;
  double y_prev = 0.0;
  double sxy = 0.0, sxx = 0.0;
  int converged_at = -1;
  for (int k = 0; k < 200; ++k) {
    const double u = n(rng);
    const PointMap transition = [u](const Eigen::MatrixXd& pts) {
      Eigen::MatrixXd out = pts;
      out.row(0) = pts.row(0).cwiseProduct(pts.row(1)).array() + u;
      return out;
    };
    x = psi_true * x + u;
    const double y = x + meas_sigma * n(rng);
    belief = UnscentedPredict(belief, transition, Q, config);
    belief = UnscentedUpdate(belief, measure, Eigen::VectorXd::Constant(1, y),
                             R, config)
                 .belief;
    sxy += (y - u) * y_prev;
    sxx += y_prev * y_prev;
    y_prev = y;
    if (converged_at < 0 && std::abs(belief.mean[1] - psi_true) < 0.01 * psi_true) {
      converged_at = k;
    }
  }
  const double psi_ls = sxy / sxx;
  EXPECT_GE(converged_at, 0);
  EXPECT_LT(std::abs(belief.mean[1] - psi_true), 0.01 * psi_true);
  EXPECT_LT(std::abs(belief.mean[1] - psi_ls), 0.01 * psi_true);
  EXPECT_TRUE(belief.IsSymmetricPsd());
}

}  // namespace
}  // namespace tustin
