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

#ifndef TUSTIN_MPC_H_
#define TUSTIN_MPC_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tustin/dynamics.h"
#include "tustin/estimation.h"
#include "tustin/tustin_net.h"

namespace tustin {

// One-step prediction model over the packed normalized state. Torques are in
// N m.
class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual Eigen::Vector4d Next(const Eigen::Vector4d& x,
                               const Torque& u) const = 0;
  virtual void Jacobians(const Eigen::Vector4d& x, const Torque& u,
                         Eigen::Matrix4d* A,
                         Eigen::Matrix<double, 4, 2>* B) const = 0;
  virtual double angle_scale() const = 0;
  virtual double velocity_scale() const = 0;
  virtual double torque_scale() const = 0;
};

class TustinNetStepModel final : public StepModel {
 public:
  explicit TustinNetStepModel(const TustinNetModel& model) : model_(model) {}
  Eigen::Vector4d Next(const Eigen::Vector4d& x,
                       const Torque& u) const override;
  void Jacobians(const Eigen::Vector4d& x, const Torque& u, Eigen::Matrix4d* A,
                 Eigen::Matrix<double, 4, 2>* B) const override;
  double angle_scale() const override { return model_.angle_scale; }
  double velocity_scale() const override { return model_.velocity_scale; }
  double torque_scale() const override { return model_.torque_scale; }

 private:
  const TustinNetModel& model_;
};

// x' = A x + B u.
class LinearStepModel final : public StepModel {
 public:
  LinearStepModel(const Eigen::Matrix4d& A, const Eigen::Matrix<double, 4, 2>& B,
                  double angle_scale, double velocity_scale, double torque_scale)
      : A_(A),
        B_(B),
        angle_scale_(angle_scale),
        velocity_scale_(velocity_scale),
        torque_scale_(torque_scale) {}
  Eigen::Vector4d Next(const Eigen::Vector4d& x,
                       const Torque& u) const override {
    return A_ * x + B_ * u;
  }
  void Jacobians(const Eigen::Vector4d&, const Torque&, Eigen::Matrix4d* A,
                 Eigen::Matrix<double, 4, 2>* B) const override {
    *A = A_;
    *B = B_;
  }
  double angle_scale() const override { return angle_scale_; }
  double velocity_scale() const override { return velocity_scale_; }
  double torque_scale() const override { return torque_scale_; }

 private:
  Eigen::Matrix4d A_;
  Eigen::Matrix<double, 4, 2> B_;
  double angle_scale_;
  double velocity_scale_;
  double torque_scale_;
};

// Q acts on the normalized packed state error and R on normalized torques
// u / torque_scale.
struct MpcConfig {
  int horizon = 5;
  Eigen::Matrix4d Q = Eigen::Vector4d(10.0, 0.1, 10.0, 0.1).asDiagonal();
  Eigen::Matrix2d R = 0.01 * Eigen::Matrix2d::Identity();
  double u_max = 5.0;
  int max_iterations = 100;
  // On the projected step u - P(u - g / c), where c is the curvature of the
  // input penalty; N m.
  double gradient_tolerance = 1e-6;
  // Plant units, PlantState ordering.
  Eigen::Vector4d reference = Eigen::Vector4d::Zero();
  // Weight u(k) - u(k-1) instead of u(k); u(-1) is the last applied torque.
  bool weight_increments = false;

  // Throws std::invalid_argument.
  void Validate() const;
};

using TorquePlan = Eigen::Matrix<double, Eigen::Dynamic, 2>;  // N x 2

struct CostAndGradient {
  double cost = 0.0;
  TorquePlan gradient;
};

// Wrap-aware normalized error of x against the reference (plant units).
Eigen::Vector4d StateError(const StepModel& model, const Eigen::Vector4d& x,
                           const Eigen::Vector4d& reference);

CostAndGradient HorizonCost(const StepModel& model, const Eigen::Vector4d& s0,
                            const TorquePlan& torques, const MpcConfig& config,
                            const Torque& previous_torque = Torque::Zero());

struct MpcSolution {
  TorquePlan torques;
  std::vector<Eigen::Vector4d> predicted;  // N + 1 states, s0 first
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

TorquePlan ShiftWarmStart(const TorquePlan& previous);

// Projected gradient with Barzilai-Borwein trial steps and Armijo
// backtracking. The returned cost never exceeds the cost at the (projected)
// warm start.
MpcSolution SolveMpc(const StepModel& model, const Eigen::Vector4d& s0,
                     const MpcConfig& config,
                     const std::optional<TorquePlan>& warm_start = std::nullopt,
                     const Torque& previous_torque = Torque::Zero());

enum class FilterKind { kUkf, kEkf, kJukf };
const char* FilterName(FilterKind kind);
FilterKind ParseFilter(const std::string& name);

struct ClosedLoopConfig {
  FilterKind filter = FilterKind::kUkf;
  NoiseConfig noise;
  UkfConfig ukf;
  bool adaptive = false;               // requires kJukf
  double parameter_variance = 1e-4;    // initial output-layer variance
  double duration = 10.0;              // s
  int substeps = 10;
  bool measurement_noise = false;
  std::uint64_t noise_seed = 1;
  // Plant units; absent means the true initial state.
  std::optional<Eigen::Vector4d> initial_estimate;
  double initial_position_sigma = 1e-2;  // rad
  double initial_velocity_sigma = 1e-1;  // rad/s
};

struct ClosedLoopSample {
  double t = 0.0;
  PlantState state;
  Torque torque = Torque::Zero();
  PlantState estimate;
  Eigen::Vector4d estimate_sigma = Eigen::Vector4d::Zero();  // plant units
  Eigen::Vector2d innovation = Eigen::Vector2d::Zero();      // rad
  double mpc_cost = 0.0;
  int solver_iterations = 0;
};

struct ClosedLoopLog {
  std::vector<ClosedLoopSample> samples;
  TustinNetModel final_model;

  // Means over samples with t >= t_end - window.
  Eigen::Vector2d MeanAngleError(const Eigen::Vector4d& reference,
                                 double window) const;
  Eigen::Vector2d MaxAbsAngle(const Eigen::Vector4d& reference,
                              double window) const;
  Eigen::Vector2d MaxAbsVelocity(double window) const;
  double MeanInnovationNorm(double window) const;
  // Fraction of samples whose true state lies within 3 sigma of the estimate
  // in every component.
  double ConsistencyFraction() const;
};

ClosedLoopLog ClosedLoop(const PendulumParams& plant,
                         const TustinNetModel& model,
                         const ClosedLoopConfig& loop, const MpcConfig& mpc,
                         const PlantState& x0);

void WriteClosedLoopCsv(std::ostream& out, const ClosedLoopLog& log);
void WriteClosedLoopCsv(const std::filesystem::path& path,
                        const ClosedLoopLog& log);

}  // namespace tustin

#endif  // TUSTIN_MPC_H_
