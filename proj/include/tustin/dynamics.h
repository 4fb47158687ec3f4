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

#ifndef TUSTIN_DYNAMICS_H_
#define TUSTIN_DYNAMICS_H_

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tustin/config.h"
#include "tustin/errors.h"

namespace tustin {

// Torque on each joint (N m). Joint 2 acts between the two beams.
using Torque = Eigen::Vector2d;

// Physical constants of the double inverted pendulum. Defaults are the
// nominal plant used by every experiment.
struct PendulumParams {
  double m1 = 0.2;            // kg
  double m2 = 0.2;            // kg
  double l1 = 0.3;            // m
  double l2 = 0.3;            // m
  double lc1 = 0.15;          // m, joint to centre of mass
  double lc2 = 0.15;          // m
  double I1 = 0.2 * 0.09 / 12;  // kg m^2 about the centre of mass
  double I2 = 0.2 * 0.09 / 12;  // kg m^2
  double c1 = 0.1;            // N m s/rad, joint 1 viscous friction
  double c2 = 0.1;            // N m s/rad, joint 2 viscous friction
  double g = 9.81;            // m/s^2

  // Throws std::invalid_argument when masses, lengths or inertias are not
  // positive, frictions are negative, or lc_i > l_i.
  void Validate() const;

  // Reads `<prefix>m1`, `<prefix>c1`, ... on top of the defaults above.
  static PendulumParams FromConfig(const KeyValueConfig& config,
                                   const std::string& prefix = "plant.");
};

// Joint angles and rates. theta1 is measured from the upright vertical and
// theta2 relative to beam 1, so upright is all zeros and hanging is (pi, 0).
struct PlantState {
  double theta1 = 0.0;
  double dtheta1 = 0.0;
  double theta2 = 0.0;
  double dtheta2 = 0.0;

  Eigen::Vector4d ToVector() const {
    return {theta1, dtheta1, theta2, dtheta2};
  }
  static PlantState FromVector(const Eigen::Vector4d& v) {
    return {v[0], v[1], v[2], v[3]};
  }
  Eigen::Vector2d angles() const { return {theta1, theta2}; }
  bool IsFinite() const { return ToVector().allFinite(); }
};

// Mass matrix A(theta) of the Euler-Lagrange equations. Depends on theta2 only.
Eigen::Matrix2d MassMatrix(double theta2, const PendulumParams& p);

// Right-hand side B(theta, dtheta, u): torques minus Coriolis, friction and
// gravity terms.
Eigen::Vector2d GeneralizedForces(const PlantState& state, const Torque& u,
                                  const PendulumParams& p);

// Angular accelerations A^-1 B. Throws InvalidStateError on non-finite input.
Eigen::Vector2d Accelerations(const PlantState& state, const Torque& u,
                              const PendulumParams& p);

// Time derivative of [theta1, dtheta1, theta2, dtheta2].
Eigen::Vector4d StateDerivative(const Eigen::Vector4d& x, const Torque& u,
                                const PendulumParams& p);

// Kinetic plus potential energy. The potential is zero at the upright pose.
double TotalEnergy(const PlantState& state, const PendulumParams& p);

// Dormand-Prince 5(4) tableau.
namespace dopri {
inline constexpr std::array<double, 7> kC = {0.0,     1.0 / 5.0, 3.0 / 10.0,
                                             4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0};
inline constexpr std::array<std::array<double, 6>, 7> kA = {{
    {0, 0, 0, 0, 0, 0},
    {1.0 / 5.0, 0, 0, 0, 0, 0},
    {3.0 / 40.0, 9.0 / 40.0, 0, 0, 0, 0},
    {44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0, 0, 0},
    {19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0,
     0},
    {9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0,
     -5103.0 / 18656.0, 0},
    {35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0,
     11.0 / 84.0},
}};
inline constexpr std::array<double, 7> kB5 = {
    35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0,
    11.0 / 84.0, 0.0};
inline constexpr std::array<double, 7> kB4 = {
    5179.0 / 57600.0, 0.0,           7571.0 / 16695.0, 393.0 / 640.0,
    -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0};
}  // namespace dopri

template <typename Vector>
struct DormandPrinceResult {
  Vector fifth;   // propagated solution
  Vector fourth;  // embedded solution, for error estimates
};

// One fixed Dormand-Prince step of the autonomous ODE x' = f(x).
template <typename Vector, typename Rhs>
DormandPrinceResult<Vector> DormandPrinceStep(Rhs&& f, const Vector& x,
                                              double dt) {
  std::array<Vector, 7> k;
  for (int stage = 0; stage < 7; ++stage) {
    Vector xs = x;
    for (int j = 0; j < stage; ++j) {
      if (dopri::kA[stage][j] != 0.0) xs += dt * dopri::kA[stage][j] * k[j];
    }
    if (!xs.allFinite()) {
      throw IntegrationError("non-finite Runge-Kutta stage " +
                             std::to_string(stage));
    }
    k[stage] = f(xs);
    if (!k[stage].allFinite()) {
      throw IntegrationError("non-finite Runge-Kutta slope at stage " +
                             std::to_string(stage));
    }
  }
  DormandPrinceResult<Vector> result{x, x};
  for (int j = 0; j < 7; ++j) {
    result.fifth += dt * dopri::kB5[j] * k[j];
    result.fourth += dt * dopri::kB4[j] * k[j];
  }
  return result;
}

struct Rk45Result {
  PlantState fifth;
  PlantState fourth;
};

// One Dormand-Prince step with the torque held constant over dt.
Rk45Result Rk45Step(const PlantState& state, const Torque& u,
                    const PendulumParams& p, double dt);

// Advances one sampling period Ts using `substeps` equal RK steps.
PlantState SimulateStep(const PlantState& state, const Torque& u,
                        const PendulumParams& p, double Ts, int substeps);

// States at every sampling instant; size is torques.size() + 1.
std::vector<PlantState> Simulate(const PlantState& initial,
                                 std::span<const Torque> torques,
                                 const PendulumParams& p, double Ts,
                                 int substeps);

// CSV with header `t,theta1,dtheta1,theta2,dtheta2,u1,u2`. The torque on row k
// is the one applied over [t_k, t_k+1); the final row carries zero torque.
void WriteTrajectoryCsv(std::ostream& out, std::span<const PlantState> states,
                        std::span<const Torque> torques, double Ts);
void WriteTrajectoryCsv(const std::filesystem::path& path,
                        std::span<const PlantState> states,
                        std::span<const Torque> torques, double Ts);

struct Trajectory {
  std::vector<double> time;
  std::vector<PlantState> states;
  std::vector<Torque> torques;  // one fewer than states
};
Trajectory ReadTrajectoryCsv(const std::filesystem::path& path);

}  // namespace tustin

#endif  // TUSTIN_DYNAMICS_H_
