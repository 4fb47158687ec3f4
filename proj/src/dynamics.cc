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

#include "tustin/dynamics.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/LU>

namespace tustin {

void PendulumParams::Validate() const {
  if (!(m1 > 0 && m2 > 0 && l1 > 0 && l2 > 0 && lc1 > 0 && lc2 > 0 &&
        I1 > 0 && I2 > 0)) {
    throw std::invalid_argument(
        "pendulum masses, lengths and inertias must be positive");
  }
  if (!(c1 >= 0 && c2 >= 0)) {
    throw std::invalid_argument("joint friction must be non-negative");
  }
  if (lc1 > l1 || lc2 > l2) {
    throw std::invalid_argument("centre of mass must lie on the beam");
  }
  if (!std::isfinite(g)) throw std::invalid_argument("gravity must be finite");
}

PendulumParams PendulumParams::FromConfig(const KeyValueConfig& config,
                                          const std::string& prefix) {
  PendulumParams p;
  p.m1 = config.GetDouble(prefix + "m1", p.m1);
  p.m2 = config.GetDouble(prefix + "m2", p.m2);
  p.l1 = config.GetDouble(prefix + "l1", p.l1);
  p.l2 = config.GetDouble(prefix + "l2", p.l2);
  p.lc1 = config.GetDouble(prefix + "lc1", p.lc1);
  p.lc2 = config.GetDouble(prefix + "lc2", p.lc2);
  p.I1 = config.GetDouble(prefix + "I1", p.I1);
  p.I2 = config.GetDouble(prefix + "I2", p.I2);
  p.c1 = config.GetDouble(prefix + "c1", p.c1);
  p.c2 = config.GetDouble(prefix + "c2", p.c2);
  p.g = config.GetDouble(prefix + "g", p.g);
  p.Validate();
  return p;
}

Eigen::Matrix2d MassMatrix(double theta2, const PendulumParams& p) {
  const double c = std::cos(theta2);
  const double a22 = p.I2 + p.m2 * p.lc2 * p.lc2;
  const double a12 = a22 + p.m2 * p.l1 * p.lc2 * c;
  const double a11 = p.I1 + p.m1 * p.lc1 * p.lc1 +
                     p.m2 * (p.l1 * p.l1 + 2.0 * p.l1 * p.lc2 * c) + a22;
  Eigen::Matrix2d a;
  a << a11, a12, a12, a22;
  return a;
}

Eigen::Vector2d GeneralizedForces(const PlantState& s, const Torque& u,
                                  const PendulumParams& p) {
  const double h = p.m2 * p.l1 * p.lc2 * std::sin(s.theta2);
  const double s1 = std::sin(s.theta1);
  const double s12 = std::sin(s.theta1 + s.theta2);
  // Gravity pulls away from the upright pose, hence the positive sign.
  const double gravity1 = p.g * ((p.m1 * p.lc1 + p.m2 * p.l1) * s1 +
                                 p.m2 * p.lc2 * s12);
  const double gravity2 = p.g * p.m2 * p.lc2 * s12;
  return {u[0] - p.c1 * s.dtheta1 +
              h * (2.0 * s.dtheta1 * s.dtheta2 + s.dtheta2 * s.dtheta2) +
              gravity1,
          u[1] - p.c2 * s.dtheta2 - h * s.dtheta1 * s.dtheta1 + gravity2};
}

Eigen::Vector2d Accelerations(const PlantState& state, const Torque& u,
                              const PendulumParams& p) {
  if (!state.IsFinite() || !u.allFinite()) {
    throw InvalidStateError("non-finite pendulum state or torque");
  }
  return MassMatrix(state.theta2, p).inverse() *
         GeneralizedForces(state, u, p);
}

Eigen::Vector4d StateDerivative(const Eigen::Vector4d& x, const Torque& u,
                                const PendulumParams& p) {
  const Eigen::Vector2d acc = Accelerations(PlantState::FromVector(x), u, p);
  return {x[1], acc[0], x[3], acc[1]};
}

double TotalEnergy(const PlantState& s, const PendulumParams& p) {
  const Eigen::Vector2d qdot(s.dtheta1, s.dtheta2);
  const double kinetic = 0.5 * qdot.dot(MassMatrix(s.theta2, p) * qdot);
  const double c1 = std::cos(s.theta1);
  const double c12 = std::cos(s.theta1 + s.theta2);
  const double potential =
      p.g * (p.m1 * p.lc1 * (c1 - 1.0) + p.m2 * p.l1 * (c1 - 1.0) +
             p.m2 * p.lc2 * (c12 - 1.0));
  return kinetic + potential;
}

Rk45Result Rk45Step(const PlantState& state, const Torque& u,
                    const PendulumParams& p, double dt) {
  if (!(dt > 0)) throw std::invalid_argument("RK step size must be positive");
  if (!state.IsFinite() || !u.allFinite()) {
    throw InvalidStateError("non-finite pendulum state or torque");
  }
  auto rhs = [&](const Eigen::Vector4d& x) { return StateDerivative(x, u, p); };
  const auto r = DormandPrinceStep<Eigen::Vector4d>(rhs, state.ToVector(), dt);
  return {PlantState::FromVector(r.fifth), PlantState::FromVector(r.fourth)};
}

PlantState SimulateStep(const PlantState& state, const Torque& u,
                        const PendulumParams& p, double Ts, int substeps) {
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  const double dt = Ts / substeps;
  PlantState x = state;
  for (int i = 0; i < substeps; ++i) x = Rk45Step(x, u, p, dt).fifth;
  return x;
}

std::vector<PlantState> Simulate(const PlantState& initial,
                                 std::span<const Torque> torques,
                                 const PendulumParams& p, double Ts,
                                 int substeps) {
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  std::vector<PlantState> states;
  states.reserve(torques.size() + 1);
  states.push_back(initial);
  for (const Torque& u : torques) {
    states.push_back(SimulateStep(states.back(), u, p, Ts, substeps));
  }
  return states;
}

void WriteTrajectoryCsv(std::ostream& out, std::span<const PlantState> states,
                        std::span<const Torque> torques, double Ts) {
  if (torques.size() + 1 != states.size() && torques.size() != states.size()) {
    throw DimensionError("trajectory needs one torque per transition");
  }
  out << "t,theta1,dtheta1,theta2,dtheta2,u1,u2\n";
  char line[256];
  for (std::size_t k = 0; k < states.size(); ++k) {
    const PlantState& s = states[k];
    const Torque u = k < torques.size() ? torques[k] : Torque::Zero();
    std::snprintf(line, sizeof(line),
                  "%.6f,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<double>(k) * Ts, s.theta1, s.dtheta1, s.theta2,
                  s.dtheta2, u[0], u[1]);
    out << line;
  }
}

void WriteTrajectoryCsv(const std::filesystem::path& path,
                        std::span<const PlantState> states,
                        std::span<const Torque> torques, double Ts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  WriteTrajectoryCsv(out, states, torques, Ts);
}

Trajectory ReadTrajectoryCsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open trajectory " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("t,theta1,dtheta1,theta2,dtheta2,u1,u2", 0) != 0) {
    throw FormatError("unexpected trajectory header in " + path.string());
  }
  Trajectory traj;
  std::vector<Torque> torques;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<double, 7> v{};
    std::istringstream row(line);
    std::string cell;
    for (double& value : v) {
      if (!std::getline(row, cell, ',')) {
        throw FormatError("short trajectory row in " + path.string());
      }
      value = std::stod(cell);
    }
    traj.time.push_back(v[0]);
    traj.states.push_back({v[1], v[2], v[3], v[4]});
    torques.emplace_back(v[5], v[6]);
  }
  if (!torques.empty()) torques.pop_back();
  traj.torques = std::move(torques);
  return traj;
}

}  // namespace tustin
