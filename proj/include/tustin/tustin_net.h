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

#ifndef TUSTIN_TUSTIN_NET_H_
#define TUSTIN_TUSTIN_NET_H_

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tustin/dynamics.h"

namespace tustin {

// Fully connected network with tanh hidden layers and a linear output layer.
// Weights of layer i map activations of size sizes[i] to sizes[i+1].
class Mlp {
 public:
  Mlp() = default;

  // Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static Mlp GlorotUniform(std::span<const int> sizes, std::uint64_t seed);
  static Mlp Zeros(std::span<const int> sizes);

  int num_layers() const { return static_cast<int>(weights_.size()); }
  int input_size() const;
  int output_size() const;
  std::vector<int> sizes() const;
  Eigen::Index ParameterCount() const;

  Eigen::MatrixXd& weight(int layer) { return weights_[layer]; }
  const Eigen::MatrixXd& weight(int layer) const { return weights_[layer]; }
  Eigen::VectorXd& bias(int layer) { return biases_[layer]; }
  const Eigen::VectorXd& bias(int layer) const { return biases_[layer]; }

  // Column-batched evaluation.
  Eigen::MatrixXd Forward(const Eigen::MatrixXd& inputs) const;
  Eigen::VectorXd Forward(const Eigen::VectorXd& input) const;

  // Activations of the last hidden layer, i.e. the input of the output layer.
  Eigen::MatrixXd LastHidden(const Eigen::MatrixXd& inputs) const;

  // Per-layer activations kept for the reverse pass. activations[0] is the
  // input, activations.back() the output.
  struct Tape {
    std::vector<Eigen::MatrixXd> activations;
  };
  Eigen::MatrixXd Forward(const Eigen::MatrixXd& inputs, Tape* tape) const;

  // Reverse pass for d(sum_j output_adjoint(:,j) . output(:,j)). Parameter
  // gradients are summed over the batch and added to `gradient` (which must
  // have this network's shapes); returns the adjoint of the inputs.
  Eigen::MatrixXd Backward(const Tape& tape,
                           const Eigen::MatrixXd& output_adjoint,
                           Mlp* gradient) const;

  // Flat layout: for each layer, weights row-major then bias.
  Eigen::VectorXd Flatten() const;
  void Unflatten(const Eigen::VectorXd& flat);

  // Output layer parameters: weights row-major then bias.
  Eigen::Index LastLayerParameterCount() const;
  Eigen::VectorXd LastLayerParameters() const;
  void SetLastLayerParameters(const Eigen::VectorXd& psi);
  // Offset of the output layer inside Flatten().
  Eigen::Index LastLayerOffset() const;

  bool IsFinite() const;
  // Throws DimensionError when shapes do not chain.
  void Validate() const;

  bool operator==(const Mlp& other) const;

 private:
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

inline constexpr int kFeatureCount = 8;
inline constexpr int kDefaultHiddenSizes[] = {100, 100};
inline constexpr std::span<const int> kDefaultHidden{kDefaultHiddenSizes};

// Tustin-Net for the double pendulum. The network maps encoded features to
// the per-step increment of both normalized velocities; positions follow the
// trapezoidal rule.
struct TustinNetModel {
  Mlp mlp;
  double Ts = 0.01;
  double Kv = 2.0;
  double angle_scale = std::numbers::pi;
  double velocity_scale = 2.0 * std::numbers::pi;
  double torque_scale = 5.0;

  // [8 -> hidden... -> 2] with Glorot initialization; the output layer
  // weights are then multiplied by `output_scale`.
  static TustinNetModel Create(std::uint64_t seed,
                               std::span<const int> hidden = kDefaultHidden,
                               double Ts = 0.01, double torque_scale = 5.0,
                               double output_scale = 1.0);
  static TustinNetModel Zero(std::span<const int> hidden = kDefaultHidden,
                             double Ts = 0.01, double torque_scale = 5.0);

  // Kv must equal velocity_scale / angle_scale; shapes must chain from 8
  // inputs to 2 outputs.
  void Validate() const;
};

// Normalized network state: positions are angles / angle_scale, velocities
// are rates / velocity_scale.
struct NetState {
  Eigen::Vector2d pos = Eigen::Vector2d::Zero();
  Eigen::Vector2d vel = Eigen::Vector2d::Zero();

  // Packed as [pos1, vel1, pos2, vel2], the same ordering as PlantState.
  Eigen::Vector4d ToVector() const { return {pos[0], vel[0], pos[1], vel[1]}; }
  static NetState FromVector(const Eigen::Vector4d& v) {
    return {{v[0], v[2]}, {v[1], v[3]}};
  }
};

NetState ToNetState(const PlantState& s, const TustinNetModel& model);
PlantState ToPlantState(const NetState& s, const TustinNetModel& model);

using Features = Eigen::Matrix<double, kFeatureCount, 1>;

// [sin th1, cos th1, sin th2, cos th2, vel1, vel2, u1/us, u2/us] with
// th = angle_scale * pos.
Features EncodeFeatures(const TustinNetModel& model, const NetState& s,
                        const Torque& u);

// vel' = vel + mlp(features); pos' = pos + Ts Kv (vel' + vel) / 2.
NetState Step(const TustinNetModel& model, const NetState& s, const Torque& u);

// Same update with the output layer replaced by `psi`.
NetState Step(const TustinNetModel& model, const NetState& s, const Torque& u,
              const Eigen::VectorXd& psi);

// States s0, s1, ..., size torques.size() + 1.
std::vector<NetState> Rollout(const TustinNetModel& model, const NetState& s0,
                              std::span<const Torque> torques);

// Derivatives of the packed next state [pos1', vel1', pos2', vel2'].
struct StepJacobians {
  Eigen::Matrix4d state;                 // d next / d packed state
  Eigen::Matrix<double, 4, 2> input;     // d next / d torque (N m)
  Eigen::MatrixXd params;                // d next / d Flatten(), if requested
  Eigen::MatrixXd last_layer;            // d next / d output-layer params
};

enum class JacobianParts { kStateInput, kWithLastLayer, kAll };

StepJacobians ComputeStepJacobians(const TustinNetModel& model,
                                   const NetState& s, const Torque& u,
                                   JacobianParts parts = JacobianParts::kAll);

// Network state from two consecutive angle measurements (rad): positions from
// the later sample, velocities by the backward Euler difference.
NetState InitStateFromMeasurements(const TustinNetModel& model,
                                   const Eigen::Vector2d& y0,
                                   const Eigen::Vector2d& y1);

// Checkpoint: a one-line magic, a one-line JSON header describing shapes and
// scalars, then the raw parameters as little-endian float64.
inline constexpr int kCheckpointFormatVersion = 1;
std::string SerializeModel(const TustinNetModel& model);
TustinNetModel DeserializeModel(const std::string& bytes);
void SaveModel(const TustinNetModel& model, const std::filesystem::path& path);
TustinNetModel LoadModel(const std::filesystem::path& path);

}  // namespace tustin

#endif  // TUSTIN_TUSTIN_NET_H_
