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

#ifndef TUSTIN_TRAINING_H_
#define TUSTIN_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tustin/dynamics.h"
#include "tustin/tustin_net.h"

namespace tustin {

enum class Regime { kOpenLoopFall, kLqrClosedLoop };
std::string RegimeName(Regime regime);
Regime ParseRegime(const std::string& name);

// One simulated experiment. Only the angles are measured; the full plant
// states are kept for evaluation and CSV export.
struct Episode {
  std::vector<Eigen::Vector2d> y;   // measured angles, size u.size() + 1
  std::vector<Torque> u;
  std::vector<PlantState> states;   // ground truth, same size as y
  double Ts = 0.01;
  Regime regime = Regime::kOpenLoopFall;
  std::uint64_t seed = 0;

  std::size_t rows() const { return y.size(); }
};

struct DatasetSpec {
  int open_loop_episodes = 40;
  int closed_loop_episodes = 40;
  double duration = 12.0;           // s
  double Ts = 0.01;
  int substeps = 10;
  double u_max = 5.0;
  double fall_torque_amplitude = 0.5;  // open loop torques ~ U(-a, a)
  double torque_hold = 0.1;         // s, open loop torque hold time
  double upright_spread = 0.1;      // rad, closed loop start |theta_i| bound
  double exploration_sigma = 0.1;   // N m, Gaussian torque noise
  Eigen::Vector4d lqr_q{10.0, 1.0, 10.0, 1.0};
  Eigen::Vector2d lqr_r{0.1, 0.1};
  std::uint64_t seed = 1;
};

// Independent per-episode seed derived from a base seed.
std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t stream,
                         std::uint64_t index);

Episode CollectOpenLoopEpisode(const PendulumParams& p, const DatasetSpec& spec,
                               std::uint64_t seed);
Episode CollectClosedLoopEpisode(const PendulumParams& p,
                                 const DatasetSpec& spec,
                                 const Eigen::Matrix<double, 2, 4>& K,
                                 std::uint64_t seed);
// Upright LQR gain used for closed loop data.
Eigen::Matrix<double, 2, 4> DataCollectionGain(const PendulumParams& p,
                                               const DatasetSpec& spec);

// Open loop episodes first, then closed loop ones.
std::vector<Episode> CollectDataset(const PendulumParams& p,
                                    const DatasetSpec& spec);

struct EpisodeSplit {
  Episode train;
  Episode validation;
  std::size_t boundary_row = 0;
};

// Chronological split at `split_time`. The boundary row ends the training
// half and starts the validation half. Throws std::invalid_argument if the
// episode is shorter than 2 * split_time.
EpisodeSplit Split(const Episode& episode, double split_time = 6.0);
// Inverse of Split.
Episode Concatenate(const Episode& first, const Episode& second);

// Mean over steps and joints of 2 (1 - cos(predicted - measured)).
double AngleLoss(std::span<const Eigen::Vector2d> predicted,
                 std::span<const Eigen::Vector2d> measured);
// Mean of (sin a - sin b)^2 + (cos a - cos b)^2, algebraically identical.
double AngleLossSinCos(std::span<const Eigen::Vector2d> predicted,
                       std::span<const Eigen::Vector2d> measured);

// A window of measurements y[begin..end] of an episode. The rollout starts
// from the state rebuilt from y[begin], y[begin+1] and predicts
// y[begin+2..end] with torques u[begin+1..end-1].
struct Segment {
  const Episode* episode = nullptr;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t steps() const { return end > begin + 1 ? end - begin - 1 : 0; }
};

// Consecutive windows of `window` steps; 0 means a single window over the
// whole episode.
std::vector<Segment> MakeSegments(const Episode& episode, std::size_t window);

struct LossAndGradient {
  double loss = 0.0;          // mean over every predicted step and joint
  std::size_t terms = 0;      // number of (step, joint) pairs
  Eigen::VectorXd gradient;   // d loss / d Flatten(), empty if not requested
};

// Loss of a batch of segments and, optionally, its exact gradient by
// backpropagation through time over each whole segment.
LossAndGradient BatchLoss(const TustinNetModel& model,
                          std::span<const Segment> segments,
                          bool with_gradient);

// Single-segment convenience wrapper.
LossAndGradient BpttGradient(const TustinNetModel& model,
                             const Segment& segment);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam.
class Adam {
 public:
  Adam(const AdamConfig& config, Eigen::Index dimension);
  void Step(Eigen::VectorXd* params, const Eigen::VectorXd& gradient);
  int steps() const { return t_; }
  double learning_rate() const { return config_.learning_rate; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  AdamConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  int t_ = 0;
};

struct TrainConfig {
  AdamConfig adam;
  int epochs = 400;
  int batch_size = 4;                 // episodes per gradient step
  std::size_t open_loop_segment = 100;  // steps, 0: whole 6 s half
  std::size_t closed_loop_segment = 100;
  int patience = 100;                 // epochs without validation improvement
  double gradient_clip = 1.0;         // global-norm clip, 0 disables
  double lr_decay = 0.99;             // per-epoch learning-rate factor
  double min_learning_rate = 1e-5;
  std::uint64_t seed = 7;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  TustinNetModel model;   // best validation checkpoint
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Adam on mini-batches of episodes (training halves); validation loss on the
// validation halves after every epoch. Throws DivergenceError on NaN loss.
TrainResult Train(const TustinNetModel& initial,
                  std::span<const Episode> dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Dataset directory: episode_NNN.csv per episode plus manifest.csv.
void WriteDataset(const std::filesystem::path& dir,
                  std::span<const Episode> episodes);
std::vector<Episode> ReadDataset(const std::filesystem::path& dir);

void WriteTrainingLog(const std::filesystem::path& path,
                      std::span<const EpochRecord> history);

}  // namespace tustin

#endif  // TUSTIN_TRAINING_H_
