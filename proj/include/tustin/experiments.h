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

#ifndef TUSTIN_EXPERIMENTS_H_
#define TUSTIN_EXPERIMENTS_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tustin/config.h"
#include "tustin/dynamics.h"
#include "tustin/estimation.h"
#include "tustin/mpc.h"
#include "tustin/training.h"
#include "tustin/tustin_net.h"

namespace tustin {

const char* CodeVersion();
// The repository's config/default.cfg.
std::filesystem::path DefaultConfigPath();

struct Thresholds {
  double free_fall_endpoint = 0.1;   // rad
  double lqr_prediction = 0.05;      // rad
  double regulation_angle = 0.05;    // rad
  double regulation_velocity = 0.2;  // rad/s
  double window = 2.0;               // s, final window of closed-loop runs
  double tracking_error = 0.1;       // rad
  double tracking_ratio = 2.0;
};

struct EvalSettings {
  int episodes = 1;
  double free_fall_duration = 6.0;
  double lqr_start = 1.0;  // s
  int lqr_steps = 50;
};

struct CompareSettings {
  double duration = 6.0;
  // Added to the Euler-initialized velocity estimate, rad/s.
  double initial_velocity_error = 0.0;
};

struct ExperimentConfig {
  KeyValueConfig source;
  std::uint64_t seed = 1;
  PendulumParams plant;
  PendulumParams changed_plant;
  DatasetSpec dataset;
  std::vector<int> hidden{100, 100};
  double torque_scale = 5.0;
  double output_init_scale = 0.01;
  TrainConfig train;
  EvalSettings eval;
  NoiseConfig noise;
  UkfConfig ukf;
  double initial_position_sigma = 0.01;
  double initial_velocity_sigma = 0.1;
  double parameter_variance = 1e-4;
  CompareSettings compare;
  MpcConfig mpc;
  double mpc_duration = 10.0;
  int mpc_substeps = 10;
  bool mpc_measurement_noise = false;
  Eigen::Vector4d x0{0.1, 0.0, -0.1, 0.0};
  Eigen::Vector4d tracking_reference{0.7, 0.0, -1.4, 0.0};
  Thresholds thresholds;

  // Missing keys keep their defaults; `seed` drives every derived seed.
  static ExperimentConfig FromConfig(const KeyValueConfig& config);
  static ExperimentConfig Load(const std::filesystem::path& path);
  void OverrideSeed(std::uint64_t new_seed);

  std::uint64_t ModelSeed() const;
  std::uint64_t EvalSeed() const;
  std::uint64_t NoiseSeed() const;
  std::string Hash() const;  // FNV-1a of the effective config text
};

// Outcome of one command; `passed` maps to the process exit code.
struct CommandResult {
  bool passed = true;
  std::string summary;
  // Flat name -> value metrics, reported in run.json.
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::string> outputs;
};

// Throws std::runtime_error when `dir` holds files and `force` is not set.
void PrepareOutputDir(const std::filesystem::path& dir, bool force);

void WriteRunRecord(const std::filesystem::path& dir, const std::string& command,
                    const ExperimentConfig& config, const CommandResult& result,
                    double wall_seconds);

CommandResult CmdCollect(const ExperimentConfig& config,
                         const std::filesystem::path& out,
                         bool open_loop_only);

CommandResult CmdTrain(const ExperimentConfig& config,
                       const std::filesystem::path& dataset,
                       const std::filesystem::path& out);

enum class EvalScenario { kFreeFall, kLqrClosedLoop };
EvalScenario ParseScenario(const std::string& name);
const char* ScenarioName(EvalScenario scenario);

struct EvalMetrics {
  Eigen::Vector2d rmse_full = Eigen::Vector2d::Zero();
  Eigen::Vector2d rmse_first = Eigen::Vector2d::Zero();
  Eigen::Vector2d max_error_first = Eigen::Vector2d::Zero();
  // Wrapped distance of the final prediction from (pi, 0); free fall only.
  Eigen::Vector2d endpoint_error = Eigen::Vector2d::Zero();
};

// Rolls `model` against one fresh episode; `trace` receives
// t,theta1,theta2,theta1_pred,theta2_pred rows when non-null.
EvalMetrics EvaluateEpisode(const ExperimentConfig& config,
                            const TustinNetModel& model, EvalScenario scenario,
                            int index, std::ostream* trace);

CommandResult CmdEval(const ExperimentConfig& config,
                      const TustinNetModel& model, EvalScenario scenario,
                      const std::filesystem::path& out);

struct FilterComparison {
  Eigen::Vector4d ukf_rmse = Eigen::Vector4d::Zero();  // per state, plant units
  Eigen::Vector4d ekf_rmse = Eigen::Vector4d::Zero();
  double ukf_position_rmse = 0.0;  // over both angles
  double ekf_position_rmse = 0.0;
  std::vector<PlantState> truth;
  std::vector<PlantState> ukf;
  std::vector<PlantState> ekf;
};

// Both filters see the same episode, torques and noise realization.
FilterComparison CompareFilters(const ExperimentConfig& config,
                                const TustinNetModel& model);

CommandResult CmdFilterCompare(const ExperimentConfig& config,
                               const TustinNetModel& model,
                               const std::filesystem::path& out);

enum class MpcVariant {
  kNominal,
  kChangedNonAdaptive,
  kChangedAdaptive,
  kTrackNonAdaptive,
  kTrackAdaptive,
};
MpcVariant ParseVariant(const std::string& name);
const char* VariantName(MpcVariant variant);

ClosedLoopLog RunVariant(const ExperimentConfig& config,
                         const TustinNetModel& model, MpcVariant variant);

// Regulation bound: final-window |theta_i| and |dtheta_i| below thresholds.
bool MeetsRegulation(const ClosedLoopLog& log, const Thresholds& thresholds);

// Single variant: nominal and changed-adaptive must regulate,
// changed-nonadaptive must not, track-adaptive must meet the tracking bound,
// track-nonadaptive must exceed it.
CommandResult CmdMpc(const ExperimentConfig& config,
                     const TustinNetModel& model, MpcVariant variant,
                     const std::filesystem::path& out);

}  // namespace tustin

#endif  // TUSTIN_EXPERIMENTS_H_
