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

#include "tustin/experiments.h"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>

#include <gtest/gtest.h>

#include "json.hpp"
#include "small_config.h"
#include "tustin/errors.h"

namespace tustin {
namespace {

namespace fs = std::filesystem;

fs::path TempDir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("tustin_experiments_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ExperimentConfig Small() {
  return ExperimentConfig::FromConfig(KeyValueConfig::Parse(kSmallConfig));
}

TEST(ExperimentConfigTest, DefaultFileMatchesBuiltInDefaults) {
  const ExperimentConfig file = ExperimentConfig::Load(DefaultConfigPath());
  const ExperimentConfig built = ExperimentConfig::FromConfig(KeyValueConfig{});
  EXPECT_EQ(file.seed, built.seed);
  EXPECT_EQ(file.hidden, built.hidden);
  EXPECT_EQ(file.dataset.open_loop_episodes, built.dataset.open_loop_episodes);
  EXPECT_DOUBLE_EQ(file.dataset.fall_torque_amplitude,
                   built.dataset.fall_torque_amplitude);
  EXPECT_DOUBLE_EQ(file.noise.velocity_sigma, built.noise.velocity_sigma);
  EXPECT_EQ(file.mpc.horizon, built.mpc.horizon);
  EXPECT_EQ(file.mpc.Q, built.mpc.Q);
  EXPECT_EQ(file.mpc.R, built.mpc.R);
  EXPECT_EQ(file.train.epochs, built.train.epochs);
  EXPECT_DOUBLE_EQ(file.plant.I1, built.plant.I1);
  EXPECT_DOUBLE_EQ(file.thresholds.lqr_prediction, 0.05);
  EXPECT_DOUBLE_EQ(file.thresholds.free_fall_endpoint, 0.1);
}

TEST(ExperimentConfigTest, ChangedPlantOverridesNominal) {
  const ExperimentConfig c = Small();
  EXPECT_DOUBLE_EQ(c.changed_plant.c1, 0.01);
  EXPECT_DOUBLE_EQ(c.changed_plant.m2, 0.3);
  EXPECT_DOUBLE_EQ(c.changed_plant.c2, c.plant.c2);
  EXPECT_DOUBLE_EQ(c.changed_plant.m1, c.plant.m1);
}

TEST(ExperimentConfigTest, SeedDrivesEverythingAndHash) {
  ExperimentConfig a = Small();
  ExperimentConfig b = Small();
  EXPECT_EQ(a.Hash(), b.Hash());
  EXPECT_EQ(a.dataset.seed, 3u);
  b.OverrideSeed(4);
  EXPECT_NE(a.Hash(), b.Hash());
  EXPECT_EQ(b.dataset.seed, 4u);
  EXPECT_NE(a.train.seed, b.train.seed);
  EXPECT_NE(a.ModelSeed(), b.ModelSeed());
  EXPECT_NE(a.EvalSeed(), b.EvalSeed());
  EXPECT_NE(a.NoiseSeed(), b.NoiseSeed());
  EXPECT_EQ(a.Hash().size(), 16u);
}

TEST(ExperimentConfigTest, RejectsBadValues) {
  EXPECT_THROW(ExperimentConfig::Load("/nonexistent/tustin.cfg"), ConfigError);
  EXPECT_THROW(ExperimentConfig::FromConfig(
                   KeyValueConfig::Parse("mpc.horizon = 0\n")),
               ConfigError);
  EXPECT_THROW(ExperimentConfig::FromConfig(
                   KeyValueConfig::Parse("eval.episodes = 0\n")),
               ConfigError);
  EXPECT_THROW(ExperimentConfig::FromConfig(
                   KeyValueConfig::Parse("train.epochs = many\n")),
               ConfigError);
}

TEST(ParseTest, NamesRoundTrip) {
  for (auto s : {EvalScenario::kFreeFall, EvalScenario::kLqrClosedLoop}) {
    EXPECT_EQ(ParseScenario(ScenarioName(s)), s);
  }
  for (auto v : {MpcVariant::kNominal, MpcVariant::kChangedNonAdaptive,
                 MpcVariant::kChangedAdaptive, MpcVariant::kTrackNonAdaptive,
                 MpcVariant::kTrackAdaptive}) {
    EXPECT_EQ(ParseVariant(VariantName(v)), v);
  }
  EXPECT_THROW(ParseScenario("swing-up"), std::invalid_argument);
  EXPECT_THROW(ParseVariant("fast"), std::invalid_argument);
}

TEST(OutputDirTest, RefusesNonEmptyWithoutForce) {
  const fs::path dir = TempDir("prepare");
  PrepareOutputDir(dir, false);
  EXPECT_TRUE(fs::is_directory(dir));
  PrepareOutputDir(dir, false);
  std::ofstream(dir / "stale.txt") << "x";
  EXPECT_THROW(PrepareOutputDir(dir, false), std::runtime_error);
  EXPECT_TRUE(fs::exists(dir / "stale.txt"));
  PrepareOutputDir(dir, true);
  EXPECT_FALSE(fs::exists(dir / "stale.txt"));
  fs::remove_all(dir);
}

TEST(RunRecordTest, HoldsProvenanceAndMetrics) {
  const fs::path dir = TempDir("record");
  PrepareOutputDir(dir, false);
  const ExperimentConfig c = Small();
  CommandResult r;
  r.passed = false;
  r.summary = "something";
  r.metrics = {{"a", 1.5}, {"b", -2.0}};
  r.outputs = {"x.csv"};
  WriteRunRecord(dir, "eval", c, r, 0.25);
  const auto j = nlohmann::json::parse(ReadFile(dir / "run.json"));
  EXPECT_EQ(j["command"], "eval");
  EXPECT_EQ(j["code_version"], CodeVersion());
  EXPECT_EQ(j["config_hash"], c.Hash());
  EXPECT_EQ(j["seed"], 3);
  EXPECT_EQ(j["passed"], false);
  EXPECT_EQ(j["summary"], "something");
  EXPECT_DOUBLE_EQ(j["metrics"]["a"].get<double>(), 1.5);
  EXPECT_EQ(j["outputs"][0], "x.csv");
  EXPECT_EQ(j["config"]["model.hidden"], "8, 8");
  EXPECT_DOUBLE_EQ(j["wall_time_s"].get<double>(), 0.25);
  fs::remove_all(dir);
}

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(TempDir("pipeline"));
    const ExperimentConfig c = Small();
    PrepareOutputDir(*root_ / "data", false);
    CmdCollect(c, *root_ / "data", false);
    PrepareOutputDir(*root_ / "model", false);
    CmdTrain(c, *root_ / "data", *root_ / "model");
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete root_;
  }
  static fs::path* root_;
};

fs::path* PipelineTest::root_ = nullptr;

TEST_F(PipelineTest, CollectAndTrainAreReproducible) {
  const ExperimentConfig c = Small();
  const fs::path again = *root_ / "again";
  PrepareOutputDir(again / "data", false);
  const CommandResult collected = CmdCollect(c, again / "data", false);
  EXPECT_EQ(collected.metrics[0].second, 2.0);
  EXPECT_EQ(ReadFile(again / "data" / "manifest.csv"),
            ReadFile(*root_ / "data" / "manifest.csv"));
  EXPECT_EQ(ReadFile(again / "data" / "episode_001.csv"),
            ReadFile(*root_ / "data" / "episode_001.csv"));
  PrepareOutputDir(again / "model", false);
  CmdTrain(c, again / "data", again / "model");
  EXPECT_EQ(ReadFile(again / "model" / "model.tnck"),
            ReadFile(*root_ / "model" / "model.tnck"));
  EXPECT_EQ(ReadFile(again / "model" / "training_log.csv"),
            ReadFile(*root_ / "model" / "training_log.csv"));
}

TEST_F(PipelineTest, OpenLoopOnlyDataset) {
  const fs::path dir = *root_ / "open";
  PrepareOutputDir(dir, false);
  CmdCollect(Small(), dir, true);
  const auto episodes = ReadDataset(dir);
  ASSERT_EQ(episodes.size(), 1u);
  EXPECT_EQ(episodes[0].regime, Regime::kOpenLoopFall);
}

TEST_F(PipelineTest, EvalThresholdDecidesVerdict) {
  ExperimentConfig c = Small();
  const TustinNetModel model = LoadModel(*root_ / "model" / "model.tnck");
  const fs::path dir = *root_ / "eval";
  PrepareOutputDir(dir, false);
  c.thresholds.free_fall_endpoint = 10.0;
  EXPECT_TRUE(CmdEval(c, model, EvalScenario::kFreeFall, dir).passed);
  c.thresholds.free_fall_endpoint = 0.0;
  const CommandResult r = CmdEval(c, model, EvalScenario::kFreeFall, dir);
  EXPECT_FALSE(r.passed);
  EXPECT_TRUE(fs::exists(dir / r.outputs[0]));
  const CommandResult lqr = CmdEval(c, model, EvalScenario::kLqrClosedLoop, dir);
  EXPECT_EQ(lqr.metrics.size(), 6u);
}

TEST_F(PipelineTest, EvaluateEpisodeAgreesWithRollout) {
  const ExperimentConfig c = Small();
  const TustinNetModel model = LoadModel(*root_ / "model" / "model.tnck");
  std::ostringstream trace;
  const EvalMetrics m =
      EvaluateEpisode(c, model, EvalScenario::kFreeFall, 0, &trace);
  EXPECT_GE(m.rmse_full.minCoeff(), 0.0);
  EXPECT_LE(m.max_error_first.maxCoeff(), 2.0 * std::numbers::pi);
  EXPECT_EQ(trace.str().rfind("t,theta1,theta2,theta1_pred,theta2_pred\n", 0), 0u);
  std::ostringstream again;
  EvaluateEpisode(c, model, EvalScenario::kFreeFall, 0, &again);
  EXPECT_EQ(trace.str(), again.str());
}

TEST_F(PipelineTest, FilterCompareWritesTraces) {
  const ExperimentConfig c = Small();
  const TustinNetModel model = LoadModel(*root_ / "model" / "model.tnck");
  const FilterComparison cmp = CompareFilters(c, model);
  EXPECT_EQ(cmp.truth.size(), cmp.ukf.size());
  EXPECT_EQ(cmp.truth.size(), cmp.ekf.size());
  EXPECT_GT(cmp.ukf_position_rmse, 0.0);
  const fs::path dir = *root_ / "compare";
  PrepareOutputDir(dir, false);
  const CommandResult r = CmdFilterCompare(c, model, dir);
  for (const auto& name : r.outputs) EXPECT_TRUE(fs::exists(dir / name)) << name;
  EXPECT_TRUE(fs::exists(dir / "rmse.csv"));
}

TEST(FilterCompareTest, ZeroNetworkFiltersAgree) {
  const int hidden[] = {8, 8};
  const TustinNetModel zero = TustinNetModel::Zero(hidden);
  const FilterComparison cmp = CompareFilters(Small(), zero);
  EXPECT_NEAR(cmp.ukf_position_rmse, cmp.ekf_position_rmse, 1e-6);
  EXPECT_LT((cmp.ukf_rmse - cmp.ekf_rmse).cwiseAbs().maxCoeff(), 1e-6);
}

TEST_F(PipelineTest, MpcVariantWritesRunLog) {
  const ExperimentConfig c = Small();
  const TustinNetModel model = LoadModel(*root_ / "model" / "model.tnck");
  const fs::path dir = *root_ / "mpc";
  PrepareOutputDir(dir, false);
  CmdMpc(c, model, MpcVariant::kChangedAdaptive, dir);
  std::ifstream in(dir / "run_log.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("t,theta1,", 0), 0u);
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 30);
  const ClosedLoopLog a = RunVariant(c, model, MpcVariant::kTrackNonAdaptive);
  const ClosedLoopLog b = RunVariant(c, model, MpcVariant::kTrackNonAdaptive);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  EXPECT_EQ(a.samples.back().torque, b.samples.back().torque);
}

TEST(RegulationTest, UsesFinalWindow) {
  ClosedLoopLog log;
  for (int k = 0; k < 400; ++k) {
    ClosedLoopSample s;
    s.t = 0.01 * k;
    s.state.theta1 = k < 100 ? 1.0 : 0.01;
    log.samples.push_back(s);
  }
  Thresholds th;
  EXPECT_TRUE(MeetsRegulation(log, th));
  log.samples.back().state.dtheta2 = 0.5;
  EXPECT_FALSE(MeetsRegulation(log, th));
}

}  // namespace
}  // namespace tustin
