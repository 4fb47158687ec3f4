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

// Command-line front end: collect, train, eval, filter-compare, mpc.
//
// Exit codes: 0 pass, 1 threshold failure, 2 execution error.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tustin/experiments.h"

namespace {

constexpr int kPass = 0;
constexpr int kThresholdFail = 1;
constexpr int kExecutionError = 2;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

int Run(const std::string& command, const GlobalOptions& opts,
        const std::function<tustin::CommandResult(
            const tustin::ExperimentConfig&, const std::filesystem::path&)>& body) {
  const auto start = std::chrono::steady_clock::now();
  tustin::ExperimentConfig config = tustin::ExperimentConfig::Load(opts.config);
  if (opts.seed) config.OverrideSeed(*opts.seed);
  const std::filesystem::path out = opts.out;
  tustin::PrepareOutputDir(out, opts.force);
  const tustin::CommandResult result = body(config, out);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  tustin::WriteRunRecord(out, command, config, result, wall);
  std::cout << command << ": " << result.summary << '\n'
            << "verdict: " << (result.passed ? "PASS" : "FAIL") << '\n';
  return result.passed ? kPass : kThresholdFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tustin-Net modeling, estimation and adaptive MPC experiments"};
  app.set_version_flag("--version", tustin::CodeVersion());
  app.require_subcommand(1);

  GlobalOptions opts;
  opts.config = tustin::DefaultConfigPath().string();
  app.add_option("--config", opts.config, "key = value experiment config")
      ->capture_default_str();
  app.add_option("--seed", opts.seed, "overrides the config seed");
  app.add_option("--out", opts.out, "output directory")->required();
  app.add_flag("--force", opts.force, "replace a non-empty output directory");

  bool open_loop_only = false;
  auto* collect = app.add_subcommand("collect", "simulate the training dataset");
  collect->add_flag("--open-loop-only", open_loop_only, "only free-fall episodes");

  std::string dataset;
  auto* train = app.add_subcommand("train", "train a Tustin-Net on a dataset");
  train->add_option("--dataset", dataset, "dataset directory")->required();

  std::string model_path;
  std::string scenario = "free-fall";
  auto* eval = app.add_subcommand("eval", "open-loop prediction against a fresh episode");
  eval->add_option("--model", model_path, "checkpoint")->required();
  eval->add_option("--scenario", scenario, "free-fall | lqr-closed-loop")
      ->check(CLI::IsMember({"free-fall", "lqr-closed-loop"}))
      ->capture_default_str();

  auto* compare = app.add_subcommand("filter-compare", "UKF against EKF on one episode");
  compare->add_option("--model", model_path, "checkpoint")->required();

  std::string variant = "nominal";
  auto* mpc = app.add_subcommand("mpc", "closed-loop MPC on the simulator");
  mpc->add_option("--model", model_path, "checkpoint")->required();
  mpc->add_option("--variant", variant,
                  "nominal | changed-nonadaptive | changed-adaptive | "
                  "track-nonadaptive | track-adaptive")
      ->check(CLI::IsMember({"nominal", "changed-nonadaptive", "changed-adaptive",
                             "track-nonadaptive", "track-adaptive"}))
      ->capture_default_str();

  app.fallthrough();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kExecutionError;
  }

  try {
    if (*collect) {
      return Run("collect", opts, [&](const auto& config, const auto& out) {
        return tustin::CmdCollect(config, out, open_loop_only);
      });
    }
    if (*train) {
      return Run("train", opts, [&](const auto& config, const auto& out) {
        return tustin::CmdTrain(config, dataset, out);
      });
    }
    const tustin::TustinNetModel model = tustin::LoadModel(model_path);
    if (*eval) {
      return Run("eval", opts, [&](const auto& config, const auto& out) {
        return tustin::CmdEval(config, model, tustin::ParseScenario(scenario), out);
      });
    }
    if (*compare) {
      return Run("filter-compare", opts, [&](const auto& config, const auto& out) {
        return tustin::CmdFilterCompare(config, model, out);
      });
    }
    if (*mpc) {
      return Run("mpc", opts, [&](const auto& config, const auto& out) {
        return tustin::CmdMpc(config, model, tustin::ParseVariant(variant), out);
      });
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExecutionError;
  }
  return kExecutionError;
}
