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

#include "tustin/training.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "tustin/errors.h"
#include "tustin/lqr.h"

namespace tustin {

std::string RegimeName(Regime regime) {
  return regime == Regime::kOpenLoopFall ? "open-loop-fall" : "lqr-closed-loop";
}

Regime ParseRegime(const std::string& name) {
  if (name == "open-loop-fall") return Regime::kOpenLoopFall;
  if (name == "lqr-closed-loop") return Regime::kLqrClosedLoop;
  throw FormatError("unknown regime '" + name + "'");
}

std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t stream,
                         std::uint64_t index) {
  // splitmix64 over a mix of the three inputs
  std::uint64_t z = base * 0x9e3779b97f4a7c15ull + stream * 0xbf58476d1ce4e5b9ull +
                    index + 0x94d049bb133111ebull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

namespace {

std::size_t StepCount(const DatasetSpec& spec) {
  return static_cast<std::size_t>(std::llround(spec.duration / spec.Ts));
}

void FillMeasurements(Episode* episode) {
  episode->y.clear();
  episode->y.reserve(episode->states.size());
  for (const auto& s : episode->states) episode->y.push_back(s.angles());
}

}  // namespace

Episode CollectOpenLoopEpisode(const PendulumParams& p, const DatasetSpec& spec,
                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // (-pi, pi]
  std::uniform_real_distribution<double> angle(-std::numbers::pi,
                                               std::numbers::pi);
  std::uniform_real_distribution<double> torque(-spec.fall_torque_amplitude,
                                                spec.fall_torque_amplitude);
  Episode episode;
  episode.Ts = spec.Ts;
  episode.regime = Regime::kOpenLoopFall;
  episode.seed = seed;
  const auto steps = StepCount(spec);
  const auto hold = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(spec.torque_hold / spec.Ts)));
  PlantState x{-angle(rng), 0.0, -angle(rng), 0.0};
  episode.states.push_back(x);
  Torque u = Torque::Zero();
  for (std::size_t k = 0; k < steps; ++k) {
    if (k % hold == 0) {
      const double u1 = torque(rng);
      u = Torque(u1, torque(rng));
    }
    episode.u.push_back(u);
    x = SimulateStep(x, u, p, spec.Ts, spec.substeps);
    episode.states.push_back(x);
  }
  FillMeasurements(&episode);
  return episode;
}

Eigen::Matrix<double, 2, 4> DataCollectionGain(const PendulumParams& p,
                                               const DatasetSpec& spec) {
  const LinearModel lin =
      Linearize(p, PlantState{}, Torque::Zero(), spec.Ts, spec.substeps);
  return DareGain(lin, spec.lqr_q.asDiagonal().toDenseMatrix(),
                  spec.lqr_r.asDiagonal().toDenseMatrix());
}

Episode CollectClosedLoopEpisode(const PendulumParams& p,
                                 const DatasetSpec& spec,
                                 const Eigen::Matrix<double, 2, 4>& K,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> start(-spec.upright_spread,
                                               spec.upright_spread);
  std::normal_distribution<double> noise(0.0, spec.exploration_sigma);
  Episode episode;
  episode.Ts = spec.Ts;
  episode.regime = Regime::kLqrClosedLoop;
  episode.seed = seed;
  const double th1 = start(rng);
  PlantState x{th1, 0.0, start(rng), 0.0};
  episode.states.push_back(x);
  const auto steps = StepCount(spec);
  for (std::size_t k = 0; k < steps; ++k) {
    Torque u = -K * x.ToVector();
    const double n1 = noise(rng);
    u += Torque(n1, noise(rng));
    u = u.cwiseMax(-spec.u_max).cwiseMin(spec.u_max);
    episode.u.push_back(u);
    x = SimulateStep(x, u, p, spec.Ts, spec.substeps);
    episode.states.push_back(x);
  }
  FillMeasurements(&episode);
  return episode;
}

std::vector<Episode> CollectDataset(const PendulumParams& p,
                                    const DatasetSpec& spec) {
  std::vector<Episode> episodes;
  for (int i = 0; i < spec.open_loop_episodes; ++i) {
    episodes.push_back(
        CollectOpenLoopEpisode(p, spec, DeriveSeed(spec.seed, 1, i)));
  }
  if (spec.closed_loop_episodes > 0) {
    const auto K = DataCollectionGain(p, spec);
    for (int i = 0; i < spec.closed_loop_episodes; ++i) {
      episodes.push_back(
          CollectClosedLoopEpisode(p, spec, K, DeriveSeed(spec.seed, 2, i)));
    }
  }
  return episodes;
}

namespace {

Episode Slice(const Episode& e, std::size_t first_row, std::size_t last_row) {
  Episode out;
  out.Ts = e.Ts;
  out.regime = e.regime;
  out.seed = e.seed;
  out.y.assign(e.y.begin() + first_row, e.y.begin() + last_row + 1);
  out.u.assign(e.u.begin() + first_row, e.u.begin() + last_row);
  if (!e.states.empty()) {
    out.states.assign(e.states.begin() + first_row,
                      e.states.begin() + last_row + 1);
  }
  return out;
}

}  // namespace

EpisodeSplit Split(const Episode& episode, double split_time) {
  const auto boundary =
      static_cast<std::size_t>(std::llround(split_time / episode.Ts));
  if (episode.y.size() != episode.u.size() + 1) {
    throw DimensionError("episode needs one more measurement than torques");
  }
  if (episode.u.size() < 2 * boundary) {
    throw std::invalid_argument("episode too short to split at " +
                                std::to_string(split_time) + " s");
  }
  return {Slice(episode, 0, boundary),
          Slice(episode, boundary, episode.y.size() - 1), boundary};
}

Episode Concatenate(const Episode& first, const Episode& second) {
  Episode out = first;
  out.y.insert(out.y.end(), second.y.begin() + 1, second.y.end());
  out.u.insert(out.u.end(), second.u.begin(), second.u.end());
  if (!second.states.empty()) {
    out.states.insert(out.states.end(), second.states.begin() + 1,
                      second.states.end());
  }
  return out;
}

double AngleLoss(std::span<const Eigen::Vector2d> predicted,
                 std::span<const Eigen::Vector2d> measured) {
  if (predicted.size() != measured.size()) {
    throw DimensionError("loss inputs differ in length");
  }
  if (predicted.empty()) throw DimensionError("loss needs at least one step");
  double sum = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    for (int j = 0; j < 2; ++j) {
      sum += 2.0 * (1.0 - std::cos(predicted[k][j] - measured[k][j]));
    }
  }
  return sum / (2.0 * static_cast<double>(predicted.size()));
}

double AngleLossSinCos(std::span<const Eigen::Vector2d> predicted,
                       std::span<const Eigen::Vector2d> measured) {
  if (predicted.size() != measured.size()) {
    throw DimensionError("loss inputs differ in length");
  }
  if (predicted.empty()) throw DimensionError("loss needs at least one step");
  double sum = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    for (int j = 0; j < 2; ++j) {
      const double ds = std::sin(predicted[k][j]) - std::sin(measured[k][j]);
      const double dc = std::cos(predicted[k][j]) - std::cos(measured[k][j]);
      sum += ds * ds + dc * dc;
    }
  }
  return sum / (2.0 * static_cast<double>(predicted.size()));
}

std::vector<Segment> MakeSegments(const Episode& episode, std::size_t window) {
  std::vector<Segment> segments;
  const std::size_t last = episode.y.size() - 1;
  if (window == 0) {
    segments.push_back({&episode, 0, last});
    return segments;
  }
  for (std::size_t begin = 0; begin + 2 <= last; begin += window) {
    segments.push_back({&episode, begin, std::min(begin + window, last)});
  }
  return segments;
}

namespace {

struct GroupResult {
  double loss_sum = 0.0;
  std::size_t terms = 0;
};

// Segments in `group` all have the same number of steps. Adds the summed
// (not averaged) parameter gradient into `gradient` when non-null.
GroupResult GroupLoss(const TustinNetModel& model,
                      std::span<const Segment* const> group, Mlp* gradient) {
  const auto B = static_cast<Eigen::Index>(group.size());
  const std::size_t N = group.front()->steps();
  const double a = model.angle_scale;
  const double c = 0.5 * model.Ts * model.Kv;

  Eigen::MatrixXd pos(2, B), vel(2, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Segment& seg = *group[b];
    const NetState s0 = InitStateFromMeasurements(
        model, seg.episode->y[seg.begin], seg.episode->y[seg.begin + 1]);
    pos.col(b) = s0.pos;
    vel.col(b) = s0.vel;
  }

  std::vector<Mlp::Tape> tapes(gradient ? N : 0);
  std::vector<Eigen::MatrixXd> positions(gradient ? N : 0);
  std::vector<Eigen::MatrixXd> residuals(gradient ? N : 0);
  Eigen::MatrixXd features(kFeatureCount, B);
  Eigen::MatrixXd targets(2, B);
  GroupResult result;
  result.terms = 2 * N * static_cast<std::size_t>(B);

  for (std::size_t k = 0; k < N; ++k) {
    for (Eigen::Index b = 0; b < B; ++b) {
      const Segment& seg = *group[b];
      const Torque& u = seg.episode->u[seg.begin + 1 + k];
      features(0, b) = std::sin(a * pos(0, b));
      features(1, b) = std::cos(a * pos(0, b));
      features(2, b) = std::sin(a * pos(1, b));
      features(3, b) = std::cos(a * pos(1, b));
      features(4, b) = vel(0, b);
      features(5, b) = vel(1, b);
      features(6, b) = u[0] / model.torque_scale;
      features(7, b) = u[1] / model.torque_scale;
      targets.col(b) = seg.episode->y[seg.begin + 2 + k];
    }
    Eigen::MatrixXd increment;
    if (gradient) {
      positions[k] = pos;
      increment = model.mlp.Forward(features, &tapes[k]);
    } else {
      increment = model.mlp.Forward(features);
    }
    Eigen::MatrixXd next_vel = vel + increment;
    pos += c * (next_vel + vel);
    vel = std::move(next_vel);
    const Eigen::ArrayXXd residual = a * pos.array() - targets.array();
    result.loss_sum += (2.0 * (1.0 - residual.cos())).sum();
    if (gradient) residuals[k] = residual.matrix();
  }
  if (!gradient) return result;

  Eigen::MatrixXd adj_pos = Eigen::MatrixXd::Zero(2, B);
  Eigen::MatrixXd adj_vel = Eigen::MatrixXd::Zero(2, B);
  for (std::size_t k = N; k-- > 0;) {
    adj_pos += 2.0 * a * residuals[k].array().sin().matrix();
    const Eigen::MatrixXd adj_increment = adj_vel + c * adj_pos;
    adj_vel = adj_increment + c * adj_pos;
    const Eigen::MatrixXd adj_features =
        model.mlp.Backward(tapes[k], adj_increment, gradient);
    const Eigen::ArrayXXd angle = a * positions[k].array();
    for (int j = 0; j < 2; ++j) {
      adj_pos.row(j).array() +=
          a * (adj_features.row(2 * j).array() * angle.row(j).cos() -
               adj_features.row(2 * j + 1).array() * angle.row(j).sin());
      adj_vel.row(j) += adj_features.row(4 + j);
    }
  }
  return result;
}

}  // namespace

LossAndGradient BatchLoss(const TustinNetModel& model,
                          std::span<const Segment> segments,
                          bool with_gradient) {
  std::map<std::size_t, std::vector<const Segment*>> groups;
  for (const auto& seg : segments) {
    if (seg.steps() > 0) groups[seg.steps()].push_back(&seg);
  }
  LossAndGradient out;
  Mlp gradient;
  if (with_gradient) gradient = Mlp::Zeros(model.mlp.sizes());
  double loss_sum = 0.0;
  for (const auto& [steps, group] : groups) {
    const GroupResult r =
        GroupLoss(model, group, with_gradient ? &gradient : nullptr);
    loss_sum += r.loss_sum;
    out.terms += r.terms;
  }
  if (with_gradient) {
    out.gradient = gradient.Flatten();
    if (out.terms > 0) out.gradient /= static_cast<double>(out.terms);
  }
  out.loss = out.terms > 0 ? loss_sum / static_cast<double>(out.terms) : 0.0;
  return out;
}

LossAndGradient BpttGradient(const TustinNetModel& model,
                             const Segment& segment) {
  return BatchLoss(model, std::span<const Segment>(&segment, 1), true);
}

Adam::Adam(const AdamConfig& config, Eigen::Index dimension)
    : config_(config),
      m_(Eigen::VectorXd::Zero(dimension)),
      v_(Eigen::VectorXd::Zero(dimension)) {
  if (!(config.learning_rate >= 0) || !(config.beta1 >= 0 && config.beta1 < 1) ||
      !(config.beta2 >= 0 && config.beta2 < 1) || !(config.epsilon > 0)) {
    throw std::invalid_argument("invalid Adam hyperparameters");
  }
}

void Adam::Step(Eigen::VectorXd* params, const Eigen::VectorXd& gradient) {
  if (params->size() != m_.size() || gradient.size() != m_.size()) {
    throw DimensionError("Adam step dimension mismatch");
  }
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * gradient;
  v_ = config_.beta2 * v_ +
       (1.0 - config_.beta2) * gradient.array().square().matrix();
  const double bias1 = 1.0 - std::pow(config_.beta1, t_);
  const double bias2 = 1.0 - std::pow(config_.beta2, t_);
  *params -= (config_.learning_rate * (m_.array() / bias1) /
              ((v_.array() / bias2).sqrt() + config_.epsilon))
                 .matrix();
}

TrainResult Train(const TustinNetModel& initial,
                  std::span<const Episode> dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  if (dataset.empty()) throw std::invalid_argument("empty training dataset");
  if (config.batch_size < 1) throw std::invalid_argument("batch_size < 1");

  std::vector<EpisodeSplit> halves;
  halves.reserve(dataset.size());
  for (const auto& episode : dataset) halves.push_back(Split(episode));

  std::vector<std::vector<Segment>> train_segments;
  std::vector<Segment> val_segments;
  auto window = [&](const Episode& e) {
    return e.regime == Regime::kOpenLoopFall ? config.open_loop_segment
                                             : config.closed_loop_segment;
  };
  for (const auto& half : halves) {
    train_segments.push_back(MakeSegments(half.train, window(half.train)));
    auto v = MakeSegments(half.validation, window(half.validation));
    val_segments.insert(val_segments.end(), v.begin(), v.end());
  }

  TustinNetModel model = initial;
  Eigen::VectorXd params = model.mlp.Flatten();
  Adam adam(config.adam, params.size());
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.model = model;
  result.best_val_loss = BatchLoss(model, val_segments, false).loss;
  result.best_epoch = 0;
  int since_best = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_sum = 0.0;
    std::size_t train_terms = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      std::vector<Segment> batch;
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      for (std::size_t i = start; i < stop; ++i) {
        const auto& segs = train_segments[order[i]];
        batch.insert(batch.end(), segs.begin(), segs.end());
      }
      const LossAndGradient lg = BatchLoss(model, batch, true);
      if (!std::isfinite(lg.loss) || !lg.gradient.allFinite()) {
        throw DivergenceError("training diverged at epoch " +
                              std::to_string(epoch) + " (loss " +
                              std::to_string(lg.loss) + ")");
      }
      train_sum += lg.loss * static_cast<double>(lg.terms);
      train_terms += lg.terms;
      const double norm = lg.gradient.norm();
      if (config.gradient_clip > 0 && norm > config.gradient_clip) {
        adam.Step(&params, lg.gradient * (config.gradient_clip / norm));
      } else {
        adam.Step(&params, lg.gradient);
      }
      model.mlp.Unflatten(params);
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = train_sum / static_cast<double>(std::max<std::size_t>(1, train_terms));
    record.val_loss = BatchLoss(model, val_segments, false).loss;
    if (!std::isfinite(record.val_loss)) {
      throw DivergenceError("validation loss is not finite at epoch " +
                            std::to_string(epoch));
    }
    adam.set_learning_rate(std::max(config.min_learning_rate,
                                    adam.learning_rate() * config.lr_decay));
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
    if (record.val_loss < result.best_val_loss) {
      result.best_val_loss = record.val_loss;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

void WriteDataset(const std::filesystem::path& dir,
                  std::span<const Episode> episodes) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw std::runtime_error("cannot write dataset manifest");
  manifest << "file,regime,seed,rows,Ts,split_row\n";
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const Episode& e = episodes[i];
    char name[64];
    std::snprintf(name, sizeof(name), "episode_%03zu.csv", i);
    WriteTrajectoryCsv(dir / name, e.states, e.u, e.Ts);
    const auto split_row = static_cast<std::size_t>(std::llround(6.0 / e.Ts));
    char ts[32];
    std::snprintf(ts, sizeof(ts), "%.17g", e.Ts);
    manifest << name << ',' << RegimeName(e.regime) << ',' << e.seed << ','
             << e.rows() << ',' << ts << ',' << split_row << '\n';
  }
}

std::vector<Episode> ReadDataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.csv");
  if (!manifest) {
    throw FormatError("no manifest.csv in dataset directory " + dir.string());
  }
  std::string line;
  std::getline(manifest, line);
  if (line != "file,regime,seed,rows,Ts,split_row") {
    throw FormatError("unexpected dataset manifest header");
  }
  std::vector<Episode> episodes;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw FormatError("bad manifest row: " + line);
    const Trajectory traj = ReadTrajectoryCsv(dir / cells[0]);
    Episode e;
    e.regime = ParseRegime(cells[1]);
    e.seed = std::stoull(cells[2]);
    e.Ts = std::stod(cells[4]);
    e.states = traj.states;
    e.u = traj.torques;
    FillMeasurements(&e);
    if (e.rows() != std::stoull(cells[3])) {
      throw FormatError("row count mismatch for " + cells[0]);
    }
    episodes.push_back(std::move(e));
  }
  return episodes;
}

void WriteTrainingLog(const std::filesystem::path& path,
                      std::span<const EpochRecord> history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,val_loss\n";
  char line[128];
  for (const auto& r : history) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g\n", r.epoch, r.train_loss,
                  r.val_loss);
    out << line;
  }
}

}  // namespace tustin
