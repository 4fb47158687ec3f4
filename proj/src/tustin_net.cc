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

#include "tustin/tustin_net.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "tustin/errors.h"

namespace tustin {
namespace {

constexpr char kCheckpointMagic[] = "TUSTIN-NET-CHECKPOINT";

std::vector<int> ModelSizes(std::span<const int> hidden) {
  std::vector<int> sizes;
  sizes.push_back(kFeatureCount);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(2);
  return sizes;
}

// Packed-state row of joint i's position and velocity.
constexpr int PosRow(int joint) { return 2 * joint; }
constexpr int VelRow(int joint) { return 2 * joint + 1; }

void AppendLittleEndian(std::string* out, double value) {
  auto bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) {
    out->push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

double ReadLittleEndian(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace

// ---------------------------------------------------------------------------
// Mlp

Mlp Mlp::Zeros(std::span<const int> sizes) {
  if (sizes.size() < 2) throw DimensionError("an MLP needs at least 2 sizes");
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    mlp.weights_.push_back(Eigen::MatrixXd::Zero(sizes[i + 1], sizes[i]));
    mlp.biases_.push_back(Eigen::VectorXd::Zero(sizes[i + 1]));
  }
  return mlp;
}

Mlp Mlp::GlorotUniform(std::span<const int> sizes, std::uint64_t seed) {
  Mlp mlp = Zeros(sizes);
  std::mt19937_64 rng(seed);
  for (auto& w : mlp.weights_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
    }
  }
  return mlp;
}

int Mlp::input_size() const {
  return weights_.empty() ? 0 : static_cast<int>(weights_.front().cols());
}

int Mlp::output_size() const {
  return weights_.empty() ? 0 : static_cast<int>(weights_.back().rows());
}

std::vector<int> Mlp::sizes() const {
  std::vector<int> sizes;
  if (weights_.empty()) return sizes;
  sizes.push_back(input_size());
  for (const auto& w : weights_) sizes.push_back(static_cast<int>(w.rows()));
  return sizes;
}

Eigen::Index Mlp::ParameterCount() const {
  Eigen::Index n = 0;
  for (int i = 0; i < num_layers(); ++i) {
    n += weights_[i].size() + biases_[i].size();
  }
  return n;
}

Eigen::MatrixXd Mlp::Forward(const Eigen::MatrixXd& inputs) const {
  Eigen::MatrixXd a = inputs;
  for (int i = 0; i < num_layers(); ++i) {
    Eigen::MatrixXd z = weights_[i] * a;
    z.colwise() += biases_[i];
    a = (i + 1 < num_layers()) ? Eigen::MatrixXd(z.array().tanh()) : z;
  }
  return a;
}

Eigen::VectorXd Mlp::Forward(const Eigen::VectorXd& input) const {
  return Forward(Eigen::MatrixXd(input)).col(0);
}

Eigen::MatrixXd Mlp::LastHidden(const Eigen::MatrixXd& inputs) const {
  Eigen::MatrixXd a = inputs;
  for (int i = 0; i + 1 < num_layers(); ++i) {
    Eigen::MatrixXd z = weights_[i] * a;
    z.colwise() += biases_[i];
    a = z.array().tanh();
  }
  return a;
}

Eigen::MatrixXd Mlp::Forward(const Eigen::MatrixXd& inputs, Tape* tape) const {
  tape->activations.resize(num_layers() + 1);
  tape->activations[0] = inputs;
  for (int i = 0; i < num_layers(); ++i) {
    Eigen::MatrixXd z = weights_[i] * tape->activations[i];
    z.colwise() += biases_[i];
    if (i + 1 < num_layers()) {
      tape->activations[i + 1] = z.array().tanh();
    } else {
      tape->activations[i + 1] = std::move(z);
    }
  }
  return tape->activations.back();
}

Eigen::MatrixXd Mlp::Backward(const Tape& tape,
                              const Eigen::MatrixXd& output_adjoint,
                              Mlp* gradient) const {
  Eigen::MatrixXd adj = output_adjoint;
  for (int i = num_layers() - 1; i >= 0; --i) {
    if (i + 1 < num_layers()) {
      // tanh' = 1 - tanh^2
      adj.array() *= 1.0 - tape.activations[i + 1].array().square();
    }
    if (gradient != nullptr) {
      gradient->weights_[i].noalias() += adj * tape.activations[i].transpose();
      gradient->biases_[i] += adj.rowwise().sum();
    }
    adj = weights_[i].transpose() * adj;
  }
  return adj;
}

Eigen::VectorXd Mlp::Flatten() const {
  Eigen::VectorXd flat(ParameterCount());
  Eigen::Index offset = 0;
  for (int i = 0; i < num_layers(); ++i) {
    const auto& w = weights_[i];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      flat.segment(offset, w.cols()) = w.row(r).transpose();
      offset += w.cols();
    }
    flat.segment(offset, biases_[i].size()) = biases_[i];
    offset += biases_[i].size();
  }
  return flat;
}

void Mlp::Unflatten(const Eigen::VectorXd& flat) {
  if (flat.size() != ParameterCount()) {
    throw DimensionError("flat parameter vector has wrong length");
  }
  Eigen::Index offset = 0;
  for (int i = 0; i < num_layers(); ++i) {
    auto& w = weights_[i];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      w.row(r) = flat.segment(offset, w.cols()).transpose();
      offset += w.cols();
    }
    biases_[i] = flat.segment(offset, biases_[i].size());
    offset += biases_[i].size();
  }
}

Eigen::Index Mlp::LastLayerParameterCount() const {
  return weights_.back().size() + biases_.back().size();
}

Eigen::Index Mlp::LastLayerOffset() const {
  return ParameterCount() - LastLayerParameterCount();
}

Eigen::VectorXd Mlp::LastLayerParameters() const {
  return Flatten().tail(LastLayerParameterCount());
}

void Mlp::SetLastLayerParameters(const Eigen::VectorXd& psi) {
  if (psi.size() != LastLayerParameterCount()) {
    throw DimensionError("output-layer parameter vector has wrong length");
  }
  auto& w = weights_.back();
  Eigen::Index offset = 0;
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    w.row(r) = psi.segment(offset, w.cols()).transpose();
    offset += w.cols();
  }
  biases_.back() = psi.tail(biases_.back().size());
}

bool Mlp::IsFinite() const {
  for (int i = 0; i < num_layers(); ++i) {
    if (!weights_[i].allFinite() || !biases_[i].allFinite()) return false;
  }
  return true;
}

void Mlp::Validate() const {
  if (weights_.empty() || weights_.size() != biases_.size()) {
    throw DimensionError("MLP has no layers or mismatched bias count");
  }
  for (int i = 0; i < num_layers(); ++i) {
    if (biases_[i].size() != weights_[i].rows()) {
      throw DimensionError("bias length differs from layer width");
    }
    if (i > 0 && weights_[i].cols() != weights_[i - 1].rows()) {
      throw DimensionError("layer shapes do not chain");
    }
  }
  if (!IsFinite()) throw DimensionError("MLP has non-finite parameters");
}

bool Mlp::operator==(const Mlp& other) const {
  if (num_layers() != other.num_layers()) return false;
  for (int i = 0; i < num_layers(); ++i) {
    if (weights_[i].rows() != other.weights_[i].rows() ||
        weights_[i].cols() != other.weights_[i].cols() ||
        weights_[i] != other.weights_[i] || biases_[i] != other.biases_[i]) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// TustinNetModel

TustinNetModel TustinNetModel::Create(std::uint64_t seed,
                                      std::span<const int> hidden, double Ts,
                                      double torque_scale,
                                      double output_scale) {
  TustinNetModel model;
  model.mlp = Mlp::GlorotUniform(ModelSizes(hidden), seed);
  model.mlp.weight(model.mlp.num_layers() - 1) *= output_scale;
  model.Ts = Ts;
  model.torque_scale = torque_scale;
  return model;
}

TustinNetModel TustinNetModel::Zero(std::span<const int> hidden, double Ts,
                                    double torque_scale) {
  TustinNetModel model;
  model.mlp = Mlp::Zeros(ModelSizes(hidden));
  model.Ts = Ts;
  model.torque_scale = torque_scale;
  return model;
}

void TustinNetModel::Validate() const {
  mlp.Validate();
  if (mlp.input_size() != kFeatureCount || mlp.output_size() != 2) {
    throw DimensionError("Tustin-Net MLP must map 8 features to 2 outputs");
  }
  if (!(Ts > 0)) throw std::invalid_argument("sampling time must be positive");
  if (!(angle_scale > 0 && velocity_scale > 0 && torque_scale > 0)) {
    throw std::invalid_argument("normalization scales must be positive");
  }
  if (std::abs(Kv - velocity_scale / angle_scale) > 1e-12 * std::abs(Kv)) {
    throw std::invalid_argument("Kv must equal velocity_scale / angle_scale");
  }
}

NetState ToNetState(const PlantState& s, const TustinNetModel& model) {
  return {{s.theta1 / model.angle_scale, s.theta2 / model.angle_scale},
          {s.dtheta1 / model.velocity_scale, s.dtheta2 / model.velocity_scale}};
}

PlantState ToPlantState(const NetState& s, const TustinNetModel& model) {
  return {s.pos[0] * model.angle_scale, s.vel[0] * model.velocity_scale,
          s.pos[1] * model.angle_scale, s.vel[1] * model.velocity_scale};
}

Features EncodeFeatures(const TustinNetModel& model, const NetState& s,
                        const Torque& u) {
  const double a1 = model.angle_scale * s.pos[0];
  const double a2 = model.angle_scale * s.pos[1];
  Features f;
  f << std::sin(a1), std::cos(a1), std::sin(a2), std::cos(a2), s.vel[0],
      s.vel[1], u[0] / model.torque_scale, u[1] / model.torque_scale;
  return f;
}

namespace {

NetState ApplyIncrement(const TustinNetModel& model, const NetState& s,
                        const Eigen::Vector2d& increment) {
  NetState next;
  next.vel = s.vel + increment;
  next.pos = s.pos + 0.5 * model.Ts * model.Kv * (next.vel + s.vel);
  return next;
}

}  // namespace

NetState Step(const TustinNetModel& model, const NetState& s,
              const Torque& u) {
  const Eigen::VectorXd f = EncodeFeatures(model, s, u);
  return ApplyIncrement(model, s, model.mlp.Forward(f));
}

NetState Step(const TustinNetModel& model, const NetState& s, const Torque& u,
              const Eigen::VectorXd& psi) {
  const Eigen::VectorXd f = EncodeFeatures(model, s, u);
  const Eigen::VectorXd h = model.mlp.LastHidden(Eigen::MatrixXd(f)).col(0);
  const Eigen::Index width = h.size();
  const Eigen::Vector2d increment(psi.segment(0, width).dot(h) + psi[2 * width],
                                  psi.segment(width, width).dot(h) +
                                      psi[2 * width + 1]);
  return ApplyIncrement(model, s, increment);
}

std::vector<NetState> Rollout(const TustinNetModel& model, const NetState& s0,
                              std::span<const Torque> torques) {
  std::vector<NetState> states;
  states.reserve(torques.size() + 1);
  states.push_back(s0);
  for (const Torque& u : torques) states.push_back(Step(model, states.back(), u));
  return states;
}

StepJacobians ComputeStepJacobians(const TustinNetModel& model,
                                   const NetState& s, const Torque& u,
                                   JacobianParts parts) {
  const double c = 0.5 * model.Ts * model.Kv;
  const Features f = EncodeFeatures(model, s, u);
  Mlp::Tape tape;
  model.mlp.Forward(Eigen::MatrixXd(f), &tape);

  // Rows of d increment / d features.
  Eigen::Matrix<double, 2, kFeatureCount> feature_jac;
  for (int out = 0; out < 2; ++out) {
    Eigen::MatrixXd seed = Eigen::MatrixXd::Zero(2, 1);
    seed(out, 0) = 1.0;
    feature_jac.row(out) = model.mlp.Backward(tape, seed, nullptr).transpose();
  }

  Eigen::Matrix<double, kFeatureCount, 4> df_ds =
      Eigen::Matrix<double, kFeatureCount, 4>::Zero();
  for (int joint = 0; joint < 2; ++joint) {
    const double a = model.angle_scale;
    const double angle = a * s.pos[joint];
    df_ds(2 * joint, PosRow(joint)) = a * std::cos(angle);
    df_ds(2 * joint + 1, PosRow(joint)) = -a * std::sin(angle);
    df_ds(4 + joint, VelRow(joint)) = 1.0;
  }
  const Eigen::Matrix<double, 2, 4> dinc_ds = feature_jac * df_ds;
  const Eigen::Matrix2d dinc_du =
      feature_jac.rightCols<2>() / model.torque_scale;

  StepJacobians jac;
  jac.state.setZero();
  jac.input.setZero();
  for (int joint = 0; joint < 2; ++joint) {
    Eigen::Matrix<double, 1, 4> dvel = dinc_ds.row(joint);
    dvel(VelRow(joint)) += 1.0;
    Eigen::Matrix<double, 1, 4> dpos = c * dvel;
    dpos(PosRow(joint)) += 1.0;
    dpos(VelRow(joint)) += c;
    jac.state.row(VelRow(joint)) = dvel;
    jac.state.row(PosRow(joint)) = dpos;
    jac.input.row(VelRow(joint)) = dinc_du.row(joint);
    jac.input.row(PosRow(joint)) = c * dinc_du.row(joint);
  }

  if (parts != JacobianParts::kStateInput) {
    const Eigen::VectorXd& hidden = tape.activations[model.mlp.num_layers() - 1];
    const Eigen::Index width = hidden.size();
    jac.last_layer = Eigen::MatrixXd::Zero(4, 2 * width + 2);
    for (int joint = 0; joint < 2; ++joint) {
      Eigen::RowVectorXd dinc = Eigen::RowVectorXd::Zero(2 * width + 2);
      dinc.segment(joint * width, width) = hidden.transpose();
      dinc[2 * width + joint] = 1.0;
      jac.last_layer.row(VelRow(joint)) = dinc;
      jac.last_layer.row(PosRow(joint)) = c * dinc;
    }
  }

  if (parts == JacobianParts::kAll) {
    jac.params = Eigen::MatrixXd::Zero(4, model.mlp.ParameterCount());
    for (int joint = 0; joint < 2; ++joint) {
      Mlp grad = Mlp::Zeros(model.mlp.sizes());
      Eigen::MatrixXd seed = Eigen::MatrixXd::Zero(2, 1);
      seed(joint, 0) = 1.0;
      model.mlp.Backward(tape, seed, &grad);
      const Eigen::VectorXd dinc = grad.Flatten();
      jac.params.row(VelRow(joint)) = dinc.transpose();
      jac.params.row(PosRow(joint)) = c * dinc.transpose();
    }
  }
  return jac;
}

NetState InitStateFromMeasurements(const TustinNetModel& model,
                                   const Eigen::Vector2d& y0,
                                   const Eigen::Vector2d& y1) {
  if (!(model.Ts > 0)) throw std::invalid_argument("Ts must be positive");
  NetState s;
  s.pos = y1 / model.angle_scale;
  s.vel = ((y1 - y0) / model.Ts) / model.velocity_scale;
  return s;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string SerializeModel(const TustinNetModel& model) {
  model.Validate();
  nlohmann::json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["Ts"] = model.Ts;
  header["Kv"] = model.Kv;
  header["angle_scale"] = model.angle_scale;
  header["velocity_scale"] = model.velocity_scale;
  header["torque_scale"] = model.torque_scale;
  header["hidden_activation"] = "tanh";
  header["dtype"] = "float64";
  header["byte_order"] = "little";
  header["layout"] = "per layer: weights row-major, then bias";
  nlohmann::json layers = nlohmann::json::array();
  for (int i = 0; i < model.mlp.num_layers(); ++i) {
    layers.push_back({{"rows", model.mlp.weight(i).rows()},
                      {"cols", model.mlp.weight(i).cols()}});
  }
  header["layers"] = layers;
  header["parameter_count"] = model.mlp.ParameterCount();

  std::string out = kCheckpointMagic;
  out += '\n';
  out += header.dump();
  out += '\n';
  const Eigen::VectorXd flat = model.mlp.Flatten();
  out.reserve(out.size() + 8 * flat.size());
  for (double v : flat) AppendLittleEndian(&out, v);
  return out;
}

TustinNetModel DeserializeModel(const std::string& bytes) {
  const auto magic_end = bytes.find('\n');
  if (magic_end == std::string::npos ||
      bytes.compare(0, magic_end, kCheckpointMagic) != 0) {
    throw FormatError("not a Tustin-Net checkpoint");
  }
  const auto header_end = bytes.find('\n', magic_end + 1);
  if (header_end == std::string::npos) {
    throw FormatError("truncated checkpoint header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(
        bytes.substr(magic_end + 1, header_end - magic_end - 1));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }
  if (header.value("format_version", -1) != kCheckpointFormatVersion) {
    throw FormatError("unsupported checkpoint format version");
  }
  TustinNetModel model;
  try {
    model.Ts = header.at("Ts").get<double>();
    model.Kv = header.at("Kv").get<double>();
    model.angle_scale = header.at("angle_scale").get<double>();
    model.velocity_scale = header.at("velocity_scale").get<double>();
    model.torque_scale = header.at("torque_scale").get<double>();
    std::vector<int> sizes;
    for (const auto& layer : header.at("layers")) {
      if (sizes.empty()) sizes.push_back(layer.at("cols").get<int>());
      sizes.push_back(layer.at("rows").get<int>());
    }
    model.mlp = Mlp::Zeros(sizes);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }
  const Eigen::Index count = model.mlp.ParameterCount();
  const std::size_t payload = bytes.size() - header_end - 1;
  if (payload != static_cast<std::size_t>(count) * 8) {
    throw FormatError("checkpoint payload size does not match layer shapes");
  }
  Eigen::VectorXd flat(count);
  const auto* data =
      reinterpret_cast<const unsigned char*>(bytes.data() + header_end + 1);
  for (Eigen::Index i = 0; i < count; ++i) {
    flat[i] = ReadLittleEndian(data + 8 * i);
  }
  model.mlp.Unflatten(flat);
  model.Validate();
  return model;
}

void SaveModel(const TustinNetModel& model, const std::filesystem::path& path) {
  const std::string bytes = SerializeModel(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TustinNetModel LoadModel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return DeserializeModel(buffer.str());
}

}  // namespace tustin
