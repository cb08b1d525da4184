//
// Copyright 2026 The ldpx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
#include "ldpx/nn.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace ldpx::nn {

namespace {

constexpr char kCheckpointMagic[8] = {'L', 'D', 'P', 'X', 'M', 'L', 'P', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

double mean_loss(const Mlp<double>& model, const Eigen::MatrixXd& inputs,
                 std::span<const int> labels) {
  return softmax_cross_entropy<double>(model.forward(inputs), labels).loss;
}

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw TruncatedError("checkpoint truncated: " + path.string());
  }
  return v;
}

}  // namespace

std::string describe(const ParamCoord& c) {
  return "layer " + std::to_string(c.layer) + (c.bias ? " bias[" : " weight[") +
         std::to_string(c.row) + (c.bias ? "]" : "," + std::to_string(c.col) + "]");
}

GradCheckReport grad_check(const Mlp<double>& model, const Eigen::MatrixXd& inputs,
                           std::span<const int> labels, double tolerance, double step) {
  const auto trace = model.forward_trace(inputs);
  const auto lg = softmax_cross_entropy<double>(trace.outputs.back(), labels);
  const auto grads = model.backward(trace, lg.grad);

  GradCheckReport report;
  Mlp<double> probe = model;
  auto check = [&](double& param, double analytic, const ParamCoord& coord) {
    const double saved = param;
    param = saved + step;
    const double up = mean_loss(probe, inputs, labels);
    param = saved - step;
    const double down = mean_loss(probe, inputs, labels);
    param = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double rel =
        std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-6);
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst = coord;
      report.analytic = analytic;
      report.numeric = numeric;
    }
  };

  for (std::size_t l = 0; l < probe.depth(); ++l) {
    auto& layer = probe.layers()[l];
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        check(layer.weights(r, c), grads[l].weights(r, c), {l, false, r, c});
      }
      check(layer.biases(r), grads[l].biases(r), {l, true, r, 0});
    }
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

void save_model(const Mlp<double>& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint32_t>(model.depth()));
  for (const auto& layer : model.layers()) {
    put(out, static_cast<std::uint32_t>(layer.weights.rows()));
    put(out, static_cast<std::uint32_t>(layer.weights.cols()));
    put(out, static_cast<std::uint8_t>(layer.activation));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) put(out, layer.weights(r, c));
    }
    for (Eigen::Index r = 0; r < layer.biases.size(); ++r) put(out, layer.biases(r));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Mlp<double> load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw FormatError("not a model checkpoint: " + path.string());
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto depth = get<std::uint32_t>(in, path);
  std::vector<DenseLayer<double>> layers(depth);
  for (auto& layer : layers) {
    const auto rows = get<std::uint32_t>(in, path);
    const auto cols = get<std::uint32_t>(in, path);
    const auto act = get<std::uint8_t>(in, path);
    if (act > 1) throw FormatError("unknown activation code in checkpoint");
    layer.activation = static_cast<Activation>(act);
    layer.weights.resize(rows, cols);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = get<double>(in, path);
      }
    }
    layer.biases.resize(rows);
    for (Eigen::Index r = 0; r < layer.biases.size(); ++r) layer.biases(r) = get<double>(in, path);
  }
  return Mlp<double>(std::move(layers));
}

}  // namespace ldpx::nn
