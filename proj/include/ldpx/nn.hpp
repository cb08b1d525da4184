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
#pragma once

// Small dense feed-forward classifier: fully connected layers with ReLU or
// identity activations, softmax cross-entropy, mini-batch SGD. Batches are
// matrix columns. Everything is templated on the scalar type; the rest of
// the library instantiates it with double.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ldpx/data.hpp"
#include "ldpx/errors.hpp"
#include "ldpx/random.hpp"

namespace ldpx::nn {

enum class Activation : std::uint8_t { Identity = 0, ReLU = 1 };

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weights;  // out x in
  Vector<Scalar> biases;   // out
  Activation activation = Activation::Identity;

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.activation == b.activation && a.weights.rows() == b.weights.rows() &&
           a.weights.cols() == b.weights.cols() && a.weights == b.weights &&
           a.biases == b.biases;
  }
};

template <typename Scalar>
Matrix<Scalar> activate(Activation act, Matrix<Scalar> z) {
  if (act == Activation::ReLU) z = z.cwiseMax(Scalar(0));
  return z;
}

template <typename Scalar>
class Mlp {
 public:
  using Layer = DenseLayer<Scalar>;

  // Per-layer outputs of one forward pass; outputs[0] is the input batch.
  struct Trace {
    std::vector<Matrix<Scalar>> outputs;
  };

  Mlp() = default;

  explicit Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw SizeError("a network needs at least one layer");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (layer.weights.rows() == 0 || layer.weights.cols() == 0) {
        throw SizeError("layer " + std::to_string(l) + " has a zero dimension");
      }
      if (layer.biases.size() != layer.weights.rows()) {
        throw SizeError("layer " + std::to_string(l) + " bias size does not match weights");
      }
      if (l > 0 && layer.weights.cols() != layers_[l - 1].weights.rows()) {
        throw SizeError("layer " + std::to_string(l) + " input does not chain");
      }
    }
  }

  std::size_t input_dim() const { return static_cast<std::size_t>(layers_.front().weights.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(layers_.back().weights.rows()); }
  std::size_t depth() const { return layers_.size(); }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d{input_dim()};
    for (const auto& l : layers_) d.push_back(static_cast<std::size_t>(l.weights.rows()));
    return d;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& l : layers_) {
      if (!l.weights.allFinite() || !l.biases.allFinite()) return false;
    }
    return true;
  }

  template <typename Derived>
  Matrix<Scalar> forward(const Eigen::MatrixBase<Derived>& inputs) const {
    check_input(inputs.rows());
    Matrix<Scalar> h = inputs.template cast<Scalar>();
    for (const auto& l : layers_) {
      h = activate<Scalar>(l.activation, (l.weights * h).colwise() + l.biases);
    }
    return h;
  }

  template <typename Derived>
  Trace forward_trace(const Eigen::MatrixBase<Derived>& inputs) const {
    check_input(inputs.rows());
    Trace t;
    t.outputs.reserve(layers_.size() + 1);
    t.outputs.push_back(inputs.template cast<Scalar>());
    for (const auto& l : layers_) {
      t.outputs.push_back(
          activate<Scalar>(l.activation, (l.weights * t.outputs.back()).colwise() + l.biases));
    }
    return t;
  }

  // Parameter gradients given dLoss/dOutput for the traced batch. The result
  // has the same layout as the network; activations are copied through.
  std::vector<Layer> backward(const Trace& trace, Matrix<Scalar> grad_output) const {
    std::vector<Layer> grads(layers_.size());
    Matrix<Scalar> delta = std::move(grad_output);
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const auto& layer = layers_[l];
      if (layer.activation == Activation::ReLU) {
        delta = delta.cwiseProduct(
            (trace.outputs[l + 1].array() > Scalar(0)).matrix().template cast<Scalar>());
      }
      grads[l].weights = delta * trace.outputs[l].transpose();
      grads[l].biases = delta.rowwise().sum();
      grads[l].activation = layer.activation;
      if (l > 0) delta = layer.weights.transpose() * delta;
    }
    return grads;
  }

 private:
  void check_input(Eigen::Index rows) const {
    if (layers_.empty()) throw StateError("network has no layers");
    if (static_cast<std::size_t>(rows) != input_dim()) {
      throw SizeError("input has " + std::to_string(rows) + " features, network expects " +
                      std::to_string(input_dim()));
    }
  }

  std::vector<Layer> layers_;
};

// He-uniform weights, zero biases. ReLU on hidden layers, identity output.
template <typename Scalar>
Mlp<Scalar> init_model(std::span<const std::size_t> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw SizeError("init_model needs at least an input and an output dim");
  for (std::size_t d : dims) {
    if (d == 0) throw SizeError("init_model: zero-sized layer");
  }
  Rng rng(seed);
  std::vector<DenseLayer<Scalar>> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(dims[l]);
    const auto out = static_cast<Eigen::Index>(dims[l + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    DenseLayer<Scalar> layer;
    layer.weights.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) {
        layer.weights(r, c) = static_cast<Scalar>(rng.uniform(-limit, limit));
      }
    }
    layer.biases = Vector<Scalar>::Zero(out);
    layer.activation = l + 2 < dims.size() ? Activation::ReLU : Activation::Identity;
    layers.push_back(std::move(layer));
  }
  return Mlp<Scalar>(std::move(layers));
}

template <typename Scalar>
Mlp<Scalar> init_model(std::initializer_list<std::size_t> dims, std::uint64_t seed) {
  return init_model<Scalar>(std::span<const std::size_t>(dims.begin(), dims.size()), seed);
}

template <typename Scalar>
struct LossAndGrad {
  Scalar loss;             // mean over the batch
  Matrix<Scalar> grad;     // dLoss/dLogits
};

// Numerically stable softmax cross-entropy, averaged over columns.
template <typename Scalar>
LossAndGrad<Scalar> softmax_cross_entropy(const Matrix<Scalar>& logits,
                                          std::span<const int> labels) {
  const Eigen::Index batch = logits.cols();
  Matrix<Scalar> grad(logits.rows(), batch);
  Scalar total = 0;
  for (Eigen::Index j = 0; j < batch; ++j) {
    const Scalar m = logits.col(j).maxCoeff();
    auto e = (logits.col(j).array() - m).exp();
    const Scalar z = e.sum();
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(j)]);
    total += std::log(z) - (logits(y, j) - m);
    grad.col(j) = (e / z).matrix();
    grad(y, j) -= Scalar(1);
  }
  const Scalar inv = Scalar(1) / static_cast<Scalar>(batch);
  return {total * inv, grad * inv};
}

// Arg-max with ties resolved to the lowest class index.
template <typename Derived>
int argmax_label(const Eigen::MatrixBase<Derived>& logits) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i) {
    if (logits(i) > logits(best)) best = i;
  }
  return static_cast<int>(best);
}

template <typename Scalar, typename Derived>
std::vector<int> predict_labels(const Mlp<Scalar>& model, const Eigen::MatrixBase<Derived>& inputs,
                                Eigen::Index chunk = 4096) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(inputs.cols()));
  for (Eigen::Index b = 0; b < inputs.cols(); b += chunk) {
    const Eigen::Index n = std::min(chunk, inputs.cols() - b);
    const Matrix<Scalar> logits = model.forward(inputs.middleCols(b, n));
    for (Eigen::Index j = 0; j < n; ++j) out.push_back(argmax_label(logits.col(j)));
  }
  return out;
}

template <typename Scalar, typename Derived>
int predict_hard(const Mlp<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  return argmax_label(model.forward(x).col(0));
}

template <typename Scalar, typename Derived>
double accuracy(const Mlp<Scalar>& model, const Eigen::MatrixBase<Derived>& inputs,
                std::span<const int> labels) {
  if (labels.empty()) throw SizeError("accuracy of an empty dataset is undefined");
  if (static_cast<std::size_t>(inputs.cols()) != labels.size()) {
    throw SizeError("accuracy: inputs and labels differ in length");
  }
  const auto predicted = predict_labels(model, inputs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

template <typename Scalar>
double accuracy(const Mlp<Scalar>& model, const LabeledDataset& dataset) {
  return accuracy(model, dataset.pixels(), std::span<const int>(dataset.labels()));
}

enum class WeightInit { HeUniform };

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 15;
  int batch_size = 64;
  std::uint64_t seed = 0;
  WeightInit weight_init = WeightInit::HeUniform;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw DomainError("learning_rate must be finite and non-negative");
    }
    if (epochs < 1) throw DomainError("epochs must be >= 1");
    if (batch_size < 1) throw DomainError("batch_size must be >= 1");
  }
};

template <typename Scalar>
struct TrainResult {
  Mlp<Scalar> model;
  std::vector<double> loss_trace;  // mean cross-entropy per epoch
};

// Plain mini-batch SGD over shuffled batches. The shuffle schedule is
// derived from cfg.seed, so (seed, config, data) fixes the result.
template <typename Scalar, typename Derived>
TrainResult<Scalar> train(Mlp<Scalar> model, const Eigen::MatrixBase<Derived>& inputs,
                          std::span<const int> labels, const TrainConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(inputs.cols());
  if (n == 0) throw SizeError("cannot train on an empty dataset");
  if (labels.size() != n) throw SizeError("train: inputs and labels differ in length");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= model.output_dim()) {
      throw ValidationError("label " + std::to_string(l) + " outside the output range");
    }
  }
  if (static_cast<std::size_t>(inputs.rows()) != model.input_dim()) {
    throw SizeError("train: input dim does not match the network");
  }

  const Scalar lr = static_cast<Scalar>(cfg.learning_rate);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::vector<int> batch_labels;
  TrainResult<Scalar> result{std::move(model), {}};
  auto& net = result.model;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(std::span<Eigen::Index>(order));
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < n; b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t m = std::min<std::size_t>(cfg.batch_size, n - b);
      const std::span<const Eigen::Index> idx(order.data() + b, m);
      batch_labels.resize(m);
      for (std::size_t k = 0; k < m; ++k) batch_labels[k] = labels[static_cast<std::size_t>(idx[k])];

      const Matrix<Scalar> x = inputs(Eigen::all, idx).template cast<Scalar>();
      const auto trace = net.forward_trace(x);
      const auto lg = softmax_cross_entropy<Scalar>(trace.outputs.back(), batch_labels);
      epoch_loss += static_cast<double>(lg.loss) * static_cast<double>(m);
      const auto grads = net.backward(trace, lg.grad);
      for (std::size_t l = 0; l < grads.size(); ++l) {
        net.layers()[l].weights -= lr * grads[l].weights;
        net.layers()[l].biases -= lr * grads[l].biases;
      }
    }
    if (!net.all_finite()) {
      throw StateError("training diverged (non-finite parameters) at epoch " +
                       std::to_string(epoch));
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(n));
  }
  return result;
}

template <typename Scalar>
TrainResult<Scalar> train(Mlp<Scalar> model, const LabeledDataset& dataset,
                          const TrainConfig& cfg) {
  return train(std::move(model), dataset.pixels(), std::span<const int>(dataset.labels()), cfg);
}

struct ParamCoord {
  std::size_t layer = 0;
  bool bias = false;
  Eigen::Index row = 0;
  Eigen::Index col = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  bool passed = true;
  ParamCoord worst;
  double analytic = 0.0;
  double numeric = 0.0;
};

std::string describe(const ParamCoord& c);

// Central finite differences on every parameter of the mean softmax
// cross-entropy loss; relative error |a - n| / max(|a| + |n|, 1e-6).
GradCheckReport grad_check(const Mlp<double>& model, const Eigen::MatrixXd& inputs,
                           std::span<const int> labels, double tolerance, double step = 1e-5);

// Versioned little-endian binary checkpoint: dims, activations and
// row-major weights/biases. Loading reproduces the model bit-exactly.
void save_model(const Mlp<double>& model, const std::filesystem::path& path);
Mlp<double> load_model(const std::filesystem::path& path);

}  // namespace ldpx::nn
