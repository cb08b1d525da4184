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

// The remote model as seen from the user's side: a hard-label oracle. The
// query interface accepts only ProtectedImage (so every query carries base
// noise) and returns only class labels.

#include <atomic>
#include <cstdint>
#include <mutex>
#include <ostream>
#include <span>
#include <vector>

#include "ldpx/data.hpp"
#include "ldpx/nn.hpp"
#include "ldpx/noise.hpp"

namespace ldpx {

class LabelOracle {
 public:
  virtual ~LabelOracle() = default;
  // Hard labels for each image. Counts |batch| queries.
  virtual std::vector<int> query(std::span<const ProtectedImage> batch) = 0;
  virtual std::uint64_t query_count() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual int num_classes() const = 0;
};

struct RemoteConfig {
  std::vector<std::size_t> hidden{256, 128};
  nn::TrainConfig train{0.05, 30, 64, 7, nn::WeightInit::HeUniform};
};

class RemoteOracle final : public LabelOracle {
 public:
  RemoteOracle(nn::Mlp<double> model, int num_classes);
  RemoteOracle(RemoteOracle&& other) noexcept;
  RemoteOracle(const RemoteOracle&) = delete;
  RemoteOracle& operator=(const RemoteOracle&) = delete;
  RemoteOracle& operator=(RemoteOracle&&) = delete;

  std::vector<int> query(std::span<const ProtectedImage> batch) override;
  std::uint64_t query_count() const override { return count_.load(); }
  std::size_t input_dim() const override { return model_.input_dim(); }
  int num_classes() const override { return num_classes_; }

  // Provider-side reference measurement on clean data. Not a query: it is
  // what the provider would report, and it is not counted.
  double reference_accuracy(const LabeledDataset& dataset) const;
  void record_reference(const LabeledDataset& priv, const LabeledDataset& val);
  double clean_acc_priv() const { return clean_acc_priv_; }
  double clean_acc_val() const { return clean_acc_val_; }

  // Appends one "ordinal,label" line per answered query.
  void set_audit_log(std::ostream* log);

  // Checkpointing of the sealed model is a provider operation.
  void save(const std::filesystem::path& path) const { nn::save_model(model_, path); }

 private:
  nn::Mlp<double> model_;
  int num_classes_;
  std::atomic<std::uint64_t> count_{0};
  double clean_acc_priv_ = 0.0;
  double clean_acc_val_ = 0.0;
  std::ostream* audit_ = nullptr;
  std::mutex audit_mutex_;
};

// Trains the remote classifier on the remote split. Throws SizeError on an
// empty split; training errors propagate.
RemoteOracle fit_remote(const LabeledDataset& remote_train, const RemoteConfig& cfg);

// Oracle labels for D_protected compared with the true labels.
double sidp_accuracy(LabelOracle& oracle, std::span<const ProtectedImage> protected_set,
                     std::span<const int> true_labels);

// Pass-through oracle that keeps a copy of every queried tensor.
class RecordingOracle final : public LabelOracle {
 public:
  explicit RecordingOracle(LabelOracle& inner) : inner_(inner) {}

  std::vector<int> query(std::span<const ProtectedImage> batch) override;
  std::uint64_t query_count() const override { return inner_.query_count(); }
  std::size_t input_dim() const override { return inner_.input_dim(); }
  int num_classes() const override { return inner_.num_classes(); }

  const std::vector<Eigen::VectorXd>& queried() const { return queried_; }
  void clear() { queried_.clear(); }

 private:
  LabelOracle& inner_;
  std::mutex mutex_;
  std::vector<Eigen::VectorXd> queried_;
};

}  // namespace ldpx
