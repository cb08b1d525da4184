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
#include "ldpx/oracle.hpp"

#include "ldpx/errors.hpp"

namespace ldpx {

RemoteOracle::RemoteOracle(nn::Mlp<double> model, int num_classes)
    : model_(std::move(model)), num_classes_(num_classes) {
  if (model_.output_dim() != static_cast<std::size_t>(num_classes_)) {
    throw SizeError("oracle model outputs do not match the class count");
  }
}

RemoteOracle::RemoteOracle(RemoteOracle&& other) noexcept
    : model_(std::move(other.model_)),
      num_classes_(other.num_classes_),
      count_(other.count_.load()),
      clean_acc_priv_(other.clean_acc_priv_),
      clean_acc_val_(other.clean_acc_val_),
      audit_(other.audit_) {}

std::vector<int> RemoteOracle::query(std::span<const ProtectedImage> batch) {
  if (batch.empty()) throw SizeError("empty query batch");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(input_dim()), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (static_cast<std::size_t>(batch[i].pixels().size()) != input_dim()) {
      throw SizeError("query image has " + std::to_string(batch[i].pixels().size()) +
                      " pixels, oracle expects " + std::to_string(input_dim()));
    }
    x.col(static_cast<Eigen::Index>(i)) = batch[i].pixels();
  }
  auto labels = nn::predict_labels(model_, x);
  const std::uint64_t first = count_.fetch_add(batch.size());
  if (audit_ != nullptr) {
    std::lock_guard lock(audit_mutex_);
    for (std::size_t i = 0; i < labels.size(); ++i) *audit_ << first + i << ',' << labels[i] << '\n';
  }
  return labels;
}

double RemoteOracle::reference_accuracy(const LabeledDataset& dataset) const {
  return nn::accuracy(model_, dataset);
}

void RemoteOracle::record_reference(const LabeledDataset& priv, const LabeledDataset& val) {
  clean_acc_priv_ = reference_accuracy(priv);
  clean_acc_val_ = reference_accuracy(val);
}

void RemoteOracle::set_audit_log(std::ostream* log) {
  std::lock_guard lock(audit_mutex_);
  audit_ = log;
}

RemoteOracle fit_remote(const LabeledDataset& remote_train, const RemoteConfig& cfg) {
  if (remote_train.empty()) throw SizeError("remote training split is empty");
  std::vector<std::size_t> dims{static_cast<std::size_t>(remote_train.shape().size())};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(static_cast<std::size_t>(remote_train.num_classes()));
  auto model = nn::init_model<double>(dims, cfg.train.seed);
  auto trained = nn::train(std::move(model), remote_train, cfg.train);
  return RemoteOracle(std::move(trained.model), remote_train.num_classes());
}

double sidp_accuracy(LabelOracle& oracle, std::span<const ProtectedImage> protected_set,
                     std::span<const int> true_labels) {
  if (protected_set.size() != true_labels.size()) {
    throw SizeError("sidp_accuracy: " + std::to_string(protected_set.size()) + " images but " +
                    std::to_string(true_labels.size()) + " labels");
  }
  if (protected_set.empty()) throw SizeError("sidp_accuracy of an empty set is undefined");
  const auto labels = oracle.query(protected_set);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += labels[i] == true_labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<int> RecordingOracle::query(std::span<const ProtectedImage> batch) {
  {
    std::lock_guard lock(mutex_);
    for (const auto& p : batch) queried_.push_back(p.pixels());
  }
  return inner_.query(batch);
}

}  // namespace ldpx
