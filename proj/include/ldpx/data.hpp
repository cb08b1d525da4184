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

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ldpx {

struct ImageShape {
  int height = 0;
  int width = 0;
  int channels = 1;

  int size() const { return height * width * channels; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

// A flattened image with pixels in [0,1].
struct ImageTensor {
  Eigen::VectorXd pixels;
  ImageShape shape;

  // Throws ValidationError if the pixel count or range is wrong.
  void validate() const;
};

enum class SplitTag { RemoteTrain, PrivPool, Priv, Val, Unsplit };

const char* to_string(SplitTag tag);

// Images are stored column-wise: pixels.col(i) is image i. This is the
// layout the network consumes directly.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(Eigen::MatrixXd pixels, std::vector<int> labels, int num_classes,
                 ImageShape shape, SplitTag tag = SplitTag::Unsplit);

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  int num_classes() const { return num_classes_; }
  const ImageShape& shape() const { return shape_; }
  SplitTag tag() const { return tag_; }
  void set_tag(SplitTag tag) { tag_ = tag; }

  const Eigen::MatrixXd& pixels() const { return pixels_; }
  const std::vector<int>& labels() const { return labels_; }
  int label(std::size_t i) const { return labels_[i]; }
  ImageTensor image(std::size_t i) const;

  // Rows of a new dataset, in the given order.
  LabeledDataset subset(std::span<const std::size_t> indices, SplitTag tag) const;
  // Indices of items with the given label, in dataset order.
  std::vector<std::size_t> indices_of_class(int label) const;
  std::vector<std::size_t> class_histogram() const;

 private:
  Eigen::MatrixXd pixels_;
  std::vector<int> labels_;
  int num_classes_ = 0;
  ImageShape shape_;
  SplitTag tag_ = SplitTag::Unsplit;
};

// IDX (MNIST-family) ingestion. Bytes are scaled to [0,1] by /255.
// Throws IoError, FormatError (bad magic), TruncatedError or MismatchError.
LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path);

// Writes a single-channel dataset as IDX with round-half-up quantization.
void write_idx(const LabeledDataset& dataset, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

inline std::uint8_t quantize_pixel(double p) {
  const double v = std::floor(p * 255.0 + 0.5);
  return static_cast<std::uint8_t>(v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v));
}

struct SyntheticSpec {
  int num_classes = 10;
  int per_class = 1000;
  ImageShape shape{8, 8, 1};
  // Distinct low-frequency templates per class; samples pick one at random.
  int modes_per_class = 3;
  // Templates span [0.5 - contrast/2, 0.5 + contrast/2].
  double contrast = 0.8;
  // Per-sample deformation: random gain on the template contrast and a
  // random smooth perturbation field, then i.i.d. pixel jitter.
  double gain_spread = 0.25;
  double deformation = 0.12;
  double pixel_jitter = 0.06;
  std::uint64_t seed = 1;
};

// Class-conditional images built from smoothed random templates. Output is
// ordered by class then by sample.
LabeledDataset make_synthetic(const SyntheticSpec& spec);

struct SplitPlan {
  std::size_t remote_train_count = 0;
  std::size_t priv_pool_count = 0;
  std::size_t val_count = 0;
  std::uint64_t seed = 0;
};

struct DatasetSplits {
  LabeledDataset remote_train;
  LabeledDataset priv_pool;
  LabeledDataset val;
};

// Disjoint shuffled partitions. Throws SizeError when the plan exceeds the
// dataset.
DatasetSplits split(const LabeledDataset& dataset, const SplitPlan& plan);

// Exactly priv_size / C items per class, sampled without replacement.
LabeledDataset sample_balanced_priv(const LabeledDataset& priv_pool, std::size_t priv_size,
                                    std::uint64_t seed);

}  // namespace ldpx
