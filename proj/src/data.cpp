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
#include "ldpx/data.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iterator>
#include <numeric>

#include "ldpx/errors.hpp"
#include "ldpx/random.hpp"

namespace ldpx {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const std::filesystem::path& path) {
  if (buf.size() < offset + 4) throw TruncatedError("truncated IDX header in " + path.string());
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), b.size());
}

// Sum of Gaussian bumps with random centres, widths and signs.
Eigen::VectorXd smooth_field(const ImageShape& shape, int bumps, Rng& rng) {
  Eigen::VectorXd field = Eigen::VectorXd::Zero(shape.size());
  const double extent = std::min(shape.height, shape.width);
  for (int k = 0; k < bumps; ++k) {
    const double cy = rng.uniform(0.0, shape.height - 1.0);
    const double cx = rng.uniform(0.0, shape.width - 1.0);
    const double sigma = rng.uniform(0.15, 0.35) * extent;
    const double amp = rng.uniform(-1.0, 1.0);
    for (int c = 0; c < shape.channels; ++c) {
      const double channel_amp = amp * (shape.channels == 1 ? 1.0 : rng.uniform(0.5, 1.0));
      for (int y = 0; y < shape.height; ++y) {
        for (int x = 0; x < shape.width; ++x) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          field[(c * shape.height + y) * shape.width + x] +=
              channel_amp * std::exp(-d2 / (2.0 * sigma * sigma));
        }
      }
    }
  }
  return field;
}

}  // namespace

void ImageTensor::validate() const {
  if (pixels.size() != shape.size()) {
    throw ValidationError("image has " + std::to_string(pixels.size()) + " pixels, shape needs " +
                          std::to_string(shape.size()));
  }
  if (pixels.size() > 0 && (pixels.minCoeff() < 0.0 || pixels.maxCoeff() > 1.0)) {
    throw ValidationError("image pixels must lie in [0,1]");
  }
}

const char* to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::RemoteTrain: return "remote_train";
    case SplitTag::PrivPool: return "priv_pool";
    case SplitTag::Priv: return "priv";
    case SplitTag::Val: return "val";
    case SplitTag::Unsplit: return "unsplit";
  }
  return "unknown";
}

LabeledDataset::LabeledDataset(Eigen::MatrixXd pixels, std::vector<int> labels, int num_classes,
                               ImageShape shape, SplitTag tag)
    : pixels_(std::move(pixels)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      shape_(shape),
      tag_(tag) {
  if (static_cast<std::size_t>(pixels_.cols()) != labels_.size()) {
    throw MismatchError("dataset has " + std::to_string(pixels_.cols()) + " images but " +
                        std::to_string(labels_.size()) + " labels");
  }
  if (pixels_.cols() > 0 && pixels_.rows() != shape_.size()) {
    throw SizeError("image rows do not match shape");
  }
  for (int l : labels_) {
    if (l < 0 || l >= num_classes_) {
      throw ValidationError("label " + std::to_string(l) + " outside [0, " +
                            std::to_string(num_classes_) + ")");
    }
  }
}

ImageTensor LabeledDataset::image(std::size_t i) const {
  return ImageTensor{pixels_.col(static_cast<Eigen::Index>(i)), shape_};
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices, SplitTag tag) const {
  Eigen::MatrixXd px(pixels_.rows(), static_cast<Eigen::Index>(indices.size()));
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= size()) throw SizeError("subset index out of range");
    px.col(static_cast<Eigen::Index>(k)) = pixels_.col(static_cast<Eigen::Index>(indices[k]));
    labels.push_back(labels_[indices[k]]);
  }
  return LabeledDataset(std::move(px), std::move(labels), num_classes_, shape_, tag);
}

std::vector<std::size_t> LabeledDataset::indices_of_class(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> LabeledDataset::class_histogram() const {
  std::vector<std::size_t> hist(static_cast<std::size_t>(num_classes_), 0);
  for (int l : labels_) ++hist[static_cast<std::size_t>(l)];
  return hist;
}

LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);

  if (read_be32(img, 0, images_path) != kIdxImagesMagic) {
    throw FormatError("bad IDX image magic in " + images_path.string());
  }
  if (read_be32(lab, 0, labels_path) != kIdxLabelsMagic) {
    throw FormatError("bad IDX label magic in " + labels_path.string());
  }
  const std::size_t count = read_be32(img, 4, images_path);
  const int rows = static_cast<int>(read_be32(img, 8, images_path));
  const int cols = static_cast<int>(read_be32(img, 12, images_path));
  const std::size_t label_count = read_be32(lab, 4, labels_path);

  const std::size_t pixels_per_image = static_cast<std::size_t>(rows) * cols;
  if (img.size() < 16 + count * pixels_per_image) {
    throw TruncatedError("IDX image payload truncated in " + images_path.string());
  }
  if (lab.size() < 8 + label_count) {
    throw TruncatedError("IDX label payload truncated in " + labels_path.string());
  }
  if (count != label_count) {
    throw MismatchError(std::to_string(count) + " images but " + std::to_string(label_count) +
                        " labels");
  }

  Eigen::MatrixXd px(static_cast<Eigen::Index>(pixels_per_image),
                     static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t p = 0; p < pixels_per_image; ++p) {
      px(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i)) =
          img[16 + i * pixels_per_image + p] / 255.0;
    }
  }
  std::vector<int> labels(count);
  int max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    labels[i] = lab[8 + i];
    max_label = std::max(max_label, labels[i]);
  }
  return LabeledDataset(std::move(px), std::move(labels), max_label + 1,
                        ImageShape{rows, cols, 1});
}

void write_idx(const LabeledDataset& dataset, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  if (dataset.shape().channels != 1) throw SizeError("IDX writer supports one channel");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img) throw IoError("cannot write " + images_path.string());
  if (!lab) throw IoError("cannot write " + labels_path.string());

  write_be32(img, kIdxImagesMagic);
  write_be32(img, static_cast<std::uint32_t>(dataset.size()));
  write_be32(img, static_cast<std::uint32_t>(dataset.shape().height));
  write_be32(img, static_cast<std::uint32_t>(dataset.shape().width));
  const auto& px = dataset.pixels();
  for (Eigen::Index i = 0; i < px.cols(); ++i) {
    for (Eigen::Index p = 0; p < px.rows(); ++p) {
      img.put(static_cast<char>(quantize_pixel(px(p, i))));
    }
  }
  write_be32(lab, kIdxLabelsMagic);
  write_be32(lab, static_cast<std::uint32_t>(dataset.size()));
  for (int l : dataset.labels()) lab.put(static_cast<char>(l));
}

LabeledDataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw DomainError("make_synthetic needs at least 2 classes");
  if (spec.per_class < 1 || spec.modes_per_class < 1) {
    throw DomainError("make_synthetic needs positive per_class and modes_per_class");
  }
  const ImageShape shape = spec.shape;
  const int dim = shape.size();
  if (dim <= 0) throw DomainError("make_synthetic needs a non-empty shape");

  if (!(spec.contrast > 0.0) || spec.contrast > 1.0) throw DomainError("contrast must be in (0, 1]");
  std::vector<Eigen::VectorXd> templates;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int m = 0; m < spec.modes_per_class; ++m) {
      Rng rng(derive_seed(spec.seed, {0, static_cast<std::uint64_t>(c),
                                      static_cast<std::uint64_t>(m)}));
      Eigen::VectorXd t = smooth_field(shape, 3, rng);
      const double lo = t.minCoeff();
      const double hi = t.maxCoeff();
      t = ((t.array() - lo) / std::max(hi - lo, 1e-12) * spec.contrast + 0.5 * (1.0 - spec.contrast)).matrix();
      templates.push_back(std::move(t));
    }
  }

  const std::size_t total = static_cast<std::size_t>(spec.num_classes) * spec.per_class;
  Eigen::MatrixXd px(dim, static_cast<Eigen::Index>(total));
  std::vector<int> labels(total);
  std::size_t col = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int s = 0; s < spec.per_class; ++s, ++col) {
      Rng rng(derive_seed(spec.seed, {1, static_cast<std::uint64_t>(c),
                                      static_cast<std::uint64_t>(s)}));
      const auto mode = static_cast<std::size_t>(rng.below(spec.modes_per_class));
      const Eigen::VectorXd& t = templates[static_cast<std::size_t>(c) * spec.modes_per_class + mode];
      const double gain = 1.0 + spec.gain_spread * rng.uniform(-1.0, 1.0);
      Eigen::VectorXd x = ((t.array() - 0.5) * gain + 0.5).matrix();
      x += spec.deformation * smooth_field(shape, 2, rng);
      for (int p = 0; p < dim; ++p) x[p] += spec.pixel_jitter * rng.normal();
      px.col(static_cast<Eigen::Index>(col)) = x.cwiseMax(0.0).cwiseMin(1.0);
      labels[col] = c;
    }
  }
  return LabeledDataset(std::move(px), std::move(labels), spec.num_classes, shape);
}

DatasetSplits split(const LabeledDataset& dataset, const SplitPlan& plan) {
  const std::size_t need = plan.remote_train_count + plan.priv_pool_count + plan.val_count;
  if (need > dataset.size()) {
    throw SizeError("split plan needs " + std::to_string(need) + " items, dataset has " +
                    std::to_string(dataset.size()));
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(plan.seed);
  rng.shuffle(std::span<std::size_t>(order));

  auto take = [&](std::size_t begin, std::size_t count, SplitTag tag) {
    return dataset.subset(std::span<const std::size_t>(order).subspan(begin, count), tag);
  };
  DatasetSplits out;
  out.remote_train = take(0, plan.remote_train_count, SplitTag::RemoteTrain);
  out.priv_pool = take(plan.remote_train_count, plan.priv_pool_count, SplitTag::PrivPool);
  out.val = take(plan.remote_train_count + plan.priv_pool_count, plan.val_count, SplitTag::Val);
  return out;
}

LabeledDataset sample_balanced_priv(const LabeledDataset& priv_pool, std::size_t priv_size,
                                    std::uint64_t seed) {
  const auto classes = static_cast<std::size_t>(priv_pool.num_classes());
  if (classes == 0 || priv_size % classes != 0) {
    throw SizeError("priv_size " + std::to_string(priv_size) + " is not divisible by " +
                    std::to_string(classes) + " classes");
  }
  const std::size_t per_class = priv_size / classes;
  std::vector<std::size_t> chosen;
  chosen.reserve(priv_size);
  for (std::size_t c = 0; c < classes; ++c) {
    auto idx = priv_pool.indices_of_class(static_cast<int>(c));
    if (idx.size() < per_class) {
      throw SizeError("class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                      " items, need " + std::to_string(per_class));
    }
    Rng rng(derive_seed(seed, {c}));
    rng.shuffle(std::span<std::size_t>(idx));
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_class));
  }
  Rng order_rng(derive_seed(seed, {classes}));
  order_rng.shuffle(std::span<std::size_t>(chosen));
  return priv_pool.subset(chosen, SplitTag::Priv);
}

}  // namespace ldpx
