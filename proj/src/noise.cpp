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
#include "ldpx/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "ldpx/errors.hpp"

namespace ldpx {

namespace {

Eigen::VectorXd clamp01(const Eigen::VectorXd& v) { return v.cwiseMax(0.0).cwiseMin(1.0); }

}  // namespace

double laplace_scale(double epsilon, double sensitivity) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw DomainError("epsilon must be positive and finite, got " + std::to_string(epsilon));
  }
  if (!(sensitivity > 0.0) || !std::isfinite(sensitivity)) {
    throw DomainError("sensitivity must be positive and finite, got " +
                      std::to_string(sensitivity));
  }
  return sensitivity / epsilon;
}

double laplace_pdf(double z, double scale) {
  return std::exp(-std::abs(z) / scale) / (2.0 * scale);
}

double laplace_cdf(double z, double scale) {
  return z < 0.0 ? 0.5 * std::exp(z / scale) : 1.0 - 0.5 * std::exp(-z / scale);
}

NoiseSpec::NoiseSpec(double epsilon, double sensitivity)
    : epsilon_(epsilon), sensitivity_(sensitivity), scale_(laplace_scale(epsilon, sensitivity)) {}

double draw_laplace(double scale, Rng& rng) {
  const double u = rng.uniform_open();
  return u < 0.5 ? scale * std::log(2.0 * u) : -scale * std::log(2.0 * (1.0 - u));
}

Eigen::VectorXd sample_laplace(const NoiseSpec& spec, Rng& rng, std::size_t count) {
  if (count == 0) throw DomainError("sample_laplace needs count >= 1");
  Eigen::VectorXd out(static_cast<Eigen::Index>(count));
  for (auto& v : out) v = draw_laplace(spec.scale(), rng);
  return out;
}

const char* to_string(NoiseLayer layer) {
  switch (layer) {
    case NoiseLayer::Base: return "base";
    case NoiseLayer::RandPost: return "rand";
    case NoiseLayer::SupPost: return "sup";
  }
  return "unknown";
}

const char* to_string(Mechanism mechanism) {
  return mechanism == Mechanism::Rand ? "rand" : "sup";
}

Mechanism parse_mechanism(const std::string& name) {
  if (name == "rand" || name == "Rand") return Mechanism::Rand;
  if (name == "sup" || name == "Sup") return Mechanism::Sup;
  throw DomainError("unknown mechanism '" + name + "' (expected rand or sup)");
}

ProtectedImage add_base_noise(const ImageTensor& x, std::size_t source_index,
                              const NoiseSpec& spec, Rng& rng) {
  x.validate();
  Eigen::VectorXd noisy =
      x.pixels + sample_laplace(spec, rng, static_cast<std::size_t>(x.pixels.size()));
  return ProtectedImage(clamp01(noisy), x.shape, source_index, NoiseLayer::Base, spec);
}

std::vector<ProtectedImage> protect_dataset(const LabeledDataset& dataset, const NoiseSpec& spec,
                                            std::uint64_t seed) {
  std::vector<ProtectedImage> out;
  out.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    Rng rng(derive_seed(seed, {i}));
    out.push_back(add_base_noise(dataset.image(i), i, spec, rng));
  }
  return out;
}

ProtectedImage rand_post_process(const ProtectedImage& p, const NoiseSpec& post_spec, Rng& rng) {
  if (p.layer() != NoiseLayer::Base) {
    throw StateError(std::string("rand post-processing needs a base-noised image, got layer ") +
                     to_string(p.layer()));
  }
  Eigen::VectorXd noisy =
      p.pixels() + sample_laplace(post_spec, rng, static_cast<std::size_t>(p.pixels().size()));
  return ProtectedImage(clamp01(noisy), p.shape(), p.source_index(), NoiseLayer::RandPost,
                        p.base_spec());
}

ProtectedImage rand_post_process(const ProtectedImage& p, Rng& rng) {
  return rand_post_process(p, p.base_spec(), rng);
}

ProtectedImage sup_combine(const ProtectedImage& a, const ProtectedImage& b) {
  if (a.layer() != NoiseLayer::Base || b.layer() != NoiseLayer::Base) {
    throw StateError("superimposition needs two base-noised images");
  }
  if (!(a.shape() == b.shape()) || a.pixels().size() != b.pixels().size()) {
    throw SizeError("superimposition needs images of the same shape");
  }
  if (a.source_index() == b.source_index()) {
    throw DomainError("superimposition needs distinct source indices, both are " +
                      std::to_string(a.source_index()));
  }
  return ProtectedImage(0.5 * (a.pixels() + b.pixels()), a.shape(), a.source_index(),
                        NoiseLayer::SupPost, a.base_spec(), b.source_index());
}

std::size_t CandidateSet::size() const {
  return selection_ ? selection_->size() : full_size();
}

std::uint64_t CandidateSet::item_id(std::size_t k) const {
  if (k >= size()) throw SizeError("candidate index out of range");
  return selection_ ? (*selection_)[k] : k;
}

CandidateRef CandidateSet::ref_of_id(std::uint64_t id) const {
  const std::size_t n = base_count();
  const auto row = static_cast<std::size_t>(id / (n - 1));
  const auto col = static_cast<std::size_t>(id % (n - 1));
  if (mechanism_ == Mechanism::Rand) return {row, col};
  return {row, col < row ? col : col + 1};
}

CandidateRef CandidateSet::ref(std::size_t k) const { return ref_of_id(item_id(k)); }

ProtectedImage CandidateSet::materialize(std::size_t k) const {
  const std::uint64_t id = item_id(k);
  const CandidateRef r = ref_of_id(id);
  const auto& base = *base_;
  if (mechanism_ == Mechanism::Sup) return sup_combine(base[r.source], base[r.partner]);
  Rng rng(derive_seed(rand_seed_, {r.source, r.partner}));
  return rand_post_process(base[r.source], post_spec_, rng);
}

Eigen::MatrixXd CandidateSet::pixels(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw SizeError("candidate range out of bounds");
  const auto dim = base_->front().pixels().size();
  Eigen::MatrixXd out(dim, static_cast<Eigen::Index>(end - begin));
  for (std::size_t k = begin; k < end; ++k) {
    out.col(static_cast<Eigen::Index>(k - begin)) = materialize(k).pixels();
  }
  return out;
}

std::vector<ProtectedImage> CandidateSet::materialize_all() const {
  std::vector<ProtectedImage> out;
  out.reserve(size());
  for (std::size_t k = 0; k < size(); ++k) out.push_back(materialize(k));
  return out;
}

CandidateSet build_candidate_set(std::vector<ProtectedImage> protected_set, Mechanism mechanism,
                                 const NoiseSpec& post_spec, Rng& rng) {
  if (protected_set.size() < 2) {
    throw SizeError("candidate construction needs at least 2 protected images, got " +
                    std::to_string(protected_set.size()));
  }
  std::unordered_set<std::size_t> sources;
  for (const auto& p : protected_set) {
    if (p.layer() != NoiseLayer::Base) {
      throw StateError("candidate construction needs base-noised images");
    }
    if (!(p.shape() == protected_set.front().shape())) {
      throw SizeError("protected images differ in shape");
    }
    if (!sources.insert(p.source_index()).second) {
      throw DomainError("duplicate source index " + std::to_string(p.source_index()));
    }
  }
  const NoiseSpec base_spec = protected_set.front().base_spec();
  const std::uint64_t seed = rng();
  return CandidateSet(std::make_shared<const std::vector<ProtectedImage>>(std::move(protected_set)),
                      mechanism, base_spec, post_spec, seed);
}

CandidateSet select_inference_subset(const CandidateSet& candidates, std::size_t k, Rng& rng) {
  const std::size_t total = candidates.size();
  if (k < 1 || k > total) {
    throw SizeError("inference subset size " + std::to_string(k) + " outside [1, " +
                    std::to_string(total) + "]");
  }
  // Floyd's sampling over positions of `candidates`, then a shuffle so the
  // query order carries no enumeration structure.
  std::vector<std::uint64_t> picked;
  picked.reserve(k);
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(k * 2);
  for (std::size_t j = total - k; j < total; ++j) {
    const std::uint64_t t = rng.below(j + 1);
    const std::uint64_t v = seen.insert(t).second ? t : j;
    if (v == j) seen.insert(j);
    picked.push_back(v);
  }
  rng.shuffle(std::span<std::uint64_t>(picked));
  for (auto& p : picked) p = candidates.item_id(static_cast<std::size_t>(p));

  CandidateSet out = candidates;
  out.selection_ = std::make_shared<const std::vector<std::uint64_t>>(std::move(picked));
  return out;
}

void write_pgm_grid(const std::filesystem::path& path, std::span<const Eigen::VectorXd> images,
                    const ImageShape& shape, int columns) {
  if (images.empty() || columns < 1) throw SizeError("nothing to render");
  const int rows = static_cast<int>((images.size() + columns - 1) / columns);
  const int pad = 1;
  const int width = columns * (shape.width + pad) + pad;
  const int height = rows * (shape.height + pad) + pad;
  std::vector<std::uint8_t> canvas(static_cast<std::size_t>(width) * height, 0);
  const int plane = shape.height * shape.width;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const int oy = static_cast<int>(n / columns) * (shape.height + pad) + pad;
    const int ox = static_cast<int>(n % columns) * (shape.width + pad) + pad;
    for (int y = 0; y < shape.height; ++y) {
      for (int x = 0; x < shape.width; ++x) {
        double v = 0.0;
        for (int c = 0; c < shape.channels; ++c) v += images[n][c * plane + y * shape.width + x];
        canvas[static_cast<std::size_t>(oy + y) * width + ox + x] =
            quantize_pixel(v / shape.channels);
      }
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(canvas.data()),
            static_cast<std::streamsize>(canvas.size()));
}

}  // namespace ldpx
