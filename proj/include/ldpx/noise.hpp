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

// Laplace mechanism for per-pixel local differential privacy, and the two
// post-processing mechanisms that expand a base-noised private set into a
// candidate query pool:
//
//   Rand: every base-noised image receives a second, independent Laplace
//         layer; n-1 variants per image.
//   Sup:  every ordered pair (i, j), i != j, of base-noised images is
//         averaged pixel-wise.
//
// Both yield n(n-1) candidates. Candidates are functions of the base-noised
// set alone, so the per-image epsilon guarantee of the base layer carries
// over by post-processing.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ldpx/data.hpp"
#include "ldpx/random.hpp"

namespace ldpx {

// lambda = sensitivity / epsilon. Throws DomainError naming the bad argument.
double laplace_scale(double epsilon, double sensitivity);

double laplace_pdf(double z, double scale);
double laplace_cdf(double z, double scale);

// Privacy budget threaded through the mechanisms. Sensitivity defaults to
// the per-pixel range of images normalized to [0,1].
class NoiseSpec {
 public:
  explicit NoiseSpec(double epsilon, double sensitivity = 1.0);

  double epsilon() const { return epsilon_; }
  double sensitivity() const { return sensitivity_; }
  double scale() const { return scale_; }

  friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;

 private:
  double epsilon_;
  double sensitivity_;
  double scale_;
};

// One inverse-CDF draw from Laplace(0, scale).
double draw_laplace(double scale, Rng& rng);

// i.i.d. Laplace(0, spec.scale()) draws. Throws DomainError if count == 0.
Eigen::VectorXd sample_laplace(const NoiseSpec& spec, Rng& rng, std::size_t count);

enum class NoiseLayer { Base, RandPost, SupPost };
enum class Mechanism { Rand, Sup };

const char* to_string(NoiseLayer layer);
const char* to_string(Mechanism mechanism);
Mechanism parse_mechanism(const std::string& name);

// An image that has been through the Laplace mechanism. Only the functions
// in this header can create one, so any ProtectedImage in the program
// carries at least one layer of base noise.
class ProtectedImage {
 public:
  const Eigen::VectorXd& pixels() const { return pixels_; }
  const ImageShape& shape() const { return shape_; }
  std::size_t source_index() const { return source_index_; }
  std::optional<std::size_t> pair_index() const { return pair_index_; }
  NoiseLayer layer() const { return layer_; }
  const NoiseSpec& base_spec() const { return base_spec_; }
  ImageTensor tensor() const { return ImageTensor{pixels_, shape_}; }

 private:
  ProtectedImage(Eigen::VectorXd pixels, ImageShape shape, std::size_t source, NoiseLayer layer,
                 NoiseSpec base_spec, std::optional<std::size_t> pair = std::nullopt)
      : pixels_(std::move(pixels)),
        shape_(shape),
        source_index_(source),
        pair_index_(pair),
        layer_(layer),
        base_spec_(base_spec) {}

  friend ProtectedImage add_base_noise(const ImageTensor&, std::size_t, const NoiseSpec&, Rng&);
  friend ProtectedImage rand_post_process(const ProtectedImage&, const NoiseSpec&, Rng&);
  friend ProtectedImage sup_combine(const ProtectedImage&, const ProtectedImage&);

  Eigen::VectorXd pixels_;
  ImageShape shape_;
  std::size_t source_index_;
  std::optional<std::size_t> pair_index_;
  NoiseLayer layer_;
  NoiseSpec base_spec_;
};

// x + Laplace noise per pixel, clamped to [0,1]. Throws ValidationError for
// pixels outside [0,1].
ProtectedImage add_base_noise(const ImageTensor& x, std::size_t source_index,
                              const NoiseSpec& spec, Rng& rng);

// Base-noises every image of a dataset; image i draws from a stream derived
// from (seed, i), so the result does not depend on evaluation order.
std::vector<ProtectedImage> protect_dataset(const LabeledDataset& dataset, const NoiseSpec& spec,
                                            std::uint64_t seed);

// Second independent Laplace layer, clamped. Only Base images may be
// post-processed (StateError otherwise). The one-argument form reuses the
// base layer's budget.
ProtectedImage rand_post_process(const ProtectedImage& p, const NoiseSpec& post_spec, Rng& rng);
ProtectedImage rand_post_process(const ProtectedImage& p, Rng& rng);

// Pixel-wise mean of two Base images with distinct sources.
ProtectedImage sup_combine(const ProtectedImage& a, const ProtectedImage& b);

// Position of a candidate in the full enumeration. For Sup `partner` is the
// second image; for Rand it is the variant number in [0, n-1).
struct CandidateRef {
  std::size_t source = 0;
  std::size_t partner = 0;
  friend bool operator==(const CandidateRef&, const CandidateRef&) = default;
};

// The post-processed candidate pool. Items are enumerated row-major over
// (i, j) and materialized on demand, so a pool of n(n-1) items costs O(n)
// memory. A subset view (D_infer) keeps the selected enumeration ids.
class CandidateSet {
 public:
  std::size_t size() const;
  std::size_t base_count() const { return base_->size(); }
  std::size_t full_size() const { return base_count() * (base_count() - 1); }
  Mechanism mechanism() const { return mechanism_; }
  const NoiseSpec& base_spec() const { return base_spec_; }
  const NoiseSpec& post_spec() const { return post_spec_; }
  bool is_subset() const { return selection_ != nullptr; }

  // Enumeration id of item k (k itself unless this is a subset view).
  std::uint64_t item_id(std::size_t k) const;
  CandidateRef ref(std::size_t k) const;
  ProtectedImage materialize(std::size_t k) const;
  // Pixels of items [begin, end) as matrix columns.
  Eigen::MatrixXd pixels(std::size_t begin, std::size_t end) const;
  std::vector<ProtectedImage> materialize_all() const;

  const std::vector<ProtectedImage>& protected_images() const { return *base_; }

 private:
  friend CandidateSet build_candidate_set(std::vector<ProtectedImage>, Mechanism,
                                          const NoiseSpec&, Rng&);
  friend CandidateSet select_inference_subset(const CandidateSet&, std::size_t, Rng&);

  CandidateSet(std::shared_ptr<const std::vector<ProtectedImage>> base, Mechanism mechanism,
               NoiseSpec base_spec, NoiseSpec post_spec, std::uint64_t rand_seed)
      : base_(std::move(base)),
        mechanism_(mechanism),
        base_spec_(base_spec),
        post_spec_(post_spec),
        rand_seed_(rand_seed) {}

  CandidateRef ref_of_id(std::uint64_t id) const;

  std::shared_ptr<const std::vector<ProtectedImage>> base_;
  std::shared_ptr<const std::vector<std::uint64_t>> selection_;
  Mechanism mechanism_;
  NoiseSpec base_spec_;
  NoiseSpec post_spec_;
  std::uint64_t rand_seed_;
};

// Throws SizeError for fewer than two images, StateError for non-Base
// images. `post_spec` only matters for Rand. One 64-bit seed is drawn from
// `rng` and every Rand variant derives its own stream from it.
CandidateSet build_candidate_set(std::vector<ProtectedImage> protected_set, Mechanism mechanism,
                                 const NoiseSpec& post_spec, Rng& rng);

// Uniform subset of k items without replacement, in random order.
CandidateSet select_inference_subset(const CandidateSet& candidates, std::size_t k, Rng& rng);

// Writes images as a tiled 8-bit binary PGM (round-half-up). Multi-channel
// images are averaged to grey.
void write_pgm_grid(const std::filesystem::path& path, std::span<const Eigen::VectorXd> images,
                    const ImageShape& shape, int columns);

}  // namespace ldpx
