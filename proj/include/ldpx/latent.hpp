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

// Latent-space comparison of Sup and Rand candidates. A small encoder is
// trained with the triplet margin loss on noised samples of three classes
// and maps clean, Sup and Rand points to 2-D. Clusters are compared by
// centroid distances and by the ratio
//
//   DR = KL(T || R) / KL(T || S)
//
// of grid-histogram divergences from the clean target triplet T to the Rand
// cluster R and the Sup cluster S. DR > 1 means Sup is closer to T.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ldpx/data.hpp"
#include "ldpx/nn.hpp"

namespace ldpx::latent {

enum class ClusterTag : std::uint8_t { ClassA, ClassB, ClassC, SupCluster, RandCluster };

const char* to_string(ClusterTag tag);

struct Embedding2D {
  Eigen::Matrix2Xd points;
  std::vector<ClusterTag> tags;

  void append(const Eigen::Matrix2Xd& pts, ClusterTag tag);
  Eigen::Matrix2Xd cluster(ClusterTag tag) const;
};

struct TripletLoss {
  double loss = 0.0;  // mean over triples
  Eigen::MatrixXd grad_anchor;
  Eigen::MatrixXd grad_positive;
  Eigen::MatrixXd grad_negative;
};

// max(0, |a - p| - |a - n| + margin) per column, averaged, with gradients.
TripletLoss triplet_margin_loss(const Eigen::MatrixXd& anchor, const Eigen::MatrixXd& positive,
                                const Eigen::MatrixXd& negative, double margin);

struct EncoderConfig {
  std::vector<std::size_t> hidden{32};
  std::size_t latent_dim = 2;
  double margin = 1.0;
  int steps = 600;
  int batch_size = 48;
  double learning_rate = 0.02;
  std::uint64_t seed = 0;
};

struct EncoderResult {
  nn::Mlp<double> encoder;
  std::vector<double> loss_trace;  // per step
};

// Batch-random mining: anchor and positive share a class, the negative is
// from another class. Needs >= 3 classes with >= 2 samples each.
EncoderResult train_triplet_encoder(const Eigen::MatrixXd& samples, std::span<const int> labels,
                                    const EncoderConfig& cfg);

Eigen::Vector2d centroid(const Eigen::Matrix2Xd& points);
double centroid_distance(const Eigen::Matrix2Xd& a, const Eigen::Matrix2Xd& b);

struct Bounds {
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
  friend bool operator==(const Bounds&, const Bounds&) = default;
};

// Bounding box of all points, widened slightly so every point is inside.
Bounds joint_bounds(std::initializer_list<const Eigen::Matrix2Xd*> clusters);

// A normalized, strictly positive distribution over a G x G grid.
class ClusterHistogram {
 public:
  // Counts points per cell, adds `smoothing` to every cell and normalizes.
  static ClusterHistogram from_points(const Eigen::Matrix2Xd& points, const Bounds& bounds,
                                      int grid = 32, double smoothing = 1e-6);
  // Wraps an explicit distribution; throws ValidationError unless every
  // entry is positive and the total is 1 within 1e-9.
  static ClusterHistogram from_probabilities(Eigen::MatrixXd probabilities, const Bounds& bounds);

  const Eigen::MatrixXd& grid() const { return grid_; }
  const Bounds& bounds() const { return bounds_; }
  double smoothing() const { return smoothing_; }

 private:
  ClusterHistogram(Eigen::MatrixXd grid, Bounds bounds, double smoothing)
      : grid_(std::move(grid)), bounds_(bounds), smoothing_(smoothing) {}

  Eigen::MatrixXd grid_;
  Bounds bounds_;
  double smoothing_ = 0.0;
};

// sum P log(P / Q). Throws SizeError if the grids differ.
double kl_divergence(const ClusterHistogram& p, const ClusterHistogram& q);

struct DivergenceRatio {
  double value = 0.0;
  double kl_target_rand = 0.0;
  double kl_target_sup = 0.0;
  bool degenerate = false;  // KL(T || S) == 0
};

DivergenceRatio divergence_ratio(const ClusterHistogram& target, const ClusterHistogram& rand,
                                 const ClusterHistogram& sup);

struct TripletSpec {
  std::array<int, 3> classes{0, 1, 2};
  std::pair<int, int> sup_pair{0, 1};  // classes superimposed for the centroid table
  int rand_class = 0;                  // class re-noised for the centroid table

  // Default designation: Sup on the first two classes, Rand on the first.
  static TripletSpec of(int a, int b, int c) { return {{a, b, c}, {a, b}, a}; }
  friend bool operator==(const TripletSpec&, const TripletSpec&) = default;
};

struct TripletStudyConfig {
  double epsilon = 1.0;
  EncoderConfig encoder{};
  int noisy_copies = 4;            // noised copies per sample for encoder training
  std::size_t cluster_points = 0;  // |C_S| == |C_R|; 0 means |C_T|
  int grid = 32;
  double smoothing = 1e-6;
  std::uint64_t seed = 0;
};

struct TripletRecord {
  TripletSpec spec;
  double epsilon = 0.0;
  // Distance from the designated Sup / Rand cluster centroid to each clean
  // class centroid, in spec.classes order.
  std::array<double, 3> sup_distances{};
  std::array<double, 3> rand_distances{};
  DivergenceRatio ratio;
  Embedding2D embedding;  // clean classes + designated Sup / Rand clusters
};

// Throws SizeError when a triplet class is absent from `source` (or has a
// single sample).
TripletRecord triplet_study(const LabeledDataset& source, const TripletSpec& spec,
                            const TripletStudyConfig& cfg);

nlohmann::json to_json(const TripletRecord& record);

}  // namespace ldpx::latent
