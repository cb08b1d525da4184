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
#include "ldpx/latent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "ldpx/errors.hpp"
#include "ldpx/noise.hpp"
#include "ldpx/random.hpp"

namespace ldpx::latent {

namespace {

constexpr double kDistanceFloor = 1e-12;

Eigen::MatrixXd embed(const nn::Mlp<double>& encoder, const Eigen::MatrixXd& x) {
  return encoder.forward(x);
}

Eigen::Matrix2Xd as_2d(const Eigen::MatrixXd& m) {
  if (m.rows() != 2) throw SizeError("latent analysis needs a 2-D embedding");
  return m;
}

}  // namespace

const char* to_string(ClusterTag tag) {
  switch (tag) {
    case ClusterTag::ClassA: return "class_a";
    case ClusterTag::ClassB: return "class_b";
    case ClusterTag::ClassC: return "class_c";
    case ClusterTag::SupCluster: return "sup";
    case ClusterTag::RandCluster: return "rand";
  }
  return "unknown";
}

void Embedding2D::append(const Eigen::Matrix2Xd& pts, ClusterTag tag) {
  const Eigen::Index old = points.cols();
  points.conservativeResize(2, old + pts.cols());
  points.rightCols(pts.cols()) = pts;
  tags.insert(tags.end(), static_cast<std::size_t>(pts.cols()), tag);
}

Eigen::Matrix2Xd Embedding2D::cluster(ClusterTag tag) const {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == tag) idx.push_back(static_cast<Eigen::Index>(i));
  }
  return points(Eigen::all, idx);
}

TripletLoss triplet_margin_loss(const Eigen::MatrixXd& anchor, const Eigen::MatrixXd& positive,
                                const Eigen::MatrixXd& negative, double margin) {
  if (anchor.rows() != positive.rows() || anchor.rows() != negative.rows() ||
      anchor.cols() != positive.cols() || anchor.cols() != negative.cols()) {
    throw SizeError("triplet loss operands differ in shape");
  }
  const Eigen::Index n = anchor.cols();
  if (n == 0) throw SizeError("triplet loss of an empty batch");
  TripletLoss out;
  out.grad_anchor = Eigen::MatrixXd::Zero(anchor.rows(), n);
  out.grad_positive = Eigen::MatrixXd::Zero(anchor.rows(), n);
  out.grad_negative = Eigen::MatrixXd::Zero(anchor.rows(), n);
  const double inv = 1.0 / static_cast<double>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::VectorXd ap = anchor.col(j) - positive.col(j);
    const Eigen::VectorXd an = anchor.col(j) - negative.col(j);
    const double d_ap = std::sqrt(ap.squaredNorm() + kDistanceFloor);
    const double d_an = std::sqrt(an.squaredNorm() + kDistanceFloor);
    const double l = d_ap - d_an + margin;
    if (l <= 0.0) continue;
    out.loss += l * inv;
    out.grad_anchor.col(j) = (ap / d_ap - an / d_an) * inv;
    out.grad_positive.col(j) = -ap / d_ap * inv;
    out.grad_negative.col(j) = an / d_an * inv;
  }
  return out;
}

EncoderResult train_triplet_encoder(const Eigen::MatrixXd& samples, std::span<const int> labels,
                                    const EncoderConfig& cfg) {
  if (static_cast<std::size_t>(samples.cols()) != labels.size()) {
    throw SizeError("encoder samples and labels differ in length");
  }
  if (cfg.steps < 1 || cfg.batch_size < 1) throw DomainError("encoder needs steps, batch >= 1");
  std::map<int, std::vector<Eigen::Index>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[labels[i]].push_back(static_cast<Eigen::Index>(i));
  }
  std::vector<const std::vector<Eigen::Index>*> classes;
  for (const auto& [label, idx] : by_class) {
    if (idx.size() >= 2) classes.push_back(&idx);
  }
  if (classes.size() < 3) {
    throw SizeError("triplet encoder needs 3 classes with at least 2 samples each, found " +
                    std::to_string(classes.size()));
  }

  std::vector<std::size_t> dims{static_cast<std::size_t>(samples.rows())};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(cfg.latent_dim);
  EncoderResult result{nn::init_model<double>(dims, derive_seed(cfg.seed, {0})), {}};
  auto& net = result.encoder;

  Rng rng(derive_seed(cfg.seed, {1}));
  const auto b = static_cast<Eigen::Index>(cfg.batch_size);
  std::vector<Eigen::Index> pick(static_cast<std::size_t>(3 * b));
  for (int step = 0; step < cfg.steps; ++step) {
    for (Eigen::Index k = 0; k < b; ++k) {
      const auto ca = rng.below(classes.size());
      auto cn = rng.below(classes.size() - 1);
      if (cn >= ca) ++cn;
      const auto& same = *classes[ca];
      const auto ia = rng.below(same.size());
      auto ip = rng.below(same.size() - 1);
      if (ip >= ia) ++ip;
      const auto& other = *classes[cn];
      pick[static_cast<std::size_t>(k)] = same[ia];
      pick[static_cast<std::size_t>(b + k)] = same[ip];
      pick[static_cast<std::size_t>(2 * b + k)] = other[rng.below(other.size())];
    }
    const Eigen::MatrixXd x = samples(Eigen::all, pick);
    const auto trace = net.forward_trace(x);
    const Eigen::MatrixXd& z = trace.outputs.back();
    const auto tl = triplet_margin_loss(z.leftCols(b), z.middleCols(b, b), z.rightCols(b),
                                        cfg.margin);
    Eigen::MatrixXd grad(z.rows(), 3 * b);
    grad << tl.grad_anchor, tl.grad_positive, tl.grad_negative;
    const auto grads = net.backward(trace, grad);
    for (std::size_t l = 0; l < grads.size(); ++l) {
      net.layers()[l].weights -= cfg.learning_rate * grads[l].weights;
      net.layers()[l].biases -= cfg.learning_rate * grads[l].biases;
    }
    result.loss_trace.push_back(tl.loss);
  }
  if (!net.all_finite()) throw StateError("triplet encoder training diverged");
  return result;
}

Eigen::Vector2d centroid(const Eigen::Matrix2Xd& points) {
  if (points.cols() == 0) throw SizeError("centroid of an empty cluster");
  return points.rowwise().mean();
}

double centroid_distance(const Eigen::Matrix2Xd& a, const Eigen::Matrix2Xd& b) {
  return (centroid(a) - centroid(b)).norm();
}

Bounds joint_bounds(std::initializer_list<const Eigen::Matrix2Xd*> clusters) {
  double inf = std::numeric_limits<double>::infinity();
  Bounds b{inf, -inf, inf, -inf};
  for (const auto* c : clusters) {
    if (c->cols() == 0) continue;
    b.x_min = std::min(b.x_min, c->row(0).minCoeff());
    b.x_max = std::max(b.x_max, c->row(0).maxCoeff());
    b.y_min = std::min(b.y_min, c->row(1).minCoeff());
    b.y_max = std::max(b.y_max, c->row(1).maxCoeff());
  }
  if (!std::isfinite(b.x_min)) throw SizeError("bounds of empty clusters");
  const double px = std::max(1e-9, 1e-6 * (b.x_max - b.x_min));
  const double py = std::max(1e-9, 1e-6 * (b.y_max - b.y_min));
  return {b.x_min - px, b.x_max + px, b.y_min - py, b.y_max + py};
}

ClusterHistogram ClusterHistogram::from_points(const Eigen::Matrix2Xd& points,
                                               const Bounds& bounds, int grid, double smoothing) {
  if (grid < 1) throw DomainError("histogram grid must be >= 1");
  if (!(smoothing > 0.0)) throw DomainError("histogram smoothing must be positive");
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(grid, grid);
  auto cell = [grid](double v, double lo, double hi) {
    const double t = (v - lo) / (hi - lo);
    return std::clamp(static_cast<int>(std::floor(t * grid)), 0, grid - 1);
  };
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    h(cell(points(1, i), bounds.y_min, bounds.y_max),
      cell(points(0, i), bounds.x_min, bounds.x_max)) += 1.0;
  }
  h.array() += smoothing;
  h /= h.sum();
  return ClusterHistogram(std::move(h), bounds, smoothing);
}

ClusterHistogram ClusterHistogram::from_probabilities(Eigen::MatrixXd probabilities,
                                                      const Bounds& bounds) {
  if (probabilities.size() == 0 || probabilities.minCoeff() <= 0.0) {
    throw ValidationError("distribution entries must be positive");
  }
  if (std::abs(probabilities.sum() - 1.0) > 1e-9) {
    throw ValidationError("distribution must sum to 1");
  }
  return ClusterHistogram(std::move(probabilities), bounds, 0.0);
}

double kl_divergence(const ClusterHistogram& p, const ClusterHistogram& q) {
  if (p.grid().rows() != q.grid().rows() || p.grid().cols() != q.grid().cols() ||
      !(p.bounds() == q.bounds())) {
    throw SizeError("KL divergence needs histograms on the same grid");
  }
  return (p.grid().array() * (p.grid().array() / q.grid().array()).log()).sum();
}

DivergenceRatio divergence_ratio(const ClusterHistogram& target, const ClusterHistogram& rand,
                                 const ClusterHistogram& sup) {
  DivergenceRatio r;
  r.kl_target_rand = kl_divergence(target, rand);
  r.kl_target_sup = kl_divergence(target, sup);
  if (r.kl_target_sup == 0.0) {
    r.degenerate = true;
    r.value = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.value = r.kl_target_rand / r.kl_target_sup;
  return r;
}

TripletRecord triplet_study(const LabeledDataset& source, const TripletSpec& spec,
                            const TripletStudyConfig& cfg) {
  const auto& cls = spec.classes;
  if (cls[0] == cls[1] || cls[0] == cls[2] || cls[1] == cls[2]) {
    throw DomainError("triplet classes must be distinct");
  }
  auto position = [&](int c) -> std::size_t {
    const auto it = std::find(cls.begin(), cls.end(), c);
    if (it == cls.end()) throw DomainError("designated class " + std::to_string(c) +
                                           " is not part of the triplet");
    return static_cast<std::size_t>(it - cls.begin());
  };
  const std::size_t sup_a = position(spec.sup_pair.first);
  const std::size_t sup_b = position(spec.sup_pair.second);
  const std::size_t rand_k = position(spec.rand_class);

  // Triplet members grouped by class position.
  std::array<std::vector<std::size_t>, 3> members;
  std::vector<std::size_t> all;
  for (std::size_t k = 0; k < 3; ++k) {
    members[k] = source.indices_of_class(cls[k]);
    if (members[k].size() < 2) {
      throw SizeError("class " + std::to_string(cls[k]) + " is absent from the source data");
    }
  }
  std::vector<int> position_labels;
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t idx : members[k]) {
      all.push_back(idx);
      position_labels.push_back(static_cast<int>(k));
    }
  }
  const LabeledDataset triplet = source.subset(all, SplitTag::Priv);
  // Re-index members to positions within `triplet`.
  {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      const std::size_t count = members[k].size();
      members[k].resize(count);
      for (std::size_t i = 0; i < count; ++i) members[k][i] = offset + i;
      offset += count;
    }
  }
  const NoiseSpec noise(cfg.epsilon);

  // Encoder training set: noised copies of every triplet sample.
  const auto n = static_cast<Eigen::Index>(triplet.size());
  Eigen::MatrixXd train_x(triplet.pixels().rows(), n * cfg.noisy_copies);
  std::vector<int> train_y;
  for (int copy = 0; copy < cfg.noisy_copies; ++copy) {
    const auto noised =
        protect_dataset(triplet, noise, derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(copy)}));
    for (Eigen::Index i = 0; i < n; ++i) {
      train_x.col(copy * n + i) = noised[static_cast<std::size_t>(i)].pixels();
    }
    train_y.insert(train_y.end(), position_labels.begin(), position_labels.end());
  }
  EncoderConfig ecfg = cfg.encoder;
  ecfg.seed = derive_seed(cfg.seed, {3});
  const auto encoder = train_triplet_encoder(train_x, train_y, ecfg).encoder;

  // Each private point is base-noised once; candidates post-process that.
  const auto protected_set = protect_dataset(triplet, noise, derive_seed(cfg.seed, {4}));
  const std::size_t m = cfg.cluster_points > 0 ? cfg.cluster_points : triplet.size();
  Rng rng(derive_seed(cfg.seed, {5}));

  auto sup_cluster = [&](const std::vector<std::size_t>& left,
                         const std::vector<std::size_t>& right) {
    Eigen::MatrixXd x(triplet.pixels().rows(), static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k) {
      std::size_t i, j;
      do {
        i = left[rng.below(left.size())];
        j = right[rng.below(right.size())];
      } while (i == j);
      x.col(static_cast<Eigen::Index>(k)) = sup_combine(protected_set[i], protected_set[j]).pixels();
    }
    return as_2d(embed(encoder, x));
  };
  auto rand_cluster = [&](const std::vector<std::size_t>& pool) {
    Eigen::MatrixXd x(triplet.pixels().rows(), static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t i = pool[k % pool.size()];
      x.col(static_cast<Eigen::Index>(k)) = rand_post_process(protected_set[i], rng).pixels();
    }
    return as_2d(embed(encoder, x));
  };

  std::array<Eigen::Matrix2Xd, 3> clean;
  for (std::size_t k = 0; k < 3; ++k) {
    clean[k] = as_2d(embed(encoder, triplet.pixels()(Eigen::all, members[k])));
  }
  const Eigen::Matrix2Xd target = as_2d(embed(encoder, triplet.pixels()));

  TripletRecord record;
  record.spec = spec;
  record.epsilon = cfg.epsilon;
  const Eigen::Matrix2Xd sup_designated = sup_cluster(members[sup_a], members[sup_b]);
  const Eigen::Matrix2Xd rand_designated = rand_cluster(members[rand_k]);
  for (std::size_t k = 0; k < 3; ++k) {
    record.sup_distances[k] = centroid_distance(sup_designated, clean[k]);
    record.rand_distances[k] = centroid_distance(rand_designated, clean[k]);
  }

  std::vector<std::size_t> everyone(triplet.size());
  for (std::size_t i = 0; i < everyone.size(); ++i) everyone[i] = i;
  rng.shuffle(std::span<std::size_t>(everyone));
  const Eigen::Matrix2Xd sup_all = sup_cluster(everyone, everyone);
  const Eigen::Matrix2Xd rand_all = rand_cluster(everyone);

  const Bounds bounds = joint_bounds({&target, &sup_all, &rand_all});
  const auto ht = ClusterHistogram::from_points(target, bounds, cfg.grid, cfg.smoothing);
  const auto hs = ClusterHistogram::from_points(sup_all, bounds, cfg.grid, cfg.smoothing);
  const auto hr = ClusterHistogram::from_points(rand_all, bounds, cfg.grid, cfg.smoothing);
  record.ratio = divergence_ratio(ht, hr, hs);

  record.embedding.append(clean[0], ClusterTag::ClassA);
  record.embedding.append(clean[1], ClusterTag::ClassB);
  record.embedding.append(clean[2], ClusterTag::ClassC);
  record.embedding.append(sup_designated, ClusterTag::SupCluster);
  record.embedding.append(rand_designated, ClusterTag::RandCluster);
  return record;
}

nlohmann::json to_json(const TripletRecord& r) {
  nlohmann::json j;
  j["classes"] = r.spec.classes;
  j["sup_pair"] = {r.spec.sup_pair.first, r.spec.sup_pair.second};
  j["rand_class"] = r.spec.rand_class;
  j["epsilon"] = r.epsilon;
  j["sup_distances"] = r.sup_distances;
  j["rand_distances"] = r.rand_distances;
  j["kl_target_rand"] = r.ratio.kl_target_rand;
  j["kl_target_sup"] = r.ratio.kl_target_sup;
  j["divergence_ratio"] = r.ratio.degenerate ? nlohmann::json(nullptr) : nlohmann::json(r.ratio.value);
  j["degenerate"] = r.ratio.degenerate;
  return j;
}

}  // namespace ldpx::latent
