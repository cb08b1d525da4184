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
#include "ldpx/transfer.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

#include "ldpx/errors.hpp"
#include "ldpx/stats.hpp"

namespace ldpx {

namespace {

constexpr std::size_t kQueryChunk = 1024;

template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

SeedTriple SeedTriple::derive(std::uint64_t master, std::uint64_t run) {
  return {derive_seed(master, {run, 1}), derive_seed(master, {run, 2}),
          derive_seed(master, {run, 3})};
}

void PipelineConfig::validate() const {
  laplace_scale(epsilon, 1.0);
  if (epsilon_post) laplace_scale(*epsilon_post, 1.0);
  if (priv_size < 2) throw SizeError("priv_size must be at least 2");
  if (infer_size < 1 || infer_size > priv_size * (priv_size - 1)) {
    throw SizeError("infer_size " + std::to_string(infer_size) + " outside [1, " +
                    std::to_string(priv_size * (priv_size - 1)) + "]");
  }
  train.validate();
}

RunReport run_pipeline(const PipelineConfig& cfg, const LabeledDataset& d_priv,
                       const LabeledDataset& d_val, LabelOracle& oracle) {
  const auto start = std::chrono::steady_clock::now();
  stage("config", [&] {
    cfg.validate();
    if (d_priv.size() != cfg.priv_size) {
      throw SizeError("D_priv has " + std::to_string(d_priv.size()) + " items, config says " +
                      std::to_string(cfg.priv_size));
    }
    if (d_val.empty()) throw SizeError("D_val is empty");
    if (static_cast<std::size_t>(d_priv.shape().size()) != oracle.input_dim()) {
      throw SizeError("D_priv images do not match the oracle input");
    }
    if (d_priv.num_classes() != oracle.num_classes()) {
      throw SizeError("D_priv class count does not match the oracle");
    }
  });

  RunReport report;
  report.config = cfg;

  auto protected_set = stage("base-noise", [&] {
    return protect_dataset(d_priv, NoiseSpec(cfg.epsilon), derive_seed(cfg.seeds.noise, {0}));
  });

  report.sidp_acc = stage("sidp", [&] {
    return sidp_accuracy(oracle, protected_set, d_priv.labels());
  });

  auto candidates = stage("candidates", [&] {
    Rng rng(derive_seed(cfg.seeds.noise, {1}));
    return build_candidate_set(std::move(protected_set), cfg.mechanism,
                               NoiseSpec(cfg.post_epsilon()), rng);
  });

  auto d_infer = stage("subset", [&] {
    Rng rng(cfg.seeds.subset);
    return select_inference_subset(candidates, cfg.infer_size, rng);
  });

  // Queried tensors are the training inputs, unchanged.
  Eigen::MatrixXd inputs(static_cast<Eigen::Index>(oracle.input_dim()),
                         static_cast<Eigen::Index>(d_infer.size()));
  std::vector<int> labels;
  labels.reserve(d_infer.size());
  stage("query", [&] {
    std::vector<ProtectedImage> batch;
    batch.reserve(kQueryChunk);
    for (std::size_t begin = 0; begin < d_infer.size(); begin += kQueryChunk) {
      const std::size_t end = std::min(d_infer.size(), begin + kQueryChunk);
      batch.clear();
      for (std::size_t k = begin; k < end; ++k) {
        batch.push_back(d_infer.materialize(k));
        inputs.col(static_cast<Eigen::Index>(k)) = batch.back().pixels();
      }
      const auto answer = oracle.query(batch);
      if (answer.size() != batch.size()) throw SizeError("oracle returned the wrong label count");
      labels.insert(labels.end(), answer.begin(), answer.end());
      report.query_count += batch.size();
    }
  });

  auto local = stage("local-train", [&] {
    std::vector<std::size_t> dims{oracle.input_dim()};
    dims.insert(dims.end(), cfg.local_hidden.begin(), cfg.local_hidden.end());
    dims.push_back(static_cast<std::size_t>(oracle.num_classes()));
    auto model = nn::init_model<double>(dims, derive_seed(cfg.seeds.model, {0}));
    nn::TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seeds.model, {1});
    return nn::train(std::move(model), inputs, std::span<const int>(labels), tc).model;
  });

  stage("evaluate", [&] {
    report.local_acc_priv = nn::accuracy(local, d_priv);
    report.local_acc_val = nn::accuracy(local, d_val);
  });

  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

CalibrationReport calibrate_epsilon(LabelOracle& oracle, const LabeledDataset& d_priv,
                                    const CalibrationOptions& options) {
  if (options.grid.empty()) throw DomainError("calibration grid is empty");
  for (std::size_t i = 1; i < options.grid.size(); ++i) {
    if (!(options.grid[i] < options.grid[i - 1])) {
      throw DomainError("calibration grid must be strictly descending");
    }
  }
  if (options.seeds < 1) throw DomainError("calibration needs at least one seed");
  if (d_priv.empty()) throw SizeError("calibration needs a non-empty D_priv");

  const double classes = d_priv.num_classes();
  const auto [low, high] = options.band.value_or(std::pair{1.5 / classes, 3.0 / classes});
  if (!(low >= 0.0 && low < high && high <= 1.0)) {
    throw DomainError("calibration band must satisfy 0 <= low < high <= 1");
  }

  CalibrationReport report;
  report.band_low = low;
  report.band_high = high;
  std::optional<std::size_t> chosen;
  for (std::size_t g = 0; g < options.grid.size(); ++g) {
    const NoiseSpec spec(options.grid[g]);
    CalibrationPoint point{options.grid[g], 0.0, {}};
    for (int s = 0; s < options.seeds; ++s) {
      // Common random numbers across the grid: seed s draws the same
      // uniforms at every epsilon.
      const auto noised =
          protect_dataset(d_priv, spec, derive_seed(options.seed, {static_cast<std::uint64_t>(s)}));
      point.per_seed.push_back(sidp_accuracy(oracle, noised, d_priv.labels()));
    }
    point.mean_sidp = stats::mean(point.per_seed);
    if (point.mean_sidp >= low && point.mean_sidp <= high) chosen = g;
    report.measured.push_back(std::move(point));
  }
  if (!chosen) {
    std::ostringstream msg;
    msg << "no epsilon puts SIDP accuracy in [" << low << ", " << high << "]; measured:";
    for (const auto& p : report.measured) msg << ' ' << p.epsilon << "->" << p.mean_sidp;
    throw CalibrationError(msg.str());
  }
  const auto& best = report.measured[*chosen];
  report.epsilon = best.epsilon;
  report.mean_sidp = best.mean_sidp;
  report.band_position = (best.mean_sidp - low) / (high - low);
  return report;
}

TrendTable generalization_trend(const PipelineConfig& base, std::span<const double> epsilons,
                                std::span<const SeedTriple> seeds, const LabeledDataset& d_priv,
                                const LabeledDataset& d_val, LabelOracle& oracle) {
  if (epsilons.size() < 3) throw DomainError("a trend needs at least 3 epsilon values");
  if (seeds.empty()) throw DomainError("a trend needs at least one seed triple");
  TrendTable table;
  table.low_confidence = seeds.size() < 3;
  for (double eps : epsilons) {
    TrendRow row;
    row.epsilon = eps;
    for (const auto& s : seeds) {
      PipelineConfig cfg = base;
      cfg.epsilon = eps;
      cfg.seeds = s;
      const auto r = run_pipeline(cfg, d_priv, d_val, oracle);
      row.sidp_acc += r.sidp_acc;
      row.acc_priv += r.local_acc_priv;
      row.acc_val += r.local_acc_val;
    }
    const double n = static_cast<double>(seeds.size());
    row.sidp_acc /= n;
    row.acc_priv /= n;
    row.acc_val /= n;
    row.gap = row.acc_priv - row.acc_val;
    row.runs = seeds.size();
    table.rows.push_back(row);
  }
  return table;
}

nlohmann::json to_json(const PipelineConfig& cfg) {
  nlohmann::json j;
  j["mechanism"] = to_string(cfg.mechanism);
  j["epsilon"] = cfg.epsilon;
  j["epsilon_post"] = cfg.post_epsilon();
  j["priv_size"] = cfg.priv_size;
  j["infer_size"] = cfg.infer_size;
  j["local_hidden"] = cfg.local_hidden;
  j["train"] = {{"learning_rate", cfg.train.learning_rate},
                {"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size}};
  j["seeds"] = {{"noise", cfg.seeds.noise}, {"subset", cfg.seeds.subset},
                {"model", cfg.seeds.model}};
  return j;
}

nlohmann::json to_json(const RunReport& report) {
  nlohmann::json j;
  j["config"] = to_json(report.config);
  j["sidp_acc"] = report.sidp_acc;
  j["acc_priv"] = report.local_acc_priv;
  j["acc_val"] = report.local_acc_val;
  j["query_count"] = report.query_count;
  j["wall_time"] = report.wall_time;
  j["p_value"] = report.p_value ? nlohmann::json(*report.p_value) : nlohmann::json(nullptr);
  return j;
}

const char* summary_csv_header() {
  return "mechanism,epsilon,priv_size,infer_size,sidp_acc,acc_priv,acc_val,p_value,seeds";
}

std::string summary_csv_row(const RunReport& r) {
  std::ostringstream row;
  row << to_string(r.config.mechanism) << ',' << r.config.epsilon << ',' << r.config.priv_size
      << ',' << r.config.infer_size << ',' << format_double(r.sidp_acc) << ','
      << format_double(r.local_acc_priv) << ',' << format_double(r.local_acc_val) << ','
      << (r.p_value ? format_double(*r.p_value) : std::string("n/a")) << ','
      << r.config.seeds.noise << ':' << r.config.seeds.subset << ':' << r.config.seeds.model;
  return row.str();
}

}  // namespace ldpx
