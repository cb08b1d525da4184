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

// Knowledge transfer from the hard-label oracle to a local model:
//
//   I.   base-noise D_priv into D_protected, expand it into the candidate
//        pool with Rand or Sup, pick D_infer at random;
//   II.  query the oracle with D_infer;
//   III. train the local model from scratch on (D_infer, oracle labels);
//   IV.  label D_priv locally and score against the truth.
//
// The oracle is also queried once with D_protected itself to record the
// single-layer (SIDP) accuracy it is compared against.

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ldpx/data.hpp"
#include "ldpx/nn.hpp"
#include "ldpx/noise.hpp"
#include "ldpx/oracle.hpp"

namespace ldpx {

struct SeedTriple {
  std::uint64_t noise = 0;
  std::uint64_t subset = 0;
  std::uint64_t model = 0;

  // Fixed counter-based expansion of a master seed.
  static SeedTriple derive(std::uint64_t master, std::uint64_t run);
  friend bool operator==(const SeedTriple&, const SeedTriple&) = default;
};

struct PipelineConfig {
  Mechanism mechanism = Mechanism::Sup;
  double epsilon = 1.0;
  std::optional<double> epsilon_post;  // Rand only; defaults to epsilon
  std::size_t priv_size = 0;
  std::size_t infer_size = 0;
  nn::TrainConfig train{};
  std::vector<std::size_t> local_hidden{64};
  SeedTriple seeds{};

  double post_epsilon() const { return epsilon_post.value_or(epsilon); }
  // Throws DomainError/SizeError for invalid combinations.
  void validate() const;
};

struct RunReport {
  PipelineConfig config;
  double sidp_acc = 0.0;
  double local_acc_priv = 0.0;
  double local_acc_val = 0.0;
  std::uint64_t query_count = 0;
  double wall_time = 0.0;
  std::optional<double> p_value;
};

// Runs stages I-IV. d_priv.size() must equal cfg.priv_size. Failures are
// rethrown as StageError naming the stage.
RunReport run_pipeline(const PipelineConfig& cfg, const LabeledDataset& d_priv,
                       const LabeledDataset& d_val, LabelOracle& oracle);

struct CalibrationOptions {
  std::vector<double> grid;  // strictly descending
  std::optional<std::pair<double, double>> band;  // default [1.5/C, 3/C]
  int seeds = 3;
  std::uint64_t seed = 0;
};

struct CalibrationPoint {
  double epsilon = 0.0;
  double mean_sidp = 0.0;
  std::vector<double> per_seed;
};

struct CalibrationReport {
  double epsilon = 0.0;
  double mean_sidp = 0.0;
  double band_low = 0.0;
  double band_high = 0.0;
  double band_position = 0.0;  // (sidp - low) / (high - low)
  std::vector<CalibrationPoint> measured;
};

// Smallest grid epsilon whose mean SIDP accuracy over `seeds` noise draws
// lies in the band. Throws CalibrationError listing the measurements when
// none does.
CalibrationReport calibrate_epsilon(LabelOracle& oracle, const LabeledDataset& d_priv,
                                    const CalibrationOptions& options);

struct TrendRow {
  double epsilon = 0.0;
  double sidp_acc = 0.0;
  double acc_priv = 0.0;
  double acc_val = 0.0;
  double gap = 0.0;  // acc_priv - acc_val
  std::size_t runs = 0;
};

struct TrendTable {
  std::vector<TrendRow> rows;
  bool low_confidence = false;  // fewer than three seeds per point
};

// Averaged accuracies per epsilon with everything else fixed.
TrendTable generalization_trend(const PipelineConfig& base, std::span<const double> epsilons,
                                std::span<const SeedTriple> seeds, const LabeledDataset& d_priv,
                                const LabeledDataset& d_val, LabelOracle& oracle);

nlohmann::json to_json(const PipelineConfig& cfg);
nlohmann::json to_json(const RunReport& report);

// Fixed summary columns shared by every command.
const char* summary_csv_header();
std::string summary_csv_row(const RunReport& report);

}  // namespace ldpx
