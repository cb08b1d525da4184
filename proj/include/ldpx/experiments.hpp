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

// Experiment drivers behind the `ldpx` command line: configuration
// handling, shared lab setup (data, splits, remote model), one function per
// subcommand, and result persistence.
//
// Output layout under the configured directory:
//   summary.csv      one row per pipeline run, appended across commands
//   runs/*.json      one object per run or command, with config + seed
//   <command>.csv    per-command tables
//   plots/*.csv      point data for external plotting
//   plots/*.pgm      rendered sample grids

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ldpx/data.hpp"
#include "ldpx/latent.hpp"
#include "ldpx/oracle.hpp"
#include "ldpx/transfer.hpp"

namespace ldpx::experiments {

// The full default configuration tree. Every key is documented in the
// README; files and --set overrides are merged on top of it.
nlohmann::json default_config();

struct DatasetSource {
  bool synthetic = true;
  SyntheticSpec spec{};
  std::filesystem::path images;
  std::filesystem::path labels;
};

struct LatentOptions {
  std::vector<latent::TripletSpec> triplets;
  int random_triplets = 20;
  std::size_t per_class = 40;
  std::optional<double> epsilon;
  latent::TripletStudyConfig study{};
};

struct ExperimentConfig {
  nlohmann::json tree;  // resolved tree, echoed into every artifact
  DatasetSource dataset;
  SplitPlan split;
  RemoteConfig remote;
  nn::TrainConfig local_train;
  std::vector<std::size_t> local_hidden;
  std::size_t priv_size = 0;
  std::size_t infer_size = 0;
  std::optional<double> epsilon_post;
  std::vector<double> epsilons;  // empty: calibrate first
  std::vector<Mechanism> mechanisms;
  std::vector<std::size_t> sweep_priv_sizes;
  std::vector<std::size_t> sweep_infer_sizes;  // before scaling
  std::vector<double> trend_epsilons;
  std::vector<Mechanism> trend_mechanisms;
  int trend_seeds = 3;
  CalibrationOptions calibration;
  LatentOptions latent;
  std::size_t render_count = 8;
  int repetitions = 3;
  std::uint64_t master_seed = 0;
  double scale = 1.0;
  int jobs = 0;  // 0: hardware concurrency
  std::filesystem::path out_dir;

  std::vector<std::size_t> scaled_infer_sizes() const;
};

// Parses and validates a resolved tree. Throws DomainError on bad values.
ExperimentConfig parse_config(const nlohmann::json& tree);

struct ConfigSources {
  std::optional<std::filesystem::path> file;
  std::vector<std::string> overrides;  // "a.b.c=value", value parsed as JSON when possible
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<double> scale;
};

// defaults <- file <- --set overrides <- named flags.
ExperimentConfig load_config(const ConfigSources& sources);

// Data, splits and the trained remote oracle shared by every command.
struct Lab {
  LabeledDataset dataset;
  DatasetSplits splits;
  RemoteOracle oracle;
};

Lab build_lab(const ExperimentConfig& cfg);

// D_priv for repetition `rep`.
LabeledDataset priv_sample(const ExperimentConfig& cfg, const Lab& lab, std::size_t priv_size,
                           std::uint64_t rep);

// Runs fn(0..count-1) on a small worker pool; results must be written by
// index. The first exception is rethrown after all workers stop.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

struct CalibrateResult {
  CalibrationReport report;
};
CalibrateResult cmd_calibrate(const ExperimentConfig& cfg, Lab& lab);

struct CompareRow {
  Mechanism mechanism = Mechanism::Sup;
  double epsilon = 0.0;
  int repetitions = 0;
  double sidp_mean = 0.0, sidp_std = 0.0;
  double acc_priv_mean = 0.0, acc_priv_std = 0.0;
  double acc_val_mean = 0.0, acc_val_std = 0.0;
  std::optional<double> p_value;  // paired t, local acc_priv vs SIDP
  std::vector<RunReport> runs;
};
struct CompareResult {
  std::vector<CompareRow> rows;
};
CompareResult cmd_compare(const ExperimentConfig& cfg, Lab& lab);

struct SweepCell {
  std::size_t priv_size = 0;
  std::size_t infer_size = 0;
  Mechanism mechanism = Mechanism::Sup;
  double sidp = 0.0;
  double acc_priv = 0.0;
  double acc_val = 0.0;
  std::vector<RunReport> runs;
};
struct SweepResult {
  double epsilon = 0.0;
  std::vector<SweepCell> cells;
  std::vector<std::string> warnings;  // skipped cells
  // Per (mechanism, infer_size): max - min accuracy across priv sizes.
  std::vector<std::tuple<Mechanism, std::size_t, double>> priv_spread;
};
SweepResult cmd_sweep(const ExperimentConfig& cfg, Lab& lab);

struct TrendResult {
  Mechanism mechanism = Mechanism::Sup;
  TrendTable table;
};
std::vector<TrendResult> cmd_trend(const ExperimentConfig& cfg, Lab& lab);

struct LatentResult {
  std::vector<latent::TripletRecord> records;
  std::size_t dr_above_one = 0;
  double frequency = 0.0;
  std::vector<std::string> notes;
};
LatentResult cmd_latent(const ExperimentConfig& cfg, Lab& lab);

// Writes plots/samples_eps<e>.pgm: rows of clean, base-noised, Rand and Sup
// versions of the first D_priv images. Returns the written paths.
std::vector<std::filesystem::path> cmd_render_samples(const ExperimentConfig& cfg, Lab& lab);

// Fixed CSV headers of the per-command tables.
const char* compare_csv_header();
const char* sweep_csv_header();
const char* trend_csv_header();
const char* latent_csv_header();

}  // namespace ldpx::experiments
