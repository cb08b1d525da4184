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
// Command-line front end for the experiment drivers.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ldpx/errors.hpp"
#include "ldpx/experiments.hpp"

namespace {

namespace ex = ldpx::experiments;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> scale;
  std::vector<std::string> overrides;
  std::optional<int> jobs;
  bool print_config = false;
};

// Runs fn and converts any failure into "error [stage]: message" and exit 1.
int guarded(const std::string& stage, const std::function<void()>& fn) {
  try {
    fn();
    return 0;
  } catch (const ldpx::StageError& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error [" << stage << "]: " << e.what() << '\n';
  }
  return 1;
}

void report(const std::string& name, const ex::CalibrateResult& r) {
  std::cout << name << ": epsilon=" << r.report.epsilon << " mean_sidp=" << r.report.mean_sidp
            << " band=[" << r.report.band_low << ", " << r.report.band_high << "]\n";
}

void report(const std::string&, const ex::CompareResult& r) {
  for (const auto& row : r.rows) {
    std::cout << ldpx::to_string(row.mechanism) << " eps=" << row.epsilon << " sidp=" << row.sidp_mean
              << " acc_priv=" << row.acc_priv_mean << "+-" << row.acc_priv_std
              << " acc_val=" << row.acc_val_mean << "+-" << row.acc_val_std << " p="
              << (row.p_value ? std::to_string(*row.p_value) : std::string("n/a")) << '\n';
  }
}

void report(const std::string&, const ex::SweepResult& r) {
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& c : r.cells) {
    std::cout << ldpx::to_string(c.mechanism) << " priv=" << c.priv_size << " infer=" << c.infer_size
              << " acc_priv=" << c.acc_priv << '\n';
  }
  for (const auto& [m, k, spread] : r.priv_spread) {
    std::cout << ldpx::to_string(m) << " infer=" << k << " priv_spread=" << spread << '\n';
  }
}

void report(const std::string&, const std::vector<ex::TrendResult>& r) {
  for (const auto& t : r) {
    if (t.table.low_confidence) std::cerr << "warning: fewer than 3 seeds per trend point\n";
    for (const auto& row : t.table.rows) {
      std::cout << ldpx::to_string(t.mechanism) << " eps=" << row.epsilon << " acc_priv=" << row.acc_priv
                << " acc_val=" << row.acc_val << " gap=" << row.gap << '\n';
    }
  }
}

void report(const std::string&, const ex::LatentResult& r) {
  for (const auto& n : r.notes) std::cerr << "note: " << n << '\n';
  std::cout << "triplets=" << r.records.size() << " dr_above_one=" << r.dr_above_one
            << " frequency=" << r.frequency << '\n';
}

void report(const std::string&, const std::vector<std::filesystem::path>& paths) {
  for (const auto& p : paths) std::cout << p.string() << '\n';
}

template <typename Command>
int run(const std::string& name, const Flags& flags, Command command) {
  std::optional<ex::ExperimentConfig> cfg;
  if (int rc = guarded("config", [&] {
        ex::ConfigSources sources;
        if (!flags.config.empty()) sources.file = flags.config;
        sources.overrides = flags.overrides;
        if (flags.jobs) sources.overrides.push_back("jobs=" + std::to_string(*flags.jobs));
        sources.seed = flags.seed;
        if (!flags.out.empty()) sources.out = flags.out;
        sources.scale = flags.scale;
        cfg = ex::load_config(sources);
      })) {
    return rc;
  }
  if (flags.print_config) {
    std::cout << cfg->tree.dump(2) << '\n';
    return 0;
  }
  std::optional<ex::Lab> lab;
  if (int rc = guarded("setup", [&] { lab.emplace(ex::build_lab(*cfg)); })) return rc;
  return guarded(name, [&] { report(name, command(*cfg, *lab)); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ldpx: knowledge transfer from a remote classifier under local differential privacy"};
  app.require_subcommand(1);
  Flags flags;
  app.add_option("--config", flags.config, "JSON config file merged over the defaults");
  app.add_option("--seed", flags.seed, "master seed");
  app.add_option("--out", flags.out, "output directory");
  app.add_option("--scale", flags.scale, "factor applied to the sweep inference sizes");
  app.add_option("--set", flags.overrides, "override a config key, e.g. --set local.epochs=5");
  app.add_option("--jobs", flags.jobs, "worker threads (0: all cores)");
  app.add_flag("--print-config", flags.print_config, "print the resolved config and exit");

  auto* calibrate = app.add_subcommand("calibrate", "pick epsilon so that SIDP accuracy is in band");
  auto* compare = app.add_subcommand("compare", "SIDP versus Rand and Sup over repetitions");
  auto* sweep = app.add_subcommand("sweep", "accuracy over private-set and inference-set sizes");
  auto* trend = app.add_subcommand("trend", "train/validation gap over an epsilon grid");
  auto* latent = app.add_subcommand("latent", "triplet latent-space study");
  auto* render = app.add_subcommand("render-samples", "write clean and noised sample grids");
  for (auto* sub : {calibrate, compare, sweep, trend, latent, render}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  if (*calibrate) return run("calibrate", flags, ex::cmd_calibrate);
  if (*compare) return run("compare", flags, ex::cmd_compare);
  if (*sweep) return run("sweep", flags, ex::cmd_sweep);
  if (*trend) return run("trend", flags, ex::cmd_trend);
  if (*latent) return run("latent", flags, ex::cmd_latent);
  return run("render-samples", flags, ex::cmd_render_samples);
}
