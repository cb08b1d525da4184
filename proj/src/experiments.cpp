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
#include "ldpx/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "ldpx/errors.hpp"
#include "ldpx/noise.hpp"
#include "ldpx/stats.hpp"

namespace ldpx::experiments {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seed streams derived from the master seed.
enum Stream : std::uint64_t {
  kSplitStream = 1,
  kPrivStream = 2,
  kRemoteStream = 3,
  kCalibrationStream = 4,
  kLatentStream = 5,
  kRenderStream = 6,
  kRunStream = 7,
};

std::string fmt(double v, int digits = 6) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string mech_name(Mechanism m) { return to_string(m); }

std::string eps_tag(double eps) {
  std::string s = fmt(eps, 3);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

template <typename T>
std::vector<T> vec(const json& j, const char* key) {
  return j.at(key).get<std::vector<T>>();
}

void ensure_dirs(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir / "runs");
  fs::create_directories(cfg.out_dir / "plots");
}

json artifact_header(const ExperimentConfig& cfg, const char* command) {
  return {{"command", command}, {"master_seed", cfg.master_seed}, {"config", cfg.tree}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Per-command CSV: provenance comment line, then the fixed header.
std::ofstream open_table(const ExperimentConfig& cfg, const fs::path& path, const char* header) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# master_seed=" << cfg.master_seed << " config=" << cfg.tree.dump() << '\n';
  out << header << '\n';
  return out;
}

void append_summary(const ExperimentConfig& cfg, const std::vector<RunReport>& runs) {
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  const fs::path path = cfg.out_dir / "summary.csv";
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot write " + path.string());
  if (fresh) out << summary_csv_header() << '\n';
  for (const auto& r : runs) out << summary_csv_row(r) << '\n';
}

void write_run(const ExperimentConfig& cfg, const std::string& name, const RunReport& run) {
  json j = artifact_header(cfg, name.c_str());
  j["run"] = to_json(run);
  write_json(cfg.out_dir / "runs" / (name + ".json"), j);
}

PipelineConfig pipeline_config(const ExperimentConfig& cfg, Mechanism mechanism, double epsilon,
                               std::size_t priv_size, std::size_t infer_size, std::uint64_t rep) {
  PipelineConfig pc;
  pc.mechanism = mechanism;
  pc.epsilon = epsilon;
  pc.epsilon_post = cfg.epsilon_post;
  pc.priv_size = priv_size;
  pc.infer_size = infer_size;
  pc.train = cfg.local_train;
  pc.local_hidden = cfg.local_hidden;
  pc.seeds = SeedTriple::derive(derive_seed(cfg.master_seed, {kRunStream}), rep);
  return pc;
}

std::vector<double> resolve_epsilons(const ExperimentConfig& cfg, Lab& lab) {
  if (!cfg.epsilons.empty()) return cfg.epsilons;
  const auto d_priv = priv_sample(cfg, lab, cfg.priv_size, 0);
  CalibrationOptions opts = cfg.calibration;
  opts.seed = derive_seed(cfg.master_seed, {kCalibrationStream});
  return {calibrate_epsilon(lab.oracle, d_priv, opts).epsilon};
}

void set_path(json& tree, const std::string& dotted, json value) {
  json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot - start);
    if (key.empty()) throw DomainError("bad override key '" + dotted + "'");
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace

json default_config() {
  return json::parse(R"({
    "dataset": {
      "source": "synthetic",
      "images": "", "labels": "",
      "num_classes": 10, "per_class": 1200,
      "height": 8, "width": 8, "channels": 1,
      "modes_per_class": 3, "contrast": 0.8, "gain_spread": 0.25,
      "deformation": 0.34, "pixel_jitter": 0.17, "seed": 11
    },
    "split": {"remote_train": 8000, "priv_pool": 3000, "val": 1000},
    "remote": {"hidden": [256, 128], "learning_rate": 0.05, "epochs": 30, "batch_size": 64},
    "local": {"hidden": [64], "learning_rate": 0.05, "epochs": 15, "batch_size": 64},
    "pipeline": {"priv_size": 300, "infer_size": 30000, "epsilon_post": null},
    "epsilons": [],
    "mechanisms": ["sup", "rand"],
    "sweep": {"priv_sizes": [100, 200, 300], "infer_sizes": [15500, 62250, 250000]},
    "trend": {"mechanisms": ["sup"], "epsilons": [1.25, 2.5, 5.0], "seeds": 3},
    "calibration": {"grid": [30.0, 15.0, 10.0, 7.0, 2.0, 1.5, 1.25], "band": null, "seeds": 3},
    "latent": {
      "triplets": [], "random_triplets": 20, "per_class": 40, "epsilon": null,
      "noisy_copies": 4, "cluster_points": 0, "grid": 32, "smoothing": 1e-6,
      "hidden": [32], "margin": 1.0, "steps": 600, "batch_size": 48, "learning_rate": 0.02
    },
    "render": {"count": 8},
    "repetitions": 3,
    "master_seed": 2024,
    "scale": 0.12,
    "jobs": 0,
    "out": "results"
  })");
}

std::vector<std::size_t> ExperimentConfig::scaled_infer_sizes() const {
  std::vector<std::size_t> out;
  for (std::size_t s : sweep_infer_sizes) {
    out.push_back(std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(s * scale))));
  }
  return out;
}

ExperimentConfig parse_config(const json& tree) {
  ExperimentConfig c;
  c.tree = tree;
  try {
    const auto& d = tree.at("dataset");
    const std::string source = d.at("source").get<std::string>();
    if (source == "synthetic") {
      c.dataset.synthetic = true;
      auto& s = c.dataset.spec;
      s.num_classes = d.at("num_classes").get<int>();
      s.per_class = d.at("per_class").get<int>();
      s.shape = {d.at("height").get<int>(), d.at("width").get<int>(), d.at("channels").get<int>()};
      s.modes_per_class = d.at("modes_per_class").get<int>();
      s.contrast = d.at("contrast").get<double>();
      s.gain_spread = d.at("gain_spread").get<double>();
      s.deformation = d.at("deformation").get<double>();
      s.pixel_jitter = d.at("pixel_jitter").get<double>();
      s.seed = d.at("seed").get<std::uint64_t>();
    } else if (source == "idx") {
      c.dataset.synthetic = false;
      c.dataset.images = d.at("images").get<std::string>();
      c.dataset.labels = d.at("labels").get<std::string>();
    } else {
      throw DomainError("dataset.source must be 'synthetic' or 'idx'");
    }

    c.master_seed = tree.at("master_seed").get<std::uint64_t>();
    const auto& sp = tree.at("split");
    c.split = {sp.at("remote_train").get<std::size_t>(), sp.at("priv_pool").get<std::size_t>(),
               sp.at("val").get<std::size_t>(), derive_seed(c.master_seed, {kSplitStream})};

    const auto& r = tree.at("remote");
    c.remote.hidden = vec<std::size_t>(r, "hidden");
    c.remote.train = {r.at("learning_rate").get<double>(), r.at("epochs").get<int>(),
                      r.at("batch_size").get<int>(), derive_seed(c.master_seed, {kRemoteStream}),
                      nn::WeightInit::HeUniform};
    const auto& l = tree.at("local");
    c.local_hidden = vec<std::size_t>(l, "hidden");
    c.local_train = {l.at("learning_rate").get<double>(), l.at("epochs").get<int>(),
                     l.at("batch_size").get<int>(), 0, nn::WeightInit::HeUniform};

    const auto& p = tree.at("pipeline");
    c.priv_size = p.at("priv_size").get<std::size_t>();
    c.infer_size = p.at("infer_size").get<std::size_t>();
    if (!p.at("epsilon_post").is_null()) c.epsilon_post = p.at("epsilon_post").get<double>();

    c.epsilons = tree.at("epsilons").get<std::vector<double>>();
    for (const auto& m : tree.at("mechanisms")) c.mechanisms.push_back(parse_mechanism(m.get<std::string>()));
    c.sweep_priv_sizes = vec<std::size_t>(tree.at("sweep"), "priv_sizes");
    c.sweep_infer_sizes = vec<std::size_t>(tree.at("sweep"), "infer_sizes");
    const auto& tr = tree.at("trend");
    c.trend_epsilons = vec<double>(tr, "epsilons");
    for (const auto& m : tr.at("mechanisms")) c.trend_mechanisms.push_back(parse_mechanism(m.get<std::string>()));
    c.trend_seeds = tr.at("seeds").get<int>();

    const auto& cal = tree.at("calibration");
    c.calibration.grid = vec<double>(cal, "grid");
    c.calibration.seeds = cal.at("seeds").get<int>();
    if (!cal.at("band").is_null()) {
      const auto band = cal.at("band").get<std::vector<double>>();
      if (band.size() != 2) throw DomainError("calibration.band must be [low, high]");
      c.calibration.band = std::pair{band[0], band[1]};
    }

    const auto& lt = tree.at("latent");
    for (const auto& t : lt.at("triplets")) {
      const auto v = t.get<std::vector<int>>();
      if (v.size() != 3) throw DomainError("each latent triplet needs 3 classes");
      c.latent.triplets.push_back(latent::TripletSpec::of(v[0], v[1], v[2]));
    }
    c.latent.random_triplets = lt.at("random_triplets").get<int>();
    c.latent.per_class = lt.at("per_class").get<std::size_t>();
    if (!lt.at("epsilon").is_null()) c.latent.epsilon = lt.at("epsilon").get<double>();
    auto& st = c.latent.study;
    st.noisy_copies = lt.at("noisy_copies").get<int>();
    st.cluster_points = lt.at("cluster_points").get<std::size_t>();
    st.grid = lt.at("grid").get<int>();
    st.smoothing = lt.at("smoothing").get<double>();
    st.encoder.hidden = vec<std::size_t>(lt, "hidden");
    st.encoder.margin = lt.at("margin").get<double>();
    st.encoder.steps = lt.at("steps").get<int>();
    st.encoder.batch_size = lt.at("batch_size").get<int>();
    st.encoder.learning_rate = lt.at("learning_rate").get<double>();

    c.render_count = tree.at("render").at("count").get<std::size_t>();
    c.repetitions = tree.at("repetitions").get<int>();
    c.scale = tree.at("scale").get<double>();
    c.jobs = tree.at("jobs").get<int>();
    c.out_dir = tree.at("out").get<std::string>();
  } catch (const json::exception& e) {
    throw DomainError(std::string("config: ") + e.what());
  }

  if (c.repetitions < 1) throw DomainError("repetitions must be >= 1");
  if (!(c.scale > 0.0)) throw DomainError("scale must be positive");
  if (c.mechanisms.empty()) throw DomainError("at least one mechanism is required");
  if (c.trend_mechanisms.empty()) throw DomainError("trend needs at least one mechanism");
  if (c.trend_seeds < 1) throw DomainError("trend.seeds must be >= 1");
  if (c.priv_size < 2 || c.infer_size < 1 || c.infer_size > c.priv_size * (c.priv_size - 1)) {
    throw DomainError("pipeline.infer_size must lie in [1, priv_size * (priv_size - 1)]");
  }
  for (double e : c.epsilons) laplace_scale(e, 1.0);
  c.local_train.validate();
  c.remote.train.validate();
  return c;
}

ExperimentConfig load_config(const ConfigSources& sources) {
  json tree = default_config();
  if (sources.file) {
    std::ifstream in(*sources.file);
    if (!in) throw IoError("cannot open config " + sources.file->string());
    json file_tree;
    try {
      file_tree = json::parse(in);
    } catch (const json::exception& e) {
      throw DomainError("config " + sources.file->string() + ": " + e.what());
    }
    tree.merge_patch(file_tree);
  }
  for (const auto& o : sources.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw DomainError("override '" + o + "' needs key=value");
    const std::string raw = o.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    set_path(tree, o.substr(0, eq), std::move(value));
  }
  if (sources.seed) tree["master_seed"] = *sources.seed;
  if (sources.out) tree["out"] = sources.out->string();
  if (sources.scale) tree["scale"] = *sources.scale;
  return parse_config(tree);
}

Lab build_lab(const ExperimentConfig& cfg) {
  LabeledDataset data = cfg.dataset.synthetic
                            ? make_synthetic(cfg.dataset.spec)
                            : load_idx(cfg.dataset.images, cfg.dataset.labels);
  DatasetSplits splits = split(data, cfg.split);
  RemoteOracle oracle = fit_remote(splits.remote_train, cfg.remote);
  oracle.record_reference(splits.priv_pool, splits.val);
  return Lab{std::move(data), std::move(splits), std::move(oracle)};
}

LabeledDataset priv_sample(const ExperimentConfig& cfg, const Lab& lab, std::size_t priv_size,
                           std::uint64_t rep) {
  return sample_balanced_priv(lab.splits.priv_pool, priv_size,
                              derive_seed(cfg.master_seed, {kPrivStream, priv_size, rep}));
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  std::size_t workers = jobs > 0 ? static_cast<std::size_t>(jobs)
                                 : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (!failed.load()) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          failed.store(true);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

const char* compare_csv_header() {
  return "mechanism,epsilon,repetitions,sidp_mean,sidp_std,acc_priv_mean,acc_priv_std,"
         "acc_val_mean,acc_val_std,p_value";
}

const char* sweep_csv_header() {
  return "mechanism,epsilon,priv_size,infer_size,sidp,acc_priv,acc_val,repetitions";
}

const char* trend_csv_header() {
  return "mechanism,epsilon,sidp_acc,acc_priv,acc_val,gap,runs,low_confidence";
}

const char* latent_csv_header() {
  return "class_a,class_b,class_c,sup_pair,rand_class,epsilon,kl_target_rand,kl_target_sup,dr,"
         "degenerate,sup_dist_a,sup_dist_b,sup_dist_c,rand_dist_a,rand_dist_b,rand_dist_c";
}

CalibrateResult cmd_calibrate(const ExperimentConfig& cfg, Lab& lab) {
  ensure_dirs(cfg);
  const auto d_priv = priv_sample(cfg, lab, cfg.priv_size, 0);
  CalibrationOptions opts = cfg.calibration;
  opts.seed = derive_seed(cfg.master_seed, {kCalibrationStream});
  CalibrateResult result{calibrate_epsilon(lab.oracle, d_priv, opts)};

  const auto& r = result.report;
  json j = artifact_header(cfg, "calibrate");
  j["epsilon"] = r.epsilon;
  j["mean_sidp"] = r.mean_sidp;
  j["band"] = {r.band_low, r.band_high};
  j["band_position"] = r.band_position;
  j["clean_acc_priv"] = lab.oracle.clean_acc_priv();
  j["clean_acc_val"] = lab.oracle.clean_acc_val();
  json measured = json::array();
  for (const auto& p : r.measured) {
    measured.push_back({{"epsilon", p.epsilon}, {"mean_sidp", p.mean_sidp}, {"per_seed", p.per_seed}});
  }
  j["measured"] = measured;
  write_json(cfg.out_dir / "runs" / "calibrate.json", j);
  return result;
}

CompareResult cmd_compare(const ExperimentConfig& cfg, Lab& lab) {
  ensure_dirs(cfg);
  const auto epsilons = resolve_epsilons(cfg, lab);
  const auto reps = static_cast<std::size_t>(cfg.repetitions);
  std::vector<LabeledDataset> privs;
  for (std::size_t r = 0; r < reps; ++r) privs.push_back(priv_sample(cfg, lab, cfg.priv_size, r));

  struct Job {
    Mechanism mechanism;
    double epsilon;
    std::size_t rep;
  };
  std::vector<Job> jobs;
  for (double eps : epsilons) {
    for (Mechanism m : cfg.mechanisms) {
      for (std::size_t r = 0; r < reps; ++r) jobs.push_back({m, eps, r});
    }
  }
  std::vector<RunReport> runs(jobs.size());
  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t i) {
    const auto& job = jobs[i];
    runs[i] = run_pipeline(
        pipeline_config(cfg, job.mechanism, job.epsilon, cfg.priv_size, cfg.infer_size, job.rep),
        privs[job.rep], lab.splits.val, lab.oracle);
  });

  CompareResult result;
  for (std::size_t start = 0; start < runs.size(); start += reps) {
    CompareRow row;
    row.mechanism = jobs[start].mechanism;
    row.epsilon = jobs[start].epsilon;
    row.repetitions = cfg.repetitions;
    row.runs.assign(runs.begin() + start, runs.begin() + start + reps);
    std::vector<double> sidp, priv, val;
    for (const auto& r : row.runs) {
      sidp.push_back(r.sidp_acc);
      priv.push_back(r.local_acc_priv);
      val.push_back(r.local_acc_val);
    }
    row.sidp_mean = stats::mean(sidp);
    row.acc_priv_mean = stats::mean(priv);
    row.acc_val_mean = stats::mean(val);
    if (reps >= 2) {
      row.sidp_std = stats::stddev(sidp);
      row.acc_priv_std = stats::stddev(priv);
      row.acc_val_std = stats::stddev(val);
      row.p_value = stats::paired_t_test(priv, sidp).p_two_sided;
      for (auto& r : row.runs) r.p_value = row.p_value;
    }
    result.rows.push_back(std::move(row));
  }

  auto table = open_table(cfg, cfg.out_dir / "compare.csv", compare_csv_header());
  std::vector<RunReport> all;
  for (const auto& row : result.rows) {
    table << to_string(row.mechanism) << ',' << fmt(row.epsilon, 4) << ',' << row.repetitions << ','
          << fmt(row.sidp_mean) << ',' << fmt(row.sidp_std) << ',' << fmt(row.acc_priv_mean) << ','
          << fmt(row.acc_priv_std) << ',' << fmt(row.acc_val_mean) << ',' << fmt(row.acc_val_std)
          << ',' << (row.p_value ? fmt(*row.p_value, 8) : std::string("n/a")) << '\n';
    for (std::size_t r = 0; r < row.runs.size(); ++r) {
      write_run(cfg,
                "compare_" + mech_name(row.mechanism) + "_eps" + eps_tag(row.epsilon) + "_rep" +
                    std::to_string(r),
                row.runs[r]);
      all.push_back(row.runs[r]);
    }
  }
  append_summary(cfg, all);
  return result;
}

SweepResult cmd_sweep(const ExperimentConfig& cfg, Lab& lab) {
  ensure_dirs(cfg);
  if (cfg.sweep_priv_sizes.empty() || cfg.sweep_infer_sizes.empty()) {
    throw DomainError("sweep grids must be non-empty");
  }
  SweepResult result;
  result.epsilon = resolve_epsilons(cfg, lab).front();
  const auto infer_sizes = cfg.scaled_infer_sizes();
  const auto reps = static_cast<std::size_t>(cfg.repetitions);

  std::map<std::pair<std::size_t, std::size_t>, LabeledDataset> privs;
  struct Job {
    std::size_t priv_size, infer_size;
    Mechanism mechanism;
    std::size_t rep;
  };
  std::vector<Job> jobs;
  for (std::size_t n : cfg.sweep_priv_sizes) {
    for (std::size_t k : infer_sizes) {
      if (n < 2 || k > n * (n - 1)) {
        result.warnings.push_back("skipped cell priv_size=" + std::to_string(n) +
                                  " infer_size=" + std::to_string(k) +
                                  ": infer_size exceeds priv_size*(priv_size-1)");
        continue;
      }
      for (Mechanism m : cfg.mechanisms) {
        for (std::size_t r = 0; r < reps; ++r) {
          if (!privs.count({n, r})) privs.emplace(std::pair{n, r}, priv_sample(cfg, lab, n, r));
          jobs.push_back({n, k, m, r});
        }
      }
    }
  }
  std::vector<RunReport> runs(jobs.size());
  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t i) {
    const auto& job = jobs[i];
    runs[i] = run_pipeline(
        pipeline_config(cfg, job.mechanism, result.epsilon, job.priv_size, job.infer_size, job.rep),
        privs.at({job.priv_size, job.rep}), lab.splits.val, lab.oracle);
  });

  for (std::size_t start = 0; start < runs.size(); start += reps) {
    SweepCell cell;
    cell.priv_size = jobs[start].priv_size;
    cell.infer_size = jobs[start].infer_size;
    cell.mechanism = jobs[start].mechanism;
    cell.runs.assign(runs.begin() + start, runs.begin() + start + reps);
    for (const auto& r : cell.runs) {
      cell.sidp += r.sidp_acc / reps;
      cell.acc_priv += r.local_acc_priv / reps;
      cell.acc_val += r.local_acc_val / reps;
    }
    result.cells.push_back(std::move(cell));
  }

  for (Mechanism m : cfg.mechanisms) {
    for (std::size_t k : infer_sizes) {
      double lo = 1.0, hi = 0.0;
      int seen = 0;
      for (const auto& c : result.cells) {
        if (c.mechanism != m || c.infer_size != k) continue;
        lo = std::min(lo, c.acc_priv);
        hi = std::max(hi, c.acc_priv);
        ++seen;
      }
      if (seen > 0) result.priv_spread.emplace_back(m, k, hi - lo);
    }
  }

  auto table = open_table(cfg, cfg.out_dir / "sweep.csv", sweep_csv_header());
  std::vector<RunReport> all;
  for (const auto& c : result.cells) {
    table << to_string(c.mechanism) << ',' << fmt(result.epsilon, 4) << ',' << c.priv_size << ','
          << c.infer_size << ',' << fmt(c.sidp) << ',' << fmt(c.acc_priv) << ',' << fmt(c.acc_val)
          << ',' << c.runs.size() << '\n';
    for (std::size_t r = 0; r < c.runs.size(); ++r) {
      write_run(cfg,
                "sweep_" + mech_name(c.mechanism) + "_n" + std::to_string(c.priv_size) + "_k" +
                    std::to_string(c.infer_size) + "_rep" + std::to_string(r),
                c.runs[r]);
      all.push_back(c.runs[r]);
    }
  }
  for (const auto& w : result.warnings) table << "# warning: " << w << '\n';

  // Table-shaped matrix per mechanism: rows priv sizes, columns infer sizes.
  for (Mechanism m : cfg.mechanisms) {
    std::ofstream matrix(cfg.out_dir / "plots" / ("sweep_matrix_" + mech_name(m) + ".csv"));
    matrix << "priv_size";
    for (std::size_t k : infer_sizes) matrix << ",infer_" << k;
    matrix << '\n';
    for (std::size_t n : cfg.sweep_priv_sizes) {
      matrix << n;
      for (std::size_t k : infer_sizes) {
        matrix << ',';
        for (const auto& c : result.cells) {
          if (c.mechanism == m && c.priv_size == n && c.infer_size == k) matrix << fmt(c.acc_priv);
        }
      }
      matrix << '\n';
    }
  }

  json j = artifact_header(cfg, "sweep");
  j["epsilon"] = result.epsilon;
  j["warnings"] = result.warnings;
  json spread = json::array();
  for (const auto& [m, k, s] : result.priv_spread) {
    spread.push_back({{"mechanism", to_string(m)}, {"infer_size", k}, {"max_spread", s}});
  }
  j["priv_spread"] = spread;
  write_json(cfg.out_dir / "runs" / "sweep.json", j);
  append_summary(cfg, all);
  return result;
}

std::vector<TrendResult> cmd_trend(const ExperimentConfig& cfg, Lab& lab) {
  ensure_dirs(cfg);
  const auto d_priv = priv_sample(cfg, lab, cfg.priv_size, 0);
  const std::uint64_t run_master = derive_seed(cfg.master_seed, {kRunStream});
  std::vector<SeedTriple> seeds;
  for (int r = 0; r < cfg.trend_seeds; ++r) seeds.push_back(SeedTriple::derive(run_master, r));

  const auto& mechanisms = cfg.trend_mechanisms;
  std::vector<TrendResult> results(mechanisms.size());
  parallel_for(mechanisms.size(), cfg.jobs, [&](std::size_t i) {
    const PipelineConfig base =
        pipeline_config(cfg, mechanisms[i], 1.0, cfg.priv_size, cfg.infer_size, 0);
    results[i] = {mechanisms[i], generalization_trend(base, cfg.trend_epsilons, seeds, d_priv,
                                                          lab.splits.val, lab.oracle)};
  });

  auto table = open_table(cfg, cfg.out_dir / "trend.csv", trend_csv_header());
  json j = artifact_header(cfg, "trend");
  json rows = json::array();
  for (const auto& t : results) {
    for (const auto& r : t.table.rows) {
      table << to_string(t.mechanism) << ',' << fmt(r.epsilon, 4) << ',' << fmt(r.sidp_acc) << ','
            << fmt(r.acc_priv) << ',' << fmt(r.acc_val) << ',' << fmt(r.gap) << ',' << r.runs << ','
            << (t.table.low_confidence ? "true" : "false") << '\n';
      rows.push_back({{"mechanism", to_string(t.mechanism)},
                      {"epsilon", r.epsilon},
                      {"sidp_acc", r.sidp_acc},
                      {"acc_priv", r.acc_priv},
                      {"acc_val", r.acc_val},
                      {"gap", r.gap},
                      {"runs", r.runs}});
    }
  }
  j["rows"] = rows;
  write_json(cfg.out_dir / "runs" / "trend.json", j);
  return results;
}

LatentResult cmd_latent(const ExperimentConfig& cfg, Lab& lab) {
  ensure_dirs(cfg);
  const int num_classes = lab.splits.priv_pool.num_classes();
  if (num_classes < 3) throw DomainError("latent study needs at least 3 classes");
  LatentResult result;

  std::vector<latent::TripletSpec> specs;
  std::set<std::array<int, 5>> seen;
  auto key = [](const latent::TripletSpec& t) {
    return std::array<int, 5>{t.classes[0], t.classes[1], t.classes[2], t.sup_pair.first,
                              t.sup_pair.second * 1000 + t.rand_class};
  };
  for (const auto& t : cfg.latent.triplets) {
    if (!seen.insert(key(t)).second) {
      result.notes.push_back("duplicate triplet (" + std::to_string(t.classes[0]) + "," +
                             std::to_string(t.classes[1]) + "," + std::to_string(t.classes[2]) +
                             ") ignored");
      continue;
    }
    specs.push_back(t);
  }
  if (specs.empty()) {
    if (cfg.latent.random_triplets < 1) throw DomainError("latent study needs at least one triplet");
    Rng rng(derive_seed(cfg.master_seed, {kLatentStream, 0}));
    std::vector<int> classes(num_classes);
    for (int c = 0; c < num_classes; ++c) classes[c] = c;
    // Distinct class sets; at most C choose 3 of them exist.
    const auto n = static_cast<std::size_t>(num_classes);
    const std::size_t available = n * (n - 1) * (n - 2) / 6;
    const auto wanted = std::min<std::size_t>(cfg.latent.random_triplets, available);
    if (wanted < static_cast<std::size_t>(cfg.latent.random_triplets)) {
      result.notes.push_back("only " + std::to_string(available) + " distinct triplets exist");
    }
    std::set<std::array<int, 3>> sets;
    while (specs.size() < wanted) {
      rng.shuffle(std::span<int>(classes));
      std::array<int, 3> set{classes[0], classes[1], classes[2]};
      std::sort(set.begin(), set.end());
      if (sets.insert(set).second) specs.push_back(latent::TripletSpec::of(classes[0], classes[1], classes[2]));
    }
  }

  double epsilon = 0.0;
  if (cfg.latent.epsilon) {
    epsilon = *cfg.latent.epsilon;
  } else {
    epsilon = resolve_epsilons(cfg, lab).front();
  }
  const std::size_t per_class_pool = cfg.latent.per_class * static_cast<std::size_t>(num_classes);
  const auto source = priv_sample(cfg, lab, std::min(per_class_pool, lab.splits.priv_pool.size() /
                                                                         num_classes * num_classes),
                                  0);

  result.records.resize(specs.size());
  parallel_for(specs.size(), cfg.jobs, [&](std::size_t i) {
    latent::TripletStudyConfig study = cfg.latent.study;
    study.epsilon = epsilon;
    study.seed = derive_seed(cfg.master_seed, {kLatentStream, 1, i});
    result.records[i] = latent::triplet_study(source, specs[i], study);
  });

  for (const auto& r : result.records) {
    if (!r.ratio.degenerate && r.ratio.value > 1.0) ++result.dr_above_one;
  }
  result.frequency = result.records.empty()
                         ? 0.0
                         : static_cast<double>(result.dr_above_one) / result.records.size();

  auto table = open_table(cfg, cfg.out_dir / "latent.csv", latent_csv_header());
  json j = artifact_header(cfg, "latent");
  json records = json::array();
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const auto& r = result.records[i];
    const auto& s = r.spec;
    table << s.classes[0] << ',' << s.classes[1] << ',' << s.classes[2] << ',' << s.sup_pair.first << '+'
          << s.sup_pair.second << ',' << s.rand_class << ',' << fmt(r.epsilon, 4) << ','
          << fmt(r.ratio.kl_target_rand) << ',' << fmt(r.ratio.kl_target_sup) << ','
          << fmt(r.ratio.value) << ',' << (r.ratio.degenerate ? "true" : "false");
    for (double d : r.sup_distances) table << ',' << fmt(d);
    for (double d : r.rand_distances) table << ',' << fmt(d);
    table << '\n';
    records.push_back(latent::to_json(r));

    std::ofstream pts(cfg.out_dir / "plots" /
                      ("latent_" + std::to_string(s.classes[0]) + "_" + std::to_string(s.classes[1]) +
                       "_" + std::to_string(s.classes[2]) + ".csv"));
    pts << "x,y,cluster\n";
    for (Eigen::Index p = 0; p < r.embedding.points.cols(); ++p) {
      pts << fmt(r.embedding.points(0, p)) << ',' << fmt(r.embedding.points(1, p)) << ','
          << latent::to_string(r.embedding.tags[p]) << '\n';
    }
  }
  j["records"] = records;
  j["epsilon"] = epsilon;
  j["triplets"] = result.records.size();
  j["dr_above_one"] = result.dr_above_one;
  j["frequency"] = result.frequency;
  j["notes"] = result.notes;
  write_json(cfg.out_dir / "runs" / "latent.json", j);

  std::ofstream counts(cfg.out_dir / "plots" / "latent_counts.csv");
  counts << "triplets,dr_above_one,frequency\n"
         << result.records.size() << ',' << result.dr_above_one << ',' << fmt(result.frequency) << '\n';
  return result;
}

std::vector<fs::path> cmd_render_samples(const ExperimentConfig& cfg, Lab& lab) {
  ensure_dirs(cfg);
  const auto epsilons = resolve_epsilons(cfg, lab);
  const int num_classes = lab.splits.priv_pool.num_classes();
  const std::size_t count = std::max<std::size_t>(2, cfg.render_count);
  const std::size_t n = std::max<std::size_t>(num_classes, (count + num_classes - 1) / num_classes * num_classes);
  const auto d_priv = priv_sample(cfg, lab, n, 0);
  const auto shape = d_priv.shape();

  std::vector<fs::path> written;
  for (double eps : epsilons) {
    const NoiseSpec spec(eps);
    const std::uint64_t seed = derive_seed(cfg.master_seed, {kRenderStream});
    const auto base = protect_dataset(d_priv, spec, derive_seed(seed, {0}));
    std::vector<Eigen::VectorXd> tiles;
    for (std::size_t i = 0; i < count; ++i) tiles.push_back(d_priv.image(i).pixels);
    for (std::size_t i = 0; i < count; ++i) tiles.push_back(base[i].pixels());
    Rng rand_rng(derive_seed(seed, {1}));
    for (std::size_t i = 0; i < count; ++i) {
      tiles.push_back(rand_post_process(base[i], spec, rand_rng).pixels());
    }
    for (std::size_t i = 0; i < count; ++i) {
      tiles.push_back(sup_combine(base[i], base[(i + 1) % count]).pixels());
    }
    const fs::path path = cfg.out_dir / "plots" / ("samples_eps" + eps_tag(eps) + ".pgm");
    write_pgm_grid(path, tiles, shape, static_cast<int>(count));
    written.push_back(path);
  }
  json j = artifact_header(cfg, "render-samples");
  json paths = json::array();
  for (const auto& p : written) paths.push_back(p.string());
  j["files"] = paths;
  j["epsilons"] = epsilons;
  write_json(cfg.out_dir / "runs" / "render_samples.json", j);
  return written;
}

}  // namespace ldpx::experiments
