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
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Runs on the default command-line configuration.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "ldpx/experiments.hpp"
#include "ldpx/latent.hpp"
#include "ldpx/nn.hpp"
#include "ldpx/noise.hpp"
#include "ldpx/stats.hpp"
#include "ldpx/transfer.hpp"

namespace {

using namespace ldpx;
namespace ex = ldpx::experiments;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, double budget_s, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  if (budget_s > 0 && secs > budget_s) {
    o.pass = false;
    o.detail += " [over time budget " + std::to_string(static_cast<int>(budget_s)) + "s]";
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %2d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string num(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

struct VecHash {
  std::size_t operator()(const std::vector<double>& v) const {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (double d : v) {
      std::uint64_t bits;
      std::memcpy(&bits, &d, sizeof(bits));
      h = mix64(h ^ bits);
    }
    return static_cast<std::size_t>(h);
  }
};

std::vector<double> key(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// Privacy-boundary audit of every pipeline run: each queried tensor must be
// the bit-exact output of the noise module under the run's seeds, and none
// may equal a clean private image.
struct BoundaryAudit {
  std::size_t runs = 0;
  std::size_t tensors = 0;
  std::size_t violations = 0;

  void check_run(const PipelineConfig& cfg, const LabeledDataset& d_priv, const RecordingOracle& rec) {
    ++runs;
    const auto& q = rec.queried();
    auto base = protect_dataset(d_priv, NoiseSpec(cfg.epsilon), derive_seed(cfg.seeds.noise, {0}));
    Rng cand_rng(derive_seed(cfg.seeds.noise, {1}));
    const auto cand = build_candidate_set(base, cfg.mechanism, NoiseSpec(cfg.post_epsilon()), cand_rng);
    Rng subset_rng(cfg.seeds.subset);
    const auto infer = select_inference_subset(cand, cfg.infer_size, subset_rng);
    if (q.size() != base.size() + infer.size()) {
      violations += 1;
      return;
    }
    std::unordered_set<std::vector<double>, VecHash> clean;
    for (Eigen::Index i = 0; i < d_priv.pixels().cols(); ++i) clean.insert(key(d_priv.pixels().col(i)));
    for (std::size_t k = 0; k < q.size(); ++k) {
      const Eigen::VectorXd expected =
          k < base.size() ? base[k].pixels() : infer.materialize(k - base.size()).pixels();
      const bool exact = q[k].size() == expected.size() &&
                         std::memcmp(q[k].data(), expected.data(), sizeof(double) * expected.size()) == 0;
      if (!exact || clean.count(key(q[k]))) ++violations;
    }
    tensors += q.size();
  }

  void check_clean_free(const LabeledDataset& d_priv, const RecordingOracle& rec) {
    std::unordered_set<std::vector<double>, VecHash> clean;
    for (Eigen::Index i = 0; i < d_priv.pixels().cols(); ++i) clean.insert(key(d_priv.pixels().col(i)));
    for (const auto& v : rec.queried()) violations += clean.count(key(v));
    tensors += rec.queried().size();
  }
};

BoundaryAudit audit;

RunReport audited_run(const PipelineConfig& cfg, const LabeledDataset& d_priv, ex::Lab& lab) {
  RecordingOracle rec(lab.oracle);
  const auto r = run_pipeline(cfg, d_priv, lab.splits.val, rec);
  audit.check_run(cfg, d_priv, rec);
  return r;
}

PipelineConfig pipeline(const ex::ExperimentConfig& cfg, Mechanism m, double eps, std::size_t priv,
                        std::size_t infer, std::uint64_t rep) {
  PipelineConfig pc;
  pc.mechanism = m;
  pc.epsilon = eps;
  pc.epsilon_post = cfg.epsilon_post;
  pc.priv_size = priv;
  pc.infer_size = infer;
  pc.train = cfg.local_train;
  pc.local_hidden = cfg.local_hidden;
  // Same derivation as the command-line drivers.
  pc.seeds = SeedTriple::derive(derive_seed(cfg.master_seed, {7}), rep);
  return pc;
}

}  // namespace

int main() {
  std::printf("ldpx acceptance suite\n");

  report(1, "Laplace sampler KS and variance", 5, [] {
    const NoiseSpec spec(2.0);
    Rng rng(20240501);
    Eigen::VectorXd z = sample_laplace(spec, rng, 100000);
    const double mean = z.mean();
    const double var = (z.array() - mean).square().sum() / (z.size() - 1);
    std::sort(z.data(), z.data() + z.size());
    double ks = 0.0;
    const double n = static_cast<double>(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double f = laplace_cdf(z[i], spec.scale());
      ks = std::max({ks, std::abs(f - i / n), std::abs((i + 1) / n - f)});
    }
    const double rel = std::abs(var - 0.5) / 0.5;
    return Outcome{ks < 0.01 && rel <= 0.05, "KS=" + num(ks) + " var=" + num(var) + " (target 0.5)"};
  });

  report(2, "density-ratio bound", 5, [] {
    bool ok = true;
    std::string detail;
    for (double eps : {1.25, 1.5, 2.0}) {
      const double scale = laplace_scale(eps, 1.0);
      double worst = 0.0;
      for (int a = 0; a < 50; ++a) {
        for (int b = 0; b < 50; ++b) {
          for (int c = 0; c < 50; ++c) {
            const double v1 = a / 49.0, v2 = b / 49.0, s = c / 49.0;
            worst = std::max(worst, laplace_pdf(s - v1, scale) / laplace_pdf(s - v2, scale));
          }
        }
      }
      ok = ok && worst <= std::exp(eps) + 1e-9;
      detail += "eps=" + num(eps, 2) + " max=" + num(worst, 6) + "/" + num(std::exp(eps), 6) + " ";
    }
    return Outcome{ok, detail};
  });

  report(3, "candidate combinatorics", 10, [] {
    bool ok = true;
    Rng rng(3);
    auto make = [&](std::size_t n) {
      std::vector<ProtectedImage> v;
      ImageTensor x{Eigen::VectorXd::Constant(4, 0.5), {2, 2, 1}};
      for (std::size_t i = 0; i < n; ++i) v.push_back(add_base_noise(x, i, NoiseSpec(1.0), rng));
      return v;
    };
    for (std::size_t n = 2; n <= 50; ++n) {
      for (Mechanism m : {Mechanism::Sup, Mechanism::Rand}) {
        const auto c = build_candidate_set(make(n), m, NoiseSpec(1.0), rng);
        ok = ok && c.size() == n * (n - 1) && c.materialize_all().size() == n * (n - 1);
      }
    }
    const auto big = build_candidate_set(make(500), Mechanism::Sup, NoiseSpec(1.0), rng);
    ok = ok && big.size() == 249500;
    return Outcome{ok, "n=2..50 both mechanisms; n=500 -> " + std::to_string(big.size())};
  });

  report(4, "gradient check", 30, [] {
    Rng rng(4);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t in = 2 + rng.below(8), out = 2 + rng.below(5);
      std::vector<std::size_t> dims{in, 2 + rng.below(10)};
      if (rng.below(2)) dims.push_back(2 + rng.below(8));
      dims.push_back(out);
      auto m = nn::init_model<double>(dims, rng());
      for (auto& layer : m.layers()) {
        for (Eigen::Index i = 0; i < layer.biases.size(); ++i) layer.biases(i) = 0.1 * rng.normal();
      }
      const int batch = 2 + static_cast<int>(rng.below(8));
      Eigen::MatrixXd x(static_cast<Eigen::Index>(in), batch);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
      std::vector<int> y(batch);
      for (auto& v : y) v = static_cast<int>(rng.below(out));
      worst = std::max(worst, nn::grad_check(m, x, std::span<const int>(y), 1e-4).max_relative_error);
    }
    return Outcome{worst < 1e-4, "max relative error " + std::to_string(worst) + " over 20 models"};
  });

  // Shared fixture for the end-to-end criteria.
  const auto t0 = Clock::now();
  const auto cfg = ex::parse_config(ex::default_config());
  auto lab = ex::build_lab(cfg);
  const auto d_priv0 = ex::priv_sample(cfg, lab, cfg.priv_size, 0);
  CalibrationOptions cal = cfg.calibration;
  cal.seed = derive_seed(cfg.master_seed, {4});
  CalibrationReport calibration;
  {
    RecordingOracle rec(lab.oracle);
    calibration = calibrate_epsilon(rec, d_priv0, cal);
    audit.check_clean_free(d_priv0, rec);
  }
  const double eps = calibration.epsilon;
  std::printf("     fixture: %d classes, remote clean acc val=%s, calibrated eps=%s (SIDP %s), setup %.1fs\n",
              lab.dataset.num_classes(), num(lab.oracle.clean_acc_val()).c_str(), num(eps, 3).c_str(),
              num(calibration.mean_sidp).c_str(),
              std::chrono::duration<double>(Clock::now() - t0).count());

  const int kSeeds = 10;
  std::vector<double> sidp, sup, rand;
  report(5, "Sup recovers accuracy over SIDP", 900, [&] {
    int wins = 0;
    for (int r = 0; r < kSeeds; ++r) {
      const auto priv = ex::priv_sample(cfg, lab, cfg.priv_size, r);
      const auto rep = audited_run(pipeline(cfg, Mechanism::Sup, eps, cfg.priv_size, cfg.infer_size, r), priv, lab);
      sidp.push_back(rep.sidp_acc);
      sup.push_back(rep.local_acc_priv);
      wins += rep.local_acc_priv - rep.sidp_acc >= 0.15;
    }
    const auto t = stats::paired_t_test(sup, sidp);
    const double p = t.p_two_sided.value_or(t.kind == stats::TTestKind::ExactShift ? 0.0 : 1.0);
    const bool in_band = calibration.mean_sidp >= 0.15 && calibration.mean_sidp <= 0.30;
    return Outcome{in_band && wins >= 9 && p < 0.05 && t.mean_difference > 0,
                   "eps=" + num(eps, 3) + " SIDP=" + num(stats::mean(sidp)) + " Sup=" + num(stats::mean(sup)) +
                       " (+15pp in " + std::to_string(wins) + "/10) p=" + num(p, 6)};
  });

  report(6, "Sup beats Rand", 900, [&] {
    for (int r = 0; r < kSeeds; ++r) {
      const auto priv = ex::priv_sample(cfg, lab, cfg.priv_size, r);
      rand.push_back(
          audited_run(pipeline(cfg, Mechanism::Rand, eps, cfg.priv_size, cfg.infer_size, r), priv, lab)
              .local_acc_priv);
    }
    const auto t = stats::paired_t_test(sup, rand);
    const double p = t.p_greater().value_or(t.mean_difference > 0 ? 0.0 : 1.0);
    return Outcome{stats::mean(sup) > stats::mean(rand) && p < 0.1,
                   "Sup=" + num(stats::mean(sup)) + " Rand=" + num(stats::mean(rand)) +
                       " one-sided p=" + num(p, 6)};
  });

  // Sensitivity grid shared by criteria 7 and 8.
  const std::vector<std::size_t> priv_sizes{100, 200, 300};
  const std::vector<std::size_t> infer_sizes{2000, 10000, 30000};
  const int reps = cfg.repetitions;
  std::vector<std::vector<double>> grid(priv_sizes.size(), std::vector<double>(infer_sizes.size(), -1.0));
  const auto sweep_start = Clock::now();
  for (std::size_t a = 0; a < priv_sizes.size(); ++a) {
    for (std::size_t b = 0; b < infer_sizes.size(); ++b) {
      const std::size_t n = priv_sizes[a], k = infer_sizes[b];
      if (k > n * (n - 1)) continue;
      double total = 0.0;
      for (int r = 0; r < reps; ++r) {
        const auto priv = ex::priv_sample(cfg, lab, n, r);
        total += audited_run(pipeline(cfg, Mechanism::Sup, eps, n, k, r), priv, lab).local_acc_priv;
      }
      grid[a][b] = total / reps;
    }
  }
  const double sweep_secs = std::chrono::duration<double>(Clock::now() - sweep_start).count();

  report(7, "accuracy grows with |D_infer|", 0, [&] {
    bool ok = true;
    std::string detail = "priv=300:";
    for (std::size_t b = 0; b < infer_sizes.size(); ++b) {
      detail += " " + std::to_string(infer_sizes[b]) + "->" + num(grid[2][b]);
      if (b > 0) ok = ok && grid[2][b] >= grid[2][b - 1] - 0.02;
    }
    return Outcome{ok, detail + " (sweep " + num(sweep_secs, 1) + "s)"};
  });

  report(8, "low sensitivity to |D_priv|", 0, [&] {
    bool ok = true;
    std::string detail;
    for (std::size_t b = 0; b < infer_sizes.size(); ++b) {
      double lo = 1.0, hi = 0.0;
      int cells = 0;
      for (std::size_t a = 0; a < priv_sizes.size(); ++a) {
        if (grid[a][b] < 0) continue;
        lo = std::min(lo, grid[a][b]);
        hi = std::max(hi, grid[a][b]);
        ++cells;
      }
      if (cells < 2) continue;
      ok = ok && hi - lo <= 0.10;
      detail += "infer=" + std::to_string(infer_sizes[b]) + " spread=" + num(hi - lo) + " over " +
                std::to_string(cells) + " sizes; ";
    }
    return Outcome{ok && grid[0][0] >= 0, detail};
  });

  report(9, "KL machinery", 5, [] {
    using namespace ldpx::latent;
    Eigen::MatrixXd p(1, 2), q(1, 2), r(1, 2);
    p << 0.5, 0.5;
    q << 0.9, 0.1;
    r << 0.7, 0.3;
    const auto hp = ClusterHistogram::from_probabilities(p, Bounds{});
    const auto hq = ClusterHistogram::from_probabilities(q, Bounds{});
    const auto hr = ClusterHistogram::from_probabilities(r, Bounds{});
    const double self = kl_divergence(hp, hp);
    const double two_bin = kl_divergence(hp, hq);
    const double hand = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
    const auto dr = divergence_ratio(hp, hr, hr);
    const bool ok = self == 0.0 && std::abs(two_bin - hand) < 1e-6 && !dr.degenerate && dr.value == 1.0;
    return Outcome{ok, "D(P||P)=" + num(self, 1) + " 2-bin=" + num(two_bin, 8) + " DR(R==S)=" + num(dr.value, 6)};
  });

  report(10, "latent divergence direction", 600, [&] {
    auto lcfg = cfg;
    lcfg.latent.epsilon = eps;
    lcfg.out_dir = std::filesystem::temp_directory_path() / "ldpx_acceptance_latent";
    const auto r = ex::cmd_latent(lcfg, lab);
    std::filesystem::remove_all(lcfg.out_dir);
    return Outcome{r.records.size() >= 20 && r.frequency > 0.5,
                   std::to_string(r.dr_above_one) + "/" + std::to_string(r.records.size()) +
                       " triplets with DR > 1 (frequency " + num(r.frequency, 3) + ")"};
  });

  report(11, "train/validation gap narrows as epsilon decreases", 0, [&] {
    const auto& grid_eps = cfg.trend_epsilons;
    std::vector<SeedTriple> seeds;
    for (int r = 0; r < cfg.trend_seeds; ++r) seeds.push_back(pipeline(cfg, Mechanism::Sup, eps, 1, 1, r).seeds);
    const auto base = pipeline(cfg, Mechanism::Sup, eps, cfg.priv_size, cfg.infer_size, 0);
    TrendTable table;
    {
      RecordingOracle rec(lab.oracle);
      table = generalization_trend(base, grid_eps, seeds, d_priv0, lab.splits.val, rec);
      audit.check_clean_free(d_priv0, rec);
    }
    const auto lo = std::min_element(table.rows.begin(), table.rows.end(),
                                     [](const TrendRow& a, const TrendRow& b) { return a.epsilon < b.epsilon; });
    const auto hi = std::max_element(table.rows.begin(), table.rows.end(),
                                     [](const TrendRow& a, const TrendRow& b) { return a.epsilon < b.epsilon; });
    std::string detail;
    for (const auto& row : table.rows) detail += "eps=" + num(row.epsilon, 2) + " gap=" + num(row.gap) + "; ";
    return Outcome{table.rows.size() >= 3 && !table.low_confidence && hi->gap >= lo->gap, detail};
  });

  report(12, "determinism and privacy boundary", 0, [&] {
    const auto priv = ex::priv_sample(cfg, lab, cfg.priv_size, 0);
    const auto pc = pipeline(cfg, Mechanism::Sup, eps, cfg.priv_size, cfg.infer_size, 0);
    const auto a = audited_run(pc, priv, lab);
    const auto b = audited_run(pc, priv, lab);
    auto strip = [](const RunReport& r) {
      auto j = to_json(r);
      j.erase("wall_time");
      return j.dump();
    };
    const bool same = strip(a) == strip(b) && a.local_acc_priv == sup[0] && a.sidp_acc == sidp[0];
    return Outcome{same && audit.violations == 0 && audit.runs > 0,
                   std::string(same ? "repeat run bit-identical" : "repeat run differs") + "; audited " +
                       std::to_string(audit.runs) + " runs, " + std::to_string(audit.tensors) +
                       " queried tensors, " + std::to_string(audit.violations) + " violations"};
  });

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
