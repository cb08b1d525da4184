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

#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ldpx/errors.hpp"

namespace ldpx::experiments {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

class TinyLab : public ::testing::Test {
 protected:
  static json tiny_tree(const fs::path& out) {
    json tree = default_config();
    tree.merge_patch(json::parse(R"({
      "dataset": {"num_classes": 5, "per_class": 120},
      "split": {"remote_train": 300, "priv_pool": 200, "val": 100},
      "remote": {"hidden": [32], "epochs": 8},
      "local": {"hidden": [16], "epochs": 2},
      "pipeline": {"priv_size": 20, "infer_size": 200},
      "epsilons": [2.0],
      "sweep": {"priv_sizes": [10, 20], "infer_sizes": [50, 200]},
      "trend": {"epsilons": [4.0, 2.0, 1.0], "seeds": 2},
      "latent": {"per_class": 10, "steps": 40, "random_triplets": 3, "epsilon": 2.0},
      "calibration": {"grid": [1000.0, 2.0, 0.5], "band": [0.0, 1.0]},
      "render": {"count": 4},
      "repetitions": 2,
      "scale": 1.0,
      "jobs": 2
    })"));
    tree["out"] = out.string();
    return tree;
  }

  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "ldpx_experiments_test";
    fs::remove_all(root_);
    cfg_ = new ExperimentConfig(parse_config(tiny_tree(root_ / "base")));
    lab_ = new Lab(build_lab(*cfg_));
  }
  static void TearDownTestSuite() {
    delete lab_;
    delete cfg_;
    fs::remove_all(root_);
  }

  ExperimentConfig config(const std::string& out, const json& patch = json::object()) const {
    json tree = tiny_tree(root_ / out);
    tree.merge_patch(patch);
    return parse_config(tree);
  }

  static fs::path root_;
  static ExperimentConfig* cfg_;
  static Lab* lab_;
};

fs::path TinyLab::root_;
ExperimentConfig* TinyLab::cfg_ = nullptr;
Lab* TinyLab::lab_ = nullptr;

TEST(ConfigTest, DefaultsParse) {
  const auto cfg = parse_config(default_config());
  EXPECT_EQ(cfg.repetitions, 3);
  EXPECT_EQ(cfg.local_train.epochs, 15);
  EXPECT_EQ(cfg.remote.hidden, (std::vector<std::size_t>{256, 128}));
  EXPECT_EQ(cfg.local_hidden, (std::vector<std::size_t>{64}));
  EXPECT_EQ(cfg.sweep_infer_sizes, (std::vector<std::size_t>{15500, 62250, 250000}));
  EXPECT_EQ(cfg.mechanisms.size(), 2u);
  EXPECT_TRUE(cfg.dataset.synthetic);
}

TEST(ConfigTest, ScaledInferSizes) {
  auto cfg = parse_config(default_config());
  cfg.scale = 0.1;
  EXPECT_EQ(cfg.scaled_infer_sizes(), (std::vector<std::size_t>{1550, 6225, 25000}));
}

TEST(ConfigTest, PrecedenceFileThenSetThenFlags) {
  const fs::path file = fs::temp_directory_path() / "ldpx_cfg_precedence.json";
  {
    std::ofstream out(file);
    out << R"({"repetitions": 5, "master_seed": 10, "local": {"epochs": 4}, "scale": 0.5})";
  }
  ConfigSources src;
  src.file = file;
  src.overrides = {"local.epochs=7", "master_seed=11", "mechanisms=[\"sup\"]"};
  src.seed = 12;
  const auto cfg = load_config(src);
  EXPECT_EQ(cfg.repetitions, 5);
  EXPECT_EQ(cfg.local_train.epochs, 7);
  EXPECT_EQ(cfg.master_seed, 12u);
  EXPECT_EQ(cfg.scale, 0.5);
  EXPECT_EQ(cfg.mechanisms, std::vector<Mechanism>{Mechanism::Sup});
  EXPECT_EQ(cfg.tree["master_seed"], 12);
  fs::remove(file);
}

TEST(ConfigTest, Errors) {
  ConfigSources missing;
  missing.file = "/nonexistent/ldpx.json";
  EXPECT_THROW(load_config(missing), IoError);
  ConfigSources bad;
  bad.overrides = {"no_equals_sign"};
  EXPECT_THROW(load_config(bad), DomainError);
  ConfigSources reps;
  reps.overrides = {"repetitions=0"};
  EXPECT_THROW(load_config(reps), DomainError);
  ConfigSources infer;
  infer.overrides = {"pipeline.priv_size=10", "pipeline.infer_size=91"};
  EXPECT_THROW(load_config(infer), DomainError);
  ConfigSources type;
  type.overrides = {"repetitions=\"three\""};
  EXPECT_THROW(load_config(type), DomainError);
  ConfigSources mech;
  mech.overrides = {"mechanisms=[\"gauss\"]"};
  EXPECT_THROW(load_config(mech), DomainError);
  ConfigSources trend;
  trend.overrides = {"trend.seeds=0"};
  EXPECT_THROW(load_config(trend), DomainError);
  trend.overrides = {"trend.mechanisms=[]"};
  EXPECT_THROW(load_config(trend), DomainError);
}

TEST(ConfigTest, MissingDatasetPathNamesThePath) {
  ConfigSources src;
  src.overrides = {"dataset.source=idx", "dataset.images=/nonexistent/images.idx",
                   "dataset.labels=/nonexistent/labels.idx"};
  const auto cfg = load_config(src);
  try {
    build_lab(cfg);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/images.idx"), std::string::npos);
  }
}

TEST(CsvHeaderTest, GoldenHeaders) {
  EXPECT_STREQ(compare_csv_header(),
               "mechanism,epsilon,repetitions,sidp_mean,sidp_std,acc_priv_mean,acc_priv_std,"
               "acc_val_mean,acc_val_std,p_value");
  EXPECT_STREQ(sweep_csv_header(), "mechanism,epsilon,priv_size,infer_size,sidp,acc_priv,acc_val,repetitions");
  EXPECT_STREQ(trend_csv_header(), "mechanism,epsilon,sidp_acc,acc_priv,acc_val,gap,runs,low_confidence");
  EXPECT_STREQ(latent_csv_header(),
               "class_a,class_b,class_c,sup_pair,rand_class,epsilon,kl_target_rand,kl_target_sup,dr,"
               "degenerate,sup_dist_a,sup_dist_b,sup_dist_c,rand_dist_a,rand_dist_b,rand_dist_c");
}

TEST(ParallelForTest, CoversEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, 4, [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  parallel_for(0, 4, [&](std::size_t) { FAIL(); });
}

TEST(ParallelForTest, RethrowsWorkerFailure) {
  EXPECT_THROW(parallel_for(50, 3,
                            [](std::size_t i) {
                              if (i == 17) throw SizeError("boom");
                            }),
               SizeError);
}

TEST_F(TinyLab, CalibrateWritesReport) {
  const auto cfg = config("calibrate");
  const auto r = cmd_calibrate(cfg, *lab_);
  EXPECT_EQ(r.report.epsilon, 0.5);
  const auto j = json::parse(read_file(cfg.out_dir / "runs" / "calibrate.json"));
  EXPECT_EQ(j["master_seed"], cfg.master_seed);
  EXPECT_EQ(j["measured"].size(), 3u);
  EXPECT_EQ(j["config"], cfg.tree);
}

TEST_F(TinyLab, CompareRowsAndArtifacts) {
  const auto cfg = config("compare");
  const auto r = cmd_compare(cfg, *lab_);
  ASSERT_EQ(r.rows.size(), 2u);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.runs.size(), 2u);
    EXPECT_TRUE(row.p_value.has_value());
    EXPECT_EQ(row.epsilon, 2.0);
  }
  const auto table = lines_of(cfg.out_dir / "compare.csv");
  ASSERT_EQ(table.size(), 4u);
  EXPECT_EQ(table[0].rfind("# master_seed=", 0), 0u);
  EXPECT_EQ(table[1], compare_csv_header());
  const auto summary = lines_of(cfg.out_dir / "summary.csv");
  ASSERT_EQ(summary.size(), 5u);
  EXPECT_EQ(summary[0], ldpx::summary_csv_header());
  EXPECT_TRUE(fs::exists(cfg.out_dir / "runs" / "compare_sup_eps2p000_rep1.json"));
}

TEST_F(TinyLab, CompareIsReplayable) {
  const auto a = config("replay_a");
  const auto b = config("replay_b");
  cmd_compare(a, *lab_);
  cmd_compare(b, *lab_);
  auto ta = lines_of(a.out_dir / "compare.csv");
  auto tb = lines_of(b.out_dir / "compare.csv");
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 1; i < ta.size(); ++i) EXPECT_EQ(ta[i], tb[i]);
  EXPECT_EQ(lines_of(a.out_dir / "summary.csv"), lines_of(b.out_dir / "summary.csv"));
}

TEST_F(TinyLab, CompareJobCountDoesNotChangeResults) {
  const auto serial = config("serial", {{"jobs", 1}});
  const auto pooled = config("pooled", {{"jobs", 3}});
  cmd_compare(serial, *lab_);
  cmd_compare(pooled, *lab_);
  EXPECT_EQ(lines_of(serial.out_dir / "summary.csv"), lines_of(pooled.out_dir / "summary.csv"));
}

TEST_F(TinyLab, SingleRepetitionHasNoPValue) {
  const auto cfg = config("single", {{"repetitions", 1}, {"mechanisms", {"sup"}}});
  const auto r = cmd_compare(cfg, *lab_);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].acc_priv_std, 0.0);
  EXPECT_FALSE(r.rows[0].p_value.has_value());
  const auto table = lines_of(cfg.out_dir / "compare.csv");
  EXPECT_EQ(table[2].substr(table[2].rfind(',') + 1), "n/a");
}

TEST_F(TinyLab, SweepSkipsInvalidCells) {
  const auto cfg = config("sweep", {{"mechanisms", {"sup"}}, {"repetitions", 1}});
  const auto r = cmd_sweep(cfg, *lab_);
  // priv 10 allows at most 90 queries, so (10, 200) is skipped.
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("priv_size=10 infer_size=200"), std::string::npos);
  EXPECT_EQ(r.cells.size(), 3u);
  ASSERT_EQ(r.priv_spread.size(), 2u);
  EXPECT_EQ(std::get<2>(r.priv_spread[1]), 0.0);
  const auto body = read_file(cfg.out_dir / "sweep.csv");
  EXPECT_NE(body.find("# warning:"), std::string::npos);
  EXPECT_TRUE(fs::exists(cfg.out_dir / "plots" / "sweep_matrix_sup.csv"));
}

TEST_F(TinyLab, TrendHasGapColumn) {
  const auto cfg = config("trend", json::parse(R"({"trend": {"mechanisms": ["sup", "rand"], "seeds": 1}})"));
  const auto r = cmd_trend(cfg, *lab_);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[1].mechanism, Mechanism::Rand);
  ASSERT_EQ(r[0].table.rows.size(), 3u);
  EXPECT_TRUE(r[0].table.low_confidence);
  EXPECT_EQ(r[0].table.rows[0].runs, 1);
  const auto table = lines_of(cfg.out_dir / "trend.csv");
  EXPECT_EQ(table.size(), 8u);
}

TEST_F(TinyLab, LatentRandomTriplets) {
  const auto cfg = config("latent_random");
  const auto r = cmd_latent(cfg, *lab_);
  EXPECT_EQ(r.records.size(), 3u);
  EXPECT_GE(r.frequency, 0.0);
  EXPECT_LE(r.frequency, 1.0);
  EXPECT_TRUE(fs::exists(cfg.out_dir / "plots" / "latent_counts.csv"));
  EXPECT_EQ(lines_of(cfg.out_dir / "latent.csv").size(), 5u);
}

TEST_F(TinyLab, LatentDeduplicatesSpecs) {
  const auto cfg = config("latent_dup", json::parse(R"({"latent": {"triplets": [[0, 1, 2], [0, 1, 2]]}})"));
  const auto r = cmd_latent(cfg, *lab_);
  EXPECT_EQ(r.records.size(), 1u);
  ASSERT_EQ(r.notes.size(), 1u);
  EXPECT_NE(r.notes[0].find("duplicate"), std::string::npos);
}

TEST_F(TinyLab, RenderSamplesWritesGrid) {
  const auto cfg = config("render");
  const auto paths = cmd_render_samples(cfg, *lab_);
  ASSERT_EQ(paths.size(), 1u);
  EXPECT_TRUE(fs::exists(paths[0]));
  EXPECT_EQ(paths[0].filename(), "samples_eps2p000.pgm");
}

}  // namespace
}  // namespace ldpx::experiments
