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
#include "ldpx/oracle.hpp"

#include <gtest/gtest.h>

#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "ldpx/errors.hpp"
#include "ldpx/stats.hpp"
#include "small_lab.hpp"

namespace ldpx {
namespace {

using ldpx::testing::small_lab;

std::vector<ProtectedImage> noised(const LabeledDataset& d, double eps, std::uint64_t seed) {
  return protect_dataset(d, NoiseSpec(eps), seed);
}

// The query interface returns labels and nothing else.
static_assert(std::is_same_v<decltype(std::declval<LabelOracle&>().query(
                                 std::declval<std::span<const ProtectedImage>>())),
                             std::vector<int>>);

TEST(RemoteOracleTest, CleanValidationAccuracy) {
  auto& lab = small_lab();
  EXPECT_GE(lab.oracle.clean_acc_val(), 0.90);
  EXPECT_GE(lab.oracle.clean_acc_priv(), 0.90);
  EXPECT_EQ(lab.oracle.num_classes(), 5);
  EXPECT_EQ(lab.oracle.input_dim(), 64u);
}

TEST(RemoteOracleTest, DeterministicFit) {
  auto& lab = small_lab();
  const auto again = fit_remote(lab.splits.remote_train, ldpx::testing::small_remote());
  EXPECT_EQ(again.reference_accuracy(lab.splits.val), lab.oracle.reference_accuracy(lab.splits.val));
}

TEST(RemoteOracleTest, EmptySplit) {
  EXPECT_THROW(fit_remote(LabeledDataset(), ldpx::testing::small_remote()), SizeError);
}

TEST(RemoteOracleTest, CountsQueries) {
  auto& lab = small_lab();
  const auto batch = noised(lab.splits.val.subset(std::vector<std::size_t>(64, 0), SplitTag::Priv), 2.0, 1);
  const auto before = lab.oracle.query_count();
  const auto labels = lab.oracle.query(batch);
  EXPECT_EQ(labels.size(), 64u);
  EXPECT_EQ(lab.oracle.query_count(), before + 64);
  EXPECT_EQ(lab.oracle.query(batch), labels);
  EXPECT_EQ(lab.oracle.query_count(), before + 128);
}

TEST(RemoteOracleTest, ReferenceAccuracyIsNotCounted) {
  auto& lab = small_lab();
  const auto before = lab.oracle.query_count();
  lab.oracle.reference_accuracy(lab.splits.val);
  EXPECT_EQ(lab.oracle.query_count(), before);
}

TEST(RemoteOracleTest, RejectsBadBatches) {
  auto& lab = small_lab();
  EXPECT_THROW(lab.oracle.query({}), SizeError);
  Rng rng(1);
  ImageTensor small{Eigen::VectorXd::Constant(4, 0.5), {2, 2, 1}};
  const std::vector<ProtectedImage> batch{add_base_noise(small, 0, NoiseSpec(1.0), rng)};
  EXPECT_THROW(lab.oracle.query(batch), SizeError);
}

TEST(RemoteOracleTest, NearNoiselessQueriesMatchCleanAccuracy) {
  auto& lab = small_lab();
  const auto& priv = lab.splits.priv_pool;
  const double sidp = sidp_accuracy(lab.oracle, noised(priv, 1e6, 3), priv.labels());
  EXPECT_NEAR(sidp, lab.oracle.clean_acc_priv(), 0.02);
}

TEST(RemoteOracleTest, AuditLogHasOnlyOrdinalsAndLabels) {
  auto& lab = small_lab();
  std::ostringstream log;
  lab.oracle.set_audit_log(&log);
  const auto batch = noised(lab.splits.val.subset(std::vector<std::size_t>{0, 1, 2}, SplitTag::Priv), 1.0, 2);
  const auto labels = lab.oracle.query(batch);
  lab.oracle.set_audit_log(nullptr);
  std::istringstream lines(log.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto comma = line.find(',');
    ASSERT_NE(comma, std::string::npos);
    EXPECT_EQ(line.find('.'), std::string::npos) << line;
    EXPECT_EQ(std::stoi(line.substr(comma + 1)), labels[n]);
    ++n;
  }
  EXPECT_EQ(n, 3);
}

TEST(SidpAccuracyTest, LengthMismatch) {
  auto& lab = small_lab();
  const auto& priv = lab.splits.priv_pool;
  const auto p = noised(priv, 1.0, 1);
  const std::vector<int> fewer(priv.labels().begin(), priv.labels().end() - 1);
  EXPECT_THROW(sidp_accuracy(lab.oracle, p, fewer), SizeError);
}

TEST(SidpAccuracyTest, MonotoneInNoiseScale) {
  auto& lab = small_lab();
  const auto& priv = lab.splits.priv_pool;
  double previous = 1.1;
  for (double eps : {8.0, 4.0, 2.0, 1.0, 0.5}) {
    std::vector<double> accs;
    for (std::uint64_t s = 0; s < 5; ++s) accs.push_back(sidp_accuracy(lab.oracle, noised(priv, eps, s), priv.labels()));
    const double mean = stats::mean(accs);
    EXPECT_LE(mean, previous + 0.01) << "eps " << eps;
    previous = mean;
  }
}

TEST(RecordingOracleTest, RecordsQueriedTensorsAndForwards) {
  auto& lab = small_lab();
  RecordingOracle rec(lab.oracle);
  const auto batch = noised(lab.splits.val.subset(std::vector<std::size_t>{3, 4}, SplitTag::Priv), 1.0, 2);
  const auto labels = rec.query(batch);
  ASSERT_EQ(rec.queried().size(), 2u);
  EXPECT_EQ(rec.queried()[1], batch[1].pixels());
  EXPECT_EQ(labels, lab.oracle.query(batch));
  rec.clear();
  EXPECT_TRUE(rec.queried().empty());
}

}  // namespace
}  // namespace ldpx
