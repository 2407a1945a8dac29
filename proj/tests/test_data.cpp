/* Copyright 2026 The MDPR Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "support.hpp"

namespace mdpr {
namespace {

using testing::TempDir;

std::size_t total(const std::vector<std::size_t>& v) {
  return std::accumulate(v.begin(), v.end(), std::size_t{0});
}

TEST(LongTailCounts, CifarStyleTotals) {
  EXPECT_EQ(total(longtail_counts(500, 100, 100)), 10847u);
  EXPECT_EQ(total(longtail_counts(500, 100, 50)), 12608u);
  EXPECT_EQ(total(longtail_counts(500, 100, 10)), 19573u);
}

TEST(LongTailCounts, EndpointsAndDegenerateProfiles) {
  const auto c = longtail_counts(500, 100, 100);
  EXPECT_EQ(c.front(), 500u);
  EXPECT_EQ(c.back(), 5u);
  EXPECT_EQ(longtail_counts(40, 7, 1.0), std::vector<std::size_t>(7, 40));
  EXPECT_EQ(longtail_counts(40, 1, 10.0), std::vector<std::size_t>{40});
  EXPECT_THROW(longtail_counts(40, 0, 10.0), ValidationError);
  EXPECT_THROW(longtail_counts(40, 5, 0.5), ValidationError);
}

TEST(LongTailCounts, MonotoneWithBoundedRatio) {
  for (double ir : {1.0, 2.0, 10.0, 37.5, 100.0}) {
    for (std::size_t C : {2u, 5u, 20u, 100u}) {
      const auto c = longtail_counts(500, C, ir);
      EXPECT_TRUE(std::is_sorted(c.rbegin(), c.rend())) << "IR " << ir << " C " << C;
      const double ratio = static_cast<double>(c.front()) / static_cast<double>(c.back());
      // Flooring the last count can push the ratio past IR when n_max / IR is
      // fractional; it never exceeds n_max / floor(n_max / IR).
      EXPECT_LE(ratio, 500.0 / std::floor(500.0 / ir + 1e-9) + 1e-9);
      if (std::fmod(500.0, ir) == 0.0) EXPECT_LE(ratio, ir + 1e-9);
      EXPECT_GE(ratio, ir * (1.0 - 2.0 / static_cast<double>(c.back())) - 1e-9);
    }
  }
}

TEST(ShotGroups, Boundaries) {
  EXPECT_EQ(shot_group(101), ShotGroup::Many);
  EXPECT_EQ(shot_group(100), ShotGroup::Medium);
  EXPECT_EQ(shot_group(20), ShotGroup::Medium);
  EXPECT_EQ(shot_group(19), ShotGroup::Few);
  EXPECT_EQ(shot_group(1), ShotGroup::Few);
}

TEST(ShotGroups, DefaultBenchmarkHasMediumAndFewClasses) {
  const auto counts = longtail_counts(100, 20, 100);
  const auto groups = assign_shot_groups(counts);
  EXPECT_EQ(std::count(groups.begin(), groups.end(), ShotGroup::Many), 0);
  EXPECT_GT(std::count(groups.begin(), groups.end(), ShotGroup::Medium), 0);
  EXPECT_GT(std::count(groups.begin(), groups.end(), ShotGroup::Few), 0);
}

struct Fixture {
  std::unique_ptr<SyntheticWorld> world;
  LongTailSpec spec;
  LongTailDataset ds;
};

Fixture fixture() {
  Fixture f;
  SyntheticWorldSpec ws;
  ws.num_classes = 6;
  ws.dim = 8;
  f.world = make_synthetic_world(ws);
  f.spec.num_classes = 6;
  f.spec.n_max = 30;
  f.spec.imbalance_ratio = 10;
  f.spec.test_per_class = 4;
  f.spec.seed = 9;
  f.ds = make_dataset(f.spec, *f.world);
  return f;
}

TEST(MakeDataset, CountsLabelsAndBalancedTestSplit) {
  const auto f = fixture();
  EXPECT_EQ(f.ds.train_counts, longtail_counts(30, 6, 10));
  EXPECT_EQ(f.ds.train_size(), total(f.ds.train_counts));
  EXPECT_EQ(f.ds.test_size(), 24u);
  for (std::size_t c = 0; c < 6; ++c) {
    EXPECT_EQ(static_cast<std::size_t>(
                  std::count(f.ds.train_labels.begin(), f.ds.train_labels.end(), c)),
              f.ds.train_counts[c]);
    EXPECT_EQ(std::count(f.ds.test_labels.begin(), f.ds.test_labels.end(), c), 4);
  }
}

TEST(MakeDataset, TrainAndTestFeaturesAreDisjoint) {
  const auto f = fixture();
  std::set<std::vector<double>> train;
  for (std::size_t i = 0; i < f.ds.train_size(); ++i)
    train.emplace(f.ds.train_features.row(i).begin(), f.ds.train_features.row(i).end());
  for (std::size_t i = 0; i < f.ds.test_size(); ++i)
    EXPECT_EQ(train.count({f.ds.test_features.row(i).begin(), f.ds.test_features.row(i).end()}),
              0u);
}

TEST(MakeDataset, RejectsTooFewSamplesForTheRatio) {
  auto f = fixture();
  f.spec.n_max = 5;
  EXPECT_THROW(make_dataset(f.spec, *f.world), ConfigError);
  f.spec = LongTailSpec{};
  EXPECT_THROW(make_dataset(f.spec, *f.world), ValidationError);
}

TEST(EpochOrder, SeededPermutationThatChangesPerEpoch) {
  const auto f = fixture();
  const auto a = epoch_order(f.ds, 0);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(f.ds.train_size());
  std::iota(iota.begin(), iota.end(), std::size_t{0});
  EXPECT_EQ(sorted, iota);
  EXPECT_EQ(a, epoch_order(f.ds, 0));
  EXPECT_NE(a, epoch_order(f.ds, 1));
  EXPECT_NE(a, epoch_order(f.ds, 0, 1));
}

TEST(SplitValidation, HoldsOutTheTailOfEachClass) {
  const auto f = fixture();
  const auto v = split_validation(f.ds);
  for (std::size_t c = 0; c < 6; ++c) {
    const std::size_t n = f.ds.train_counts[c];
    const std::size_t held = std::min(std::max<std::size_t>(1, n / 10), n - 1);
    EXPECT_EQ(v.train_counts[c], n - held);
    EXPECT_EQ(static_cast<std::size_t>(
                  std::count(v.test_labels.begin(), v.test_labels.end(), c)),
              held);
  }
  EXPECT_EQ(v.train_size() + v.test_size(), f.ds.train_size());
}

TEST(DatasetFiles, ExportImportRoundTrip) {
  TempDir dir;
  const auto f = fixture();
  export_dataset(dir.path(), f.ds);
  const auto back = import_dataset(dir.path());
  EXPECT_EQ(back.train_counts, f.ds.train_counts);
  EXPECT_EQ(back.groups, f.ds.groups);
  EXPECT_EQ(back.train_labels, f.ds.train_labels);
  EXPECT_EQ(back.test_labels, f.ds.test_labels);
  EXPECT_EQ(back.train_features, f.ds.train_features);
  EXPECT_EQ(back.test_features, f.ds.test_features);
  EXPECT_EQ(back.seed, f.ds.seed);

  auto split = read_json_file(dir / kSplitFile);
  split["num_train"] = split["num_train"].get<std::size_t>() + 1;
  write_text_file(dir / kSplitFile, split.dump());
  EXPECT_THROW(import_dataset(dir.path()), IntegrityError);
}

}  // namespace
}  // namespace mdpr
