// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "advhar/error.hpp"
#include "advhar/pairset.hpp"
#include "support.hpp"

namespace advhar {
namespace {

struct Tally {
  std::size_t same = 0, different = 0;
  std::map<int, std::size_t> per_subject;                 // g=1
  std::map<std::pair<int, int>, std::size_t> per_combo;  // g=0
};

Tally tally(const PairDataset& p) {
  Tally t;
  for (const PairSample& s : p.pairs) {
    if (s.g == 1) {
      ++t.same;
      ++t.per_subject[s.subject_a];
    } else {
      ++t.different;
      ++t.per_combo[{std::min(s.subject_a, s.subject_b), std::max(s.subject_a, s.subject_b)}];
    }
  }
  return t;
}

template <class M>
std::size_t spread(const M& counts) {
  std::size_t lo = SIZE_MAX, hi = 0;
  for (const auto& [k, v] : counts) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi - lo;
}

TEST(PairSampler, LawOnFiveSubjectsFourActivities) {
  const LabeledDataset ds = testing::small_dataset(5, 4, 6, 64, 2);
  const PairDataset p = sample_pairs(enumerate_pair_groups(ds), 1000, 3);
  ASSERT_EQ(p.size(), 1000u);
  const Tally t = tally(p);
  EXPECT_EQ(t.same, 500u);
  EXPECT_EQ(t.different, 500u);
  EXPECT_EQ(t.per_subject.size(), 5u);
  EXPECT_EQ(t.per_combo.size(), 10u);
  EXPECT_LE(spread(t.per_subject), 1u);
  EXPECT_LE(spread(t.per_combo), 1u);
  for (const PairSample& s : p.pairs) {
    EXPECT_NE(s.a, s.b);
    EXPECT_EQ(ds.windows[s.a].activity, ds.windows[s.b].activity);
    EXPECT_EQ(s.activity, ds.windows[s.a].activity);
    EXPECT_EQ(s.subject_a, ds.windows[s.a].subject);
    EXPECT_EQ(s.subject_b, ds.windows[s.b].subject);
    EXPECT_EQ(s.g, s.subject_a == s.subject_b ? 1 : 0);
  }
  EXPECT_NO_THROW(validate_pairs(p, ds));
}

TEST(PairSampler, ClassBalanceAndCellUniformityForAnyN) {
  const LabeledDataset ds = testing::small_dataset(4, 3, 3, 64, 2);
  const PairGroupIndex index = enumerate_pair_groups(ds);
  for (std::size_t n : {2u, 3u, 7u, 11u, 64u, 101u, 500u}) {
    const Tally t = tally(sample_pairs(index, n, n));
    EXPECT_EQ(t.same + t.different, n);
    EXPECT_TRUE(t.same - t.different == 0 || t.same - t.different == 1) << n;
    if (t.same >= 4) {
      EXPECT_LE(spread(t.per_subject), 1u) << n;
    }
    if (t.different >= 6) {
      EXPECT_LE(spread(t.per_combo), 1u) << n;
    }
  }
}

TEST(PairSampler, DistinctPairsBeforeRepeats) {
  // Two subjects, two activities, three windows per cell: each subject
  // offers six unordered same-subject pairs, more than it is asked for.
  const LabeledDataset ds = testing::small_dataset(2, 2, 3, 64, 2);
  const PairDataset p = sample_pairs(enumerate_pair_groups(ds), 8, 1);
  std::map<int, std::set<std::pair<std::size_t, std::size_t>>> seen;
  std::map<int, std::size_t> count;
  for (const PairSample& s : p.pairs) {
    if (s.g != 1) continue;
    seen[s.subject_a].insert({std::min(s.a, s.b), std::max(s.a, s.b)});
    ++count[s.subject_a];
  }
  for (const auto& [subject, n] : count) EXPECT_EQ(seen[subject].size(), n) << subject;
}

TEST(PairSampler, DeterministicInSeed) {
  const LabeledDataset ds = testing::small_dataset();
  const PairGroupIndex index = enumerate_pair_groups(ds);
  EXPECT_EQ(sample_pairs(index, 300, 9).pairs, sample_pairs(index, 300, 9).pairs);
  EXPECT_NE(sample_pairs(index, 300, 9).pairs, sample_pairs(index, 300, 10).pairs);
}

TEST(PairSampler, AgnosticModeMixesActivities) {
  const LabeledDataset ds = testing::small_dataset(5, 4, 6, 64, 2);
  const PairDataset p = sample_pairs_activity_agnostic(ds, 1000, 3);
  EXPECT_EQ(p.mode, PairMode::kActivityAgnostic);
  const Tally t = tally(p);
  EXPECT_EQ(t.same, 500u);
  EXPECT_LE(spread(t.per_subject), 1u);
  EXPECT_LE(spread(t.per_combo), 1u);
  std::size_t cross = 0;
  for (const PairSample& s : p.pairs) {
    EXPECT_NE(s.a, s.b);
    EXPECT_EQ(s.activity, -1);
    cross += ds.windows[s.a].activity != ds.windows[s.b].activity;
  }
  EXPECT_GT(cross, 0u);
}

TEST(PairSampler, AgnosticModeNeedsNoSharedActivity) {
  // Every subject performs a different single activity.
  LabeledDataset ds = testing::small_dataset(3, 3, 2, 64, 2);
  std::erase_if(ds.windows, [](const Window& w) { return w.activity != w.subject - 1; });
  EXPECT_THROW(sample_pairs(enumerate_pair_groups(ds), 10, 1), DataError);
  const PairDataset p = sample_pairs_activity_agnostic(ds, 10, 1);
  for (const PairSample& s : p.pairs) {
    if (s.subject_a != s.subject_b) {
      EXPECT_EQ(s.g, 0);
      EXPECT_NE(ds.windows[s.a].activity, ds.windows[s.b].activity);
    }
  }
}

TEST(PairSampler, RejectsInfeasibleRequests) {
  const LabeledDataset one = testing::small_dataset(1, 2, 4, 64, 2);
  EXPECT_THROW(sample_pairs(enumerate_pair_groups(one), 10, 1), DataError);
  const LabeledDataset ds = testing::small_dataset(3, 2, 2, 64, 2);
  EXPECT_THROW(sample_pairs(enumerate_pair_groups(ds), 0, 1), Error);
}

TEST(PairSampler, ValidationCatchesBrokenPairs) {
  const LabeledDataset ds = testing::small_dataset(3, 2, 3, 64, 2);
  PairDataset p = sample_pairs(enumerate_pair_groups(ds), 20, 1);
  PairDataset self = p;
  self.pairs[0].b = self.pairs[0].a;
  EXPECT_THROW(validate_pairs(self, ds), DataError);
  PairDataset wrong_g = p;
  wrong_g.pairs[0].g = 1 - wrong_g.pairs[0].g;
  EXPECT_THROW(validate_pairs(wrong_g, ds), DataError);
  PairDataset out_of_range = p;
  out_of_range.pairs[0].a = ds.size();
  EXPECT_THROW(validate_pairs(out_of_range, ds), DataError);
}

TEST(PairFile, JsonLinesRoundTrip) {
  testing::TempDir dir;
  const LabeledDataset ds = testing::small_dataset();
  PairDataset p = sample_pairs(enumerate_pair_groups(ds), 77, 5);
  p.source_digest = dataset_digest(ds);
  save_pairs(dir / "p.jsonl", p, "cfg");
  const PairDataset back = load_pairs(dir / "p.jsonl");
  EXPECT_EQ(back.pairs, p.pairs);
  EXPECT_EQ(back.seed, 5u);
  EXPECT_EQ(back.mode, PairMode::kActivityBased);
  EXPECT_EQ(back.source_digest, p.source_digest);

  const PairDataset agnostic = sample_pairs_activity_agnostic(ds, 12, 2);
  save_pairs(dir / "q.jsonl", agnostic);
  EXPECT_EQ(load_pairs(dir / "q.jsonl").mode, PairMode::kActivityAgnostic);
}

TEST(PairFile, MalformedLineIsAParseError) {
  testing::TempDir dir;
  {
    std::ofstream out(dir / "bad.jsonl");
    out << "{\"seed\": 1, \"mode\": \"activity\", \"n\": 1}\n{\"a\": 0,\n";
  }
  EXPECT_THROW(load_pairs(dir / "bad.jsonl"), ParseError);
  EXPECT_EQ(parse_pair_mode("agnostic"), PairMode::kActivityAgnostic);
  EXPECT_THROW(parse_pair_mode("random"), ConfigError);
}

}  // namespace
}  // namespace advhar
