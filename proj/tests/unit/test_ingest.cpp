// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "advhar/error.hpp"
#include "advhar/ingest.hpp"
#include "advhar/windows_io.hpp"
#include "support.hpp"

namespace advhar {
namespace {

DatasetSchema tiny_schema(std::size_t w = 4, std::size_t overlap = 2) {
  DatasetSchema s;
  s.kind = DatasetKind::kSynthetic;
  s.window_size = w;
  s.overlap = overlap;
  s.activities = {{1, "a"}, {2, "b"}};
  s.excluded_raw_labels = {0};
  s.file_glob = "subject*.csv";
  s.label_column = 0;
  s.channel_columns = {1, 2};
  return s;
}

RecordingStream constant_label_stream(std::size_t rows, int label, std::size_t channels = 2) {
  RecordingStream r;
  r.subject_id = 1;
  r.channels = channels;
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t j = 0; j < channels; ++j) r.samples.push_back(static_cast<float>(t * 10 + j));
    r.raw_labels.push_back(label);
  }
  return r;
}

TEST(Schema, BuiltinCatalogMatchesDatasetDescriptions) {
  const DatasetSchema pamap = builtin_schema(DatasetKind::kPamap2);
  EXPECT_EQ(pamap.channels(), 18u);
  EXPECT_EQ(pamap.window_size, 512u);
  EXPECT_EQ(pamap.overlap, 256u);
  EXPECT_EQ(pamap.num_activities(), 12u);
  EXPECT_TRUE(pamap.is_excluded_subject(9));

  const DatasetSchema realdisp = builtin_schema(DatasetKind::kRealdisp);
  EXPECT_EQ(realdisp.channels(), 54u);
  EXPECT_EQ(realdisp.window_size, 256u);
  EXPECT_EQ(realdisp.overlap, 128u);
  EXPECT_EQ(realdisp.num_activities(), 33u);

  const DatasetSchema mhealth = builtin_schema(DatasetKind::kMhealth);
  EXPECT_EQ(mhealth.channels(), 15u);
  EXPECT_EQ(mhealth.num_activities(), 12u);
  EXPECT_TRUE(mhealth.is_excluded_label(0));
}

TEST(Schema, JsonRoundTrip) {
  for (DatasetKind k : {DatasetKind::kPamap2, DatasetKind::kMhealth, DatasetKind::kRealdisp, DatasetKind::kSynthetic}) {
    const DatasetSchema s = builtin_schema(k);
    const DatasetSchema back = schema_from_json(schema_to_json(s));
    EXPECT_EQ(schema_to_json(back), schema_to_json(s));
    EXPECT_EQ(parse_dataset_kind(to_string(k)), k);
  }
  EXPECT_EQ(parse_dataset_kind("mhealth"), DatasetKind::kMhealth);
  EXPECT_THROW(parse_dataset_kind("wisdm"), ConfigError);
}

TEST(Schema, ValidationRejectsBadGeometry) {
  DatasetSchema s = tiny_schema();
  EXPECT_NO_THROW(s.validate());
  s.overlap = s.window_size;
  EXPECT_THROW(s.validate(), SchemaError);
  s = tiny_schema();
  s.activities.pop_back();
  EXPECT_THROW(s.validate(), SchemaError);
  s = tiny_schema();
  s.channel_columns.clear();
  EXPECT_THROW(s.validate(), SchemaError);
}

TEST(Parse, SelectsChannelsAndDropsExcludedLabels) {
  std::istringstream in("1 0.5 1.5 9\n0 7 7 7\n2,2.5,3.5,9\n\n5 1 1 1\n");
  const RecordingStream r = parse_recording(in, tiny_schema(), 3);
  EXPECT_EQ(r.subject_id, 3);
  ASSERT_EQ(r.rows(), 2u);
  EXPECT_EQ(r.raw_labels, (std::vector<int>{1, 2}));
  EXPECT_EQ(r.samples, (std::vector<float>{0.5f, 1.5f, 2.5f, 3.5f}));
}

TEST(Parse, ForwardFillsMissingValuesAndDropsIncompleteHead) {
  std::istringstream in("1 NaN 1\n1 2 NaN\n1 NaN 4\n");
  const RecordingStream r = parse_recording(in, tiny_schema(), 1);
  ASSERT_EQ(r.rows(), 2u);
  EXPECT_EQ(r.samples, (std::vector<float>{2.0f, 1.0f, 2.0f, 4.0f}));
}

TEST(Parse, ReportsMalformedRows) {
  std::istringstream short_row("1 2\n");
  EXPECT_THROW(parse_recording(short_row, tiny_schema(), 1), SchemaError);
  std::istringstream bad_value("1 2 x\n");
  EXPECT_THROW(parse_recording(bad_value, tiny_schema(), 1), ParseError);
  std::istringstream bad_label("1.5 2 3\n");
  EXPECT_THROW(parse_recording(bad_label, tiny_schema(), 1), ParseError);
}

TEST(Parse, SubjectFromFileName) {
  const DatasetSchema pamap = builtin_schema(DatasetKind::kPamap2);
  EXPECT_EQ(subject_from_filename("subject105.dat", pamap), 5);
  EXPECT_EQ(subject_from_filename("mHealth_subject7.log", builtin_schema(DatasetKind::kMhealth)), 7);
  EXPECT_THROW(subject_from_filename("readme.txt", pamap), DataError);
  EXPECT_TRUE(glob_match("subject*.dat", "subject101.dat"));
  EXPECT_TRUE(glob_match("s?b*", "sub1"));
  EXPECT_FALSE(glob_match("subject*.dat", "subject101.txt"));
}

// Window count for a single-label recording against brute-force enumeration.
TEST(Segment, CountMatchesEnumeration) {
  for (std::size_t w : {3u, 4u, 8u}) {
    for (std::size_t overlap = 0; overlap < w; ++overlap) {
      for (std::size_t n = 0; n < 40; ++n) {
        std::size_t expected = 0;
        for (std::size_t k = 0; k * (w - overlap) + w <= n; ++k) ++expected;
        const auto windows = segment_windows(constant_label_stream(n, 1), tiny_schema(w, overlap));
        ASSERT_EQ(windows.size(), expected) << "w=" << w << " overlap=" << overlap << " n=" << n;
      }
    }
  }
}

TEST(Segment, WindowsArePureAndTimeMajor) {
  RecordingStream r = constant_label_stream(12, 1);
  for (std::size_t t = 5; t < 12; ++t) r.raw_labels[t] = 2;
  const auto windows = segment_windows(r, tiny_schema(4, 2));
  // Starts 0, 2, 4, 6, 8; the one starting at 4 straddles the label change,
  // as does the one at 2.
  ASSERT_EQ(windows.size(), 3u);
  EXPECT_EQ(windows[0].activity, 0);
  EXPECT_EQ(windows[1].activity, 1);
  EXPECT_EQ(windows[2].activity, 1);
  EXPECT_EQ(windows[1].at(0, 0), 60.0f);
  EXPECT_EQ(windows[1].at(1, 1), 71.0f);
  for (const Window& win : windows) {
    EXPECT_EQ(win.length, 4u);
    EXPECT_EQ(win.channels, 2u);
  }
}

TEST(Segment, DatasetCountsAddUpOverRecordings) {
  // 3 + 1 + 0 windows with w=4, overlap=2: rows 8, 4 and 3.
  std::vector<RecordingStream> recs{constant_label_stream(8, 1), constant_label_stream(4, 2),
                                    constant_label_stream(3, 1)};
  recs[0].subject_id = 1;
  recs[1].subject_id = 2;
  recs[2].subject_id = 3;
  const LabeledDataset ds = build_labeled_dataset(recs, tiny_schema(4, 2));
  EXPECT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.subjects, (std::vector<int>{1, 2}));
}

TEST(Segment, ExcludedSubjectsAreDropped) {
  DatasetSchema s = tiny_schema(4, 2);
  s.excluded_subjects = {9};
  std::vector<RecordingStream> recs;
  for (int id = 1; id <= 9; ++id) {
    recs.push_back(constant_label_stream(8, 1));
    recs.back().subject_id = id;
  }
  const LabeledDataset ds = build_labeled_dataset(recs, s);
  EXPECT_EQ(ds.subjects.size(), 8u);
  for (const Window& w : ds.windows) EXPECT_NE(w.subject, 9);
}

TEST(Segment, ConstructionIsDeterministic) {
  const LabeledDataset a = testing::small_dataset();
  const LabeledDataset b = testing::small_dataset();
  EXPECT_EQ(dataset_digest(a), dataset_digest(b));
}

TEST(MinMax, TrainingValuesLandInUnitIntervalAndInvertBack) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-50.0f, 80.0f);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Window> train(6);
    for (Window& w : train) {
      w.length = 16;
      w.channels = 3;
      w.values.resize(48);
      for (float& v : w.values) v = u(rng);
    }
    const NormStats stats = fit_minmax(train);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_LE(stats.min[j], stats.max[j]);
    for (const Window& w : train) {
      const Window n = apply_minmax(w, stats);
      for (std::size_t t = 0; t < w.length; ++t) {
        for (std::size_t j = 0; j < 3; ++j) {
          const double v = n.at(t, j);
          EXPECT_GE(v, 0.0);
          EXPECT_LE(v, 1.0);
          const double back = v * (static_cast<double>(stats.max[j]) - stats.min[j]) + stats.min[j];
          // Normalized values are stored as float32: one rounding of a value
          // in [0, 1], scaled back by the channel range.
          const double range = static_cast<double>(stats.max[j]) - stats.min[j];
          EXPECT_NEAR(back, w.at(t, j), 2.0 * std::numeric_limits<float>::epsilon() * range);
        }
      }
    }
  }
}

TEST(MinMax, ConstantChannelMapsToZeroAndOutOfRangeIsNotClamped) {
  Window w;
  w.length = 2;
  w.channels = 2;
  w.values = {3.0f, 1.0f, 3.0f, 2.0f};
  const std::vector<Window> train{w};
  const NormStats stats = fit_minmax(train);
  const Window n = apply_minmax(w, stats);
  EXPECT_EQ(n.at(0, 0), 0.0f);
  EXPECT_EQ(n.at(1, 0), 0.0f);
  Window out = w;
  out.values = {3.0f, 4.0f, 3.0f, 0.0f};
  const Window m = apply_minmax(out, stats);
  EXPECT_FLOAT_EQ(m.at(0, 1), 3.0f);
  EXPECT_FLOAT_EQ(m.at(1, 1), -1.0f);
}

TEST(WindowsFile, RoundTripsWithSidecar) {
  testing::TempDir dir;
  const LabeledDataset ds = testing::small_dataset(3, 2, 2, 64, 2);
  const NormStats stats = fit_minmax(ds.windows);
  const std::string digest = save_windows(dir / "w.advw", ds, stats, "cfg");
  WindowsSidecar sidecar;
  const LabeledDataset back = load_windows(dir / "w.advw", &sidecar);
  EXPECT_EQ(sidecar.content_digest, digest);
  EXPECT_EQ(sidecar.config_digest, "cfg");
  ASSERT_TRUE(sidecar.norm);
  EXPECT_EQ(sidecar.norm->min, stats.min);
  EXPECT_EQ(dataset_digest(back), dataset_digest(ds));
  EXPECT_EQ(back.subjects, ds.subjects);
}

TEST(WindowsFile, CorruptionIsDetected) {
  testing::TempDir dir;
  const LabeledDataset ds = testing::small_dataset(3, 2, 2, 64, 2);
  save_windows(dir / "w.advw", ds);
  {
    std::fstream f(dir / "w.advw", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x7f');
  }
  EXPECT_THROW(load_windows(dir / "w.advw"), Error);
  std::filesystem::remove(sidecar_path(dir / "w.advw"));
  EXPECT_THROW(load_windows(dir / "w.advw"), Error);
}

TEST(Select, KeepsOnlyRequestedSubjectsInOrder) {
  const LabeledDataset ds = testing::small_dataset();
  const std::vector<int> keep{2, 4};
  const LabeledDataset sub = select_subjects(ds, keep);
  EXPECT_EQ(sub.subjects, keep);
  std::size_t expected = 0;
  for (const Window& w : ds.windows) expected += (w.subject == 2 || w.subject == 4);
  EXPECT_EQ(sub.size(), expected);
}

}  // namespace
}  // namespace advhar
