#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "edgefall/data.hpp"

using namespace edgefall;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("edgefall_data_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

  void write(const std::string& name, const std::string& content) const {
    std::ofstream(path_ / name) << content;
  }

 private:
  fs::path path_;
};

std::string trial_csv(std::size_t rows, double accel = 0.1, bool slow_baro = false) {
  std::string out = "t,ax,ay,az,gx,gy,gz,p\n";
  for (std::size_t i = 0; i < rows; ++i) {
    out += std::to_string(0.01 * static_cast<double>(i)) + "," + std::to_string(accel) + ",0,1,0,0,0,";
    if (!slow_baro || i % 4 == 0) out += std::to_string(1000.0 + static_cast<double>(i));
    out += "\n";
  }
  return out;
}

Recording make_recording(int subject, int activity, std::size_t n, double rate = 100.0) {
  Recording r;
  r.subject_id = subject;
  r.activity_code = activity;
  r.source = "mem";
  for (auto k : kSensorOrder) {
    SensorStream s{k, rate, std::vector<std::vector<double>>(channel_count(k), std::vector<double>(n))};
    for (std::size_t c = 0; c < s.channels.size(); ++c) {
      for (std::size_t i = 0; i < n; ++i) s.channels[c][i] = static_cast<double>(100 * c + i);
    }
    r.streams.push_back(std::move(s));
  }
  return r;
}

}  // namespace

TEST(SensorSet, ChannelCounts) {
  EXPECT_EQ(SensorSet::parse("A").channel_count(), 3u);
  EXPECT_EQ(SensorSet::parse("G").channel_count(), 3u);
  EXPECT_EQ(SensorSet::parse("B").channel_count(), 1u);
  EXPECT_EQ(SensorSet::parse("AGB").channel_count(), 7u);
  EXPECT_EQ(SensorSet::parse("ba").name(), "AB");
  EXPECT_THROW(SensorSet::parse(""), ConfigError);
  EXPECT_THROW(SensorSet::parse("AX"), ConfigError);
}

TEST(SensorSet, ExactlySevenNonemptySubsets) {
  const auto all = all_sensor_sets();
  ASSERT_EQ(all.size(), 7u);
  std::set<std::uint8_t> bits;
  for (auto s : all) bits.insert(s.bits());
  EXPECT_EQ(bits.size(), 7u);
  std::set<std::size_t> counts;
  for (auto s : all) counts.insert(s.channel_count());
  EXPECT_EQ(counts, (std::set<std::size_t>{1, 3, 4, 6, 7}));
}

TEST(SensorSet, UnionChannelCountIsSubadditive) {
  for (auto a : all_sensor_sets()) {
    for (auto b : all_sensor_sets()) {
      const auto u = SensorSet::from_bits(a.bits() | b.bits());
      const bool disjoint = (a.bits() & b.bits()) == 0;
      EXPECT_LE(u.channel_count(), a.channel_count() + b.channel_count());
      EXPECT_EQ(u.channel_count() == a.channel_count() + b.channel_count(), disjoint);
    }
  }
}

TEST(SensorSet, CanonicalChannelOrder) {
  EXPECT_EQ(SensorSet::parse("AB").channel_names(), (std::vector<std::string>{"ax", "ay", "az", "p"}));
  EXPECT_EQ(SensorSet::all().channel_indices_of(SensorSet::parse("GB")),
            (std::vector<std::size_t>{3, 4, 5, 6}));
}

TEST(Align, HoldLastValueRepeatsSlowBarometer) {
  Recording r = make_recording(1, 1, 4);
  r.streams[2].sampling_rate_hz = 25.0;
  r.streams[2].channels = {{7.0}};
  const auto a = align_streams(r, 100.0);
  ASSERT_EQ(a.data.cols(), 4u);
  for (std::size_t n = 0; n < 4; ++n) EXPECT_EQ(a.data(6, n), 7.0);
}

TEST(Align, HalfRateBarometer) {
  Recording r = make_recording(1, 1, 4);
  r.streams[2].sampling_rate_hz = 50.0;
  r.streams[2].channels = {{1.5, 2.5}};
  const auto a = align_streams(r, 100.0);
  ASSERT_EQ(a.data.cols(), 4u);
  EXPECT_EQ(a.data(6, 0), 1.5);
  EXPECT_EQ(a.data(6, 1), 1.5);
  EXPECT_EQ(a.data(6, 2), 2.5);
  EXPECT_EQ(a.data(6, 3), 2.5);
}

TEST(Align, IdentityAtTargetRate) {
  const Recording r = make_recording(1, 1, 5);
  const auto a = align_streams(r, 100.0);
  ASSERT_EQ(a.data.cols(), 5u);
  for (std::size_t n = 0; n < 5; ++n) {
    EXPECT_EQ(a.data(0, n), r.streams[0].channels[0][n]);
    EXPECT_EQ(a.data(5, n), r.streams[1].channels[2][n]);
    EXPECT_EQ(a.data(6, n), r.streams[2].channels[0][n]);
  }
}

TEST(Align, EmptyStreamAndWrongTargetRejected) {
  Recording r = make_recording(1, 1, 4);
  EXPECT_THROW(align_streams(r, 50.0), AlignmentError);
  r.streams[1].channels = {{}, {}, {}};
  EXPECT_THROW(align_streams(r, 100.0), AlignmentError);
}

TEST(Ingest, KeepsWristAndSkipsOtherPlacements) {
  TempDir dir;
  dir.write("S01_A101_T01_wrist.csv", trial_csv(30));
  dir.write("S02_A003_T01_Wrist.csv", trial_csv(30));
  dir.write("S01_A101_T01_waist.csv", trial_csv(30));
  const auto res = ingest_csv(dir.path());
  ASSERT_EQ(res.recordings.size(), 2u);
  EXPECT_EQ(res.skipped_placement, 1u);
  EXPECT_EQ(res.recordings[0].subject_id, 1);
  EXPECT_EQ(res.recordings[0].activity_code, 101);
  EXPECT_EQ(res.recordings[1].activity_code, 3);
  EXPECT_NEAR(res.recordings[0].streams[0].sampling_rate_hz, 100.0, 1e-6);
}

TEST(Ingest, EmptyDirectoryWarns) {
  TempDir dir;
  const auto res = ingest_csv(dir.path());
  EXPECT_TRUE(res.recordings.empty());
  EXPECT_FALSE(res.warnings.empty());
}

TEST(Ingest, NonNumericSampleNamesLine) {
  TempDir dir;
  std::string csv = trial_csv(5);
  csv += "0.05,abc,0,1,0,0,0,1000\n";
  dir.write("S01_A101_T01_wrist.csv", csv);
  try {
    ingest_csv(dir.path());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("S01_A101_T01_wrist.csv:7"), std::string::npos) << e.what();
  }
}

TEST(Ingest, MissingColumnIsSchemaErrorUnlessDeclaredAbsent) {
  TempDir dir;
  dir.write("S01_A101_T01_wrist.csv", "t,ax,ay,az,gx,gy,gz\n0,1,2,3,4,5,6\n0.01,1,2,3,4,5,6\n");
  EXPECT_THROW(ingest_csv(dir.path()), SchemaError);
  dir.write("schema.cfg", "absent_sensors = B\n");
  const auto res = ingest_csv(dir.path());
  ASSERT_EQ(res.recordings.size(), 1u);
  EXPECT_EQ(res.recordings[0].available(), SensorSet::parse("AG"));
}

TEST(Ingest, SlowBarometerAlignedByHoldLastValue) {
  TempDir dir;
  dir.write("S03_A101_T02_wrist.csv", trial_csv(8, 0.1, true));
  const auto res = ingest_csv(dir.path());
  ASSERT_EQ(res.recordings.size(), 1u);
  const auto& rec = res.recordings[0];
  EXPECT_NEAR(rec.find(SensorKind::Barometer)->sampling_rate_hz, 25.0, 1e-6);
  const auto a = align_streams(rec, rec.streams[0].sampling_rate_hz);
  ASSERT_EQ(a.data.cols(), 8u);
  EXPECT_EQ(a.data(6, 0), 1000.0);
  EXPECT_EQ(a.data(6, 3), 1000.0);
  EXPECT_EQ(a.data(6, 4), 1004.0);
  EXPECT_EQ(a.data(6, 7), 1004.0);
}

TEST(Window, CountsAndLabels) {
  const std::vector<Recording> recs = {make_recording(1, 101, 40), make_recording(2, 5, 40)};
  const auto res = window_and_label(recs, SensorSet::all(), 20, 10, {101});
  EXPECT_EQ(res.dataset.size(), 6u);
  EXPECT_EQ(res.dataset.count_label(1), 3u);
  EXPECT_EQ(res.skipped_short, 0u);
  for (const auto& w : res.dataset.windows()) {
    EXPECT_EQ(w.rows(), 7u);
    EXPECT_EQ(w.cols(), 20u);
  }
  // Second window starts at sample 10.
  EXPECT_EQ(res.dataset.windows()[1](0, 0), 10.0);
}

TEST(Window, SensorSubsetSelectsChannels) {
  const auto res = window_and_label({make_recording(1, 1, 40)}, SensorSet::parse("A"), 20, 10, {101});
  for (const auto& w : res.dataset.windows()) EXPECT_EQ(w.rows(), 3u);
  const auto ab = window_and_label({make_recording(1, 1, 40)}, SensorSet::parse("AB"), 20, 10, {101});
  // Fourth channel is the barometer (stream value 0 + i).
  EXPECT_EQ(ab.dataset.windows()[0](3, 5), 5.0);
}

TEST(Window, ShortFallRecording) {
  const auto res = window_and_label({make_recording(1, 101, 25), make_recording(1, 101, 10)},
                                    SensorSet::all(), 20, 20, {101});
  ASSERT_EQ(res.dataset.size(), 1u);
  EXPECT_EQ(res.dataset.labels()[0], 1);
  EXPECT_EQ(res.skipped_short, 1u);
}

TEST(Window, ConfigErrors) {
  const std::vector<Recording> recs = {make_recording(1, 1, 40)};
  EXPECT_THROW(window_and_label(recs, SensorSet::all(), 20, 10, {}), ConfigError);
  EXPECT_THROW(window_and_label(recs, SensorSet::all(), 1, 1, {1}), ConfigError);
  EXPECT_THROW(window_and_label(recs, SensorSet::all(), 20, 21, {1}), ConfigError);
  EXPECT_THROW(window_and_label(recs, SensorSet::all(), 20, 0, {1}), ConfigError);
}

TEST(Normalize, HandComputedChannel) {
  // One window, one barometer channel [1, 2, 3].
  WindowedDataset ds(SensorSet::parse("B"), 3, {Matrix{{1, 2, 3}}}, {0});
  const auto n = normalize(ds);
  ASSERT_TRUE(n.normalization());
  EXPECT_DOUBLE_EQ(n.normalization()->mean[0], 2.0);
  EXPECT_NEAR(n.normalization()->std[0], std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(n.windows()[0](0, 0), -1.224744871391589, 1e-12);
  EXPECT_NEAR(n.windows()[0](0, 1), 0.0, 1e-15);
  EXPECT_NEAR(n.windows()[0](0, 2), 1.224744871391589, 1e-12);
}

TEST(Normalize, ConstantChannelBecomesZero) {
  WindowedDataset ds(SensorSet::parse("B"), 4, {Matrix{{5, 5, 5, 5}}, Matrix{{5, 5, 5, 5}}}, {0, 1});
  const auto n = normalize(ds);
  EXPECT_EQ(n.normalization()->std[0], kStdFloor);
  for (const auto& w : n.windows()) {
    for (double v : w.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Normalize, StandardizedChannelUnchanged) {
  WindowedDataset ds(SensorSet::parse("B"), 4, {Matrix{{-1, 1, -1, 1}}}, {0});
  const auto n = normalize(ds);
  for (std::size_t t = 0; t < 4; ++t) EXPECT_NEAR(n.windows()[0](0, t), ds.windows()[0](0, t), 1e-9);
}

TEST(Normalize, IdempotentWithSameStats) {
  const auto ds = synth_generate(10, 20, SensorSet::all(), 3, 0.2);
  const auto once = normalize(ds);
  const auto twice = normalize(once, once.normalization());
  for (std::size_t i = 0; i < once.size(); ++i) {
    for (std::size_t k = 0; k < once.windows()[i].size(); ++k) {
      EXPECT_NEAR(once.windows()[i].values()[k], twice.windows()[i].values()[k], 1e-9);
    }
  }
  // Re-deriving stats from an already-normalized set is also stable.
  const auto again = normalize(once);
  for (std::size_t i = 0; i < once.size(); ++i) {
    for (std::size_t k = 0; k < once.windows()[i].size(); ++k) {
      EXPECT_NEAR(once.windows()[i].values()[k], again.windows()[i].values()[k], 1e-9);
    }
  }
}

TEST(Normalize, TestSetUsesTrainingStats) {
  const auto train = synth_generate(10, 20, SensorSet::parse("AB"), 1, 0.2);
  const auto test = synth_generate(5, 20, SensorSet::parse("AB"), 2, 0.2);
  const auto ntrain = normalize(train);
  const auto ntest = normalize(test, ntrain.normalization());
  EXPECT_EQ(*ntest.normalization(), *ntrain.normalization());
  const auto& s = *ntrain.normalization();
  EXPECT_DOUBLE_EQ(ntest.windows()[0](1, 3), (test.windows()[0](1, 3) - s.mean[1]) / s.std[1]);
}

TEST(Split, DeterministicRandomSplit) {
  const auto ds = synth_generate(50, 20, SensorSet::parse("A"), 9, 0.1);
  SplitSpec spec{SplitMode::Random, 0.25, {}, 1234};
  const auto a = split_indices(ds, spec);
  const auto b = split_indices(ds, spec);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.test.size(), 25u);
  EXPECT_EQ(a.train.size(), 75u);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  for (auto i : a.test) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 100u);
}

TEST(Split, SubjectHoldoutIsDisjointBySubject) {
  const auto ds = synth_generate(60, 20, SensorSet::parse("A"), 9, 0.1);
  SplitSpec spec{SplitMode::SubjectHoldout, 0.25, {3}, 42};
  const auto [train, test] = split(ds, spec);
  EXPECT_FALSE(test.empty());
  for (int s : test.subjects()) EXPECT_EQ(s, 3);
  for (int s : train.subjects()) EXPECT_NE(s, 3);
  EXPECT_EQ(train.size() + test.size(), ds.size());
}

TEST(Split, DefaultHoldsOutThreeOfFifteenSubjects) {
  const auto ds = synth_generate(60, 20, SensorSet::parse("B"), 9, 0.1);
  const auto [train, test] = split(ds, SplitSpec{});
  std::set<int> held(test.subjects().begin(), test.subjects().end());
  std::set<int> kept(train.subjects().begin(), train.subjects().end());
  EXPECT_EQ(held.size(), 3u);
  for (int s : held) EXPECT_FALSE(kept.count(s));
}

TEST(Split, AbsentHoldoutSubjectIsConfigError) {
  const auto ds = synth_generate(10, 20, SensorSet::parse("A"), 9, 0.1);
  EXPECT_THROW(split(ds, SplitSpec{SplitMode::SubjectHoldout, 0.25, {99}, 42}), ConfigError);
}

TEST(Synth, DeterministicPerSeed) {
  const auto a = synth_generate(20, 20, SensorSet::all(), 77, 0.3);
  const auto b = synth_generate(20, 20, SensorSet::all(), 77, 0.3);
  EXPECT_EQ(a.windows(), b.windows());
  EXPECT_EQ(a.labels(), b.labels());
  const auto c = synth_generate(20, 20, SensorSet::all(), 78, 0.3);
  EXPECT_NE(a.windows(), c.windows());
}

TEST(Synth, ClassBalanceAndShape) {
  const auto ds = synth_generate(50, 20, SensorSet::parse("AB"), 1, 0.1);
  EXPECT_EQ(ds.size(), 100u);
  EXPECT_EQ(ds.count_label(1), 50u);
  for (const auto& w : ds.windows()) {
    EXPECT_EQ(w.rows(), 4u);
    EXPECT_EQ(w.cols(), 20u);
  }
}

TEST(Synth, SubsetIsSliceOfFullGeneration) {
  const auto full = synth_generate(10, 20, SensorSet::all(), 5, 0.2);
  const auto sub = synth_generate(10, 20, SensorSet::parse("GB"), 5, 0.2);
  EXPECT_EQ(full.slice(SensorSet::parse("GB")).windows(), sub.windows());
}

TEST(Synth, NoiseFreeClassesSeparableByPeakAccelMagnitude) {
  // Threshold oracle: label 1 iff max_t |a_t| > 1.6 g.
  for (std::uint64_t seed : {1ull, 42ull, 2024ull}) {
    const auto ds = synth_generate(200, 20, SensorSet::all(), seed, 0.0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& w = ds.windows()[i];
      double peak = 0;
      for (std::size_t t = 0; t < w.cols(); ++t) {
        peak = std::max(peak, std::sqrt(w(0, t) * w(0, t) + w(1, t) * w(1, t) + w(2, t) * w(2, t)));
      }
      correct += (peak > 1.6 ? 1 : 0) == ds.labels()[i] ? 1 : 0;
    }
    EXPECT_EQ(correct, ds.size()) << "seed " << seed;
  }
}

TEST(Dataset, JsonRoundTrip) {
  const auto ds = normalize(synth_generate(3, 5, SensorSet::parse("AB"), 2, 0.1));
  const auto back = dataset_from_json(dataset_to_json(ds));
  EXPECT_EQ(back.windows(), ds.windows());
  EXPECT_EQ(back.labels(), ds.labels());
  EXPECT_EQ(back.subjects(), ds.subjects());
  EXPECT_EQ(*back.normalization(), *ds.normalization());
  EXPECT_EQ(back.sensor_set(), ds.sensor_set());
}
