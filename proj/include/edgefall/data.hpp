#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "edgefall/config.hpp"
#include "edgefall/errors.hpp"
#include "edgefall/io.hpp"
#include "edgefall/sensors.hpp"
#include "edgefall/tensor.hpp"

namespace edgefall {

// ---------------------------------------------------------------------------
// Recordings
// ---------------------------------------------------------------------------

struct SensorStream {
  SensorKind kind = SensorKind::Accelerometer;
  double sampling_rate_hz = 1.0;
  // One sample sequence per channel of `kind`, all of equal length.
  std::vector<std::vector<double>> channels;

  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
};

struct Recording {
  int subject_id = 0;
  int activity_code = 0;
  int trial = 0;
  std::string placement = "wrist";
  std::string source;
  std::vector<SensorStream> streams;

  const SensorStream* find(SensorKind k) const {
    for (const auto& s : streams) {
      if (s.kind == k) return &s;
    }
    return nullptr;
  }

  // Sensors present in the recording. Throws if there are none.
  SensorSet available() const {
    std::uint8_t bits = 0;
    for (const auto& s : streams) bits |= static_cast<std::uint8_t>(1u << static_cast<unsigned>(s.kind));
    if (bits == 0) throw SchemaError("recording " + source + " has no sensor streams");
    return SensorSet::from_bits(bits);
  }
};

struct AlignedRecording {
  SensorSet sensors;
  Matrix data;  // channels x N, canonical channel order
};

// Upsamples slower streams to `target_rate_hz` by holding the last value.
// The target must be the fastest rate among the recording's streams.
inline AlignedRecording align_streams(const Recording& r, double target_rate_hz) {
  if (r.streams.empty()) throw AlignmentError("recording " + r.source + " has no streams");
  double fastest = 0.0;
  for (const auto& s : r.streams) {
    if (s.length() == 0) {
      throw AlignmentError("empty " + std::string(sensor_name(s.kind)) + " stream in " + r.source);
    }
    if (!(s.sampling_rate_hz > 0.0)) {
      throw AlignmentError("non-positive sampling rate in " + r.source);
    }
    for (const auto& ch : s.channels) {
      if (ch.size() != s.length()) {
        throw AlignmentError("unequal channel lengths within " +
                             std::string(sensor_name(s.kind)) + " in " + r.source);
      }
    }
    fastest = std::max(fastest, s.sampling_rate_hz);
  }
  if (std::abs(target_rate_hz - fastest) > 1e-9 * fastest) {
    throw AlignmentError("target rate " + io::format_double(target_rate_hz) +
                         " Hz differs from fastest stream rate " + io::format_double(fastest) +
                         " Hz");
  }

  auto source_index = [&](const SensorStream& s, std::size_t n) {
    const double pos = static_cast<double>(n) * s.sampling_rate_hz / target_rate_hz;
    return static_cast<std::size_t>(std::floor(pos + 1e-9));
  };

  // Output length: every stream must still have a sample to hold.
  std::size_t n_out = SIZE_MAX;
  for (const auto& s : r.streams) {
    const double ratio = target_rate_hz / s.sampling_rate_hz;
    const auto covered = static_cast<std::size_t>(
        std::ceil(static_cast<double>(s.length()) * ratio - 1e-9));
    n_out = std::min(n_out, covered);
  }

  const SensorSet sensors = r.available();
  Matrix out(sensors.channel_count(), n_out);
  std::size_t row = 0;
  for (auto kind : kSensorOrder) {
    const SensorStream* s = r.find(kind);
    if (s == nullptr) continue;
    for (const auto& ch : s->channels) {
      for (std::size_t n = 0; n < n_out; ++n) {
        out(row, n) = ch[std::min(source_index(*s, n), ch.size() - 1)];
      }
      ++row;
    }
  }
  return {sensors, std::move(out)};
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

// Optional sidecar `schema.cfg` in the dataset root:
//   absent_sensors = B          sensors with no columns in the CSVs
//   rate.accelerometer = 238    sampling rates; derived from `t` otherwise
struct IngestSchema {
  std::uint8_t absent_bits = 0;
  std::optional<double> rate[3];

  static IngestSchema from_config(const KeyValueConfig& cfg) {
    IngestSchema schema;
    const auto absent = cfg.get_string("absent_sensors");
    if (!absent.empty()) schema.absent_bits = SensorSet::parse(absent).bits();
    for (auto k : kSensorOrder) {
      const auto key = "rate." + std::string(sensor_name(k));
      if (cfg.has(key)) {
        const double r = cfg.get_double(key, 0.0);
        if (!(r > 0.0)) throw ConfigError(key + " must be positive");
        schema.rate[static_cast<int>(k)] = r;
      }
    }
    return schema;
  }

  bool absent(SensorKind k) const {
    return (absent_bits >> static_cast<unsigned>(k)) & 1u;
  }
};

struct IngestResult {
  std::vector<Recording> recordings;
  std::size_t skipped_placement = 0;
  std::size_t skipped_unrecognized = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.remove_prefix(1);
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t' || c.back() == '\r')) c.remove_suffix(1);
  }
  return cells;
}

inline Recording parse_recording_csv(const std::filesystem::path& path, std::string_view text,
                                     const IngestSchema& schema) {
  const std::string where = path.filename().string();
  std::vector<std::string_view> lines;
  {
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string_view::npos) nl = text.size();
      lines.push_back(text.substr(pos, nl - pos));
      pos = nl + 1;
    }
  }
  if (lines.empty()) throw SchemaError(where + ": missing header row");

  const auto header = split_csv_line(lines[0]);
  auto column_of = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto t_col = column_of("t");
  if (!t_col) throw SchemaError(where + ": missing required column t");

  struct Group {
    SensorKind kind;
    std::vector<std::size_t> cols;
    std::vector<std::vector<double>> values;
  };
  std::vector<Group> groups;
  for (auto kind : kSensorOrder) {
    if (schema.absent(kind)) continue;
    Group g{kind, {}, std::vector<std::vector<double>>(channel_count(kind))};
    for (std::size_t c = 0; c < channel_count(kind); ++c) {
      const auto name = kChannelNames[channel_offset(kind) + c];
      auto col = column_of(name);
      if (!col) {
        throw SchemaError(where + ": missing required column " + std::string(name) + " (" +
                          std::string(sensor_name(kind)) + ")");
      }
      g.cols.push_back(*col);
    }
    groups.push_back(std::move(g));
  }
  if (groups.empty()) throw SchemaError(where + ": schema declares every sensor absent");

  std::vector<double> times;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    auto line = lines[li];
    while (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    const std::string loc = where + ":" + std::to_string(li + 1);
    if (cells.size() != header.size()) {
      throw ParseError(loc + ": expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(cells.size()));
    }
    double t = 0;
    if (!io::parse_double(cells[*t_col], t)) throw ParseError(loc + ": non-numeric t");
    times.push_back(t);
    for (auto& g : groups) {
      std::size_t present = 0;
      for (auto col : g.cols) present += cells[col].empty() ? 0 : 1;
      if (present == 0) continue;
      if (present != g.cols.size()) {
        throw ParseError(loc + ": partial " + std::string(sensor_name(g.kind)) + " sample");
      }
      for (std::size_t c = 0; c < g.cols.size(); ++c) {
        double v = 0;
        if (!io::parse_double(cells[g.cols[c]], v) || !std::isfinite(v)) {
          throw ParseError(loc + ": non-numeric value in column " + std::string(header[g.cols[c]]));
        }
        g.values[c].push_back(v);
      }
    }
  }

  // Row rate from the time column; rows are the fastest sensor's clock.
  double row_rate = 1.0;
  if (times.size() >= 2 && times.back() > times.front()) {
    row_rate = static_cast<double>(times.size() - 1) / (times.back() - times.front());
  }

  Recording rec;
  rec.source = where;
  for (auto& g : groups) {
    SensorStream s;
    s.kind = g.kind;
    s.channels = std::move(g.values);
    if (s.length() == 0) {
      throw SchemaError(where + ": no samples for " + std::string(sensor_name(g.kind)));
    }
    const auto& declared = schema.rate[static_cast<int>(g.kind)];
    s.sampling_rate_hz = declared ? *declared
                                  : row_rate * static_cast<double>(s.length()) /
                                        static_cast<double>(times.size());
    rec.streams.push_back(std::move(s));
  }
  return rec;
}

}  // namespace detail

// Reads every `S<subject>_A<activity>_T<trial>_<placement>.csv` under `root`.
// Only wrist recordings are kept; everything else is counted and skipped.
inline IngestResult ingest_csv(const std::filesystem::path& root, const IngestSchema& schema) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
  static const std::regex pattern(R"(S(\d+)_A(\d+)_T(\d+)_([A-Za-z]+)\.csv)");

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  IngestResult result;
  for (const auto& path : files) {
    const auto name = path.filename().string();
    std::smatch m;
    if (!std::regex_match(name, m, pattern)) {
      ++result.skipped_unrecognized;
      result.warnings.push_back("unrecognized file name " + name);
      continue;
    }
    std::string placement = m[4].str();
    std::transform(placement.begin(), placement.end(), placement.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (placement != "wrist") {
      ++result.skipped_placement;
      continue;
    }
    Recording rec = detail::parse_recording_csv(path, io::read_file(path), schema);
    rec.subject_id = std::stoi(m[1].str());
    rec.activity_code = std::stoi(m[2].str());
    rec.trial = std::stoi(m[3].str());
    rec.placement = placement;
    result.recordings.push_back(std::move(rec));
  }
  if (result.skipped_placement > 0) {
    result.warnings.push_back("skipped " + std::to_string(result.skipped_placement) +
                              " non-wrist recording(s)");
  }
  if (files.empty()) result.warnings.push_back("no CSV files in " + root.string());
  return result;
}

inline IngestResult ingest_csv(const std::filesystem::path& root) {
  const auto sidecar = root / "schema.cfg";
  IngestSchema schema;
  if (std::filesystem::exists(sidecar)) schema = IngestSchema::from_config(KeyValueConfig::load(sidecar));
  return ingest_csv(root, schema);
}

// ---------------------------------------------------------------------------
// Windowed datasets
// ---------------------------------------------------------------------------

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> std;

  bool operator==(const NormalizationStats&) const = default;

  // Restricts full-layout stats to a subset of channels.
  NormalizationStats select(const std::vector<std::size_t>& idx) const {
    NormalizationStats out;
    for (auto i : idx) {
      out.mean.push_back(mean.at(i));
      out.std.push_back(std.at(i));
    }
    return out;
  }
};

inline constexpr double kStdFloor = 1e-8;

// Fixed-length multi-channel windows with binary labels. Immutable once
// built; transformations return new datasets.
class WindowedDataset {
 public:
  WindowedDataset(SensorSet sensors, std::size_t window_len, std::vector<Matrix> windows,
                  std::vector<int> labels, std::vector<int> subjects = {},
                  std::optional<NormalizationStats> normalization = std::nullopt)
      : sensors_(sensors),
        window_len_(window_len),
        windows_(std::move(windows)),
        labels_(std::move(labels)),
        subjects_(std::move(subjects)),
        normalization_(std::move(normalization)) {
    if (window_len_ == 0) throw ShapeError("window length must be positive");
    if (subjects_.empty()) subjects_.assign(windows_.size(), 0);
    if (labels_.size() != windows_.size() || subjects_.size() != windows_.size()) {
      throw ShapeError("dataset has " + std::to_string(windows_.size()) + " windows but " +
                       std::to_string(labels_.size()) + " labels and " +
                       std::to_string(subjects_.size()) + " subject ids");
    }
    const auto ch = sensors_.channel_count();
    for (const auto& w : windows_) {
      if (w.rows() != ch || w.cols() != window_len_) {
        throw ShapeError("window shape " + w.shape() + " does not match " +
                         Matrix::shape_string(ch, window_len_));
      }
    }
    for (int y : labels_) {
      if (y != 0 && y != 1) throw DataError("label must be 0 or 1, got " + std::to_string(y));
    }
    if (normalization_ && (normalization_->mean.size() != ch || normalization_->std.size() != ch)) {
      throw ShapeError("normalization stats do not match channel count");
    }
  }

  SensorSet sensor_set() const { return sensors_; }
  std::size_t window_len() const { return window_len_; }
  std::size_t channel_count() const { return sensors_.channel_count(); }
  std::size_t size() const { return windows_.size(); }
  bool empty() const { return windows_.empty(); }

  const std::vector<Matrix>& windows() const { return windows_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<int>& subjects() const { return subjects_; }
  const std::optional<NormalizationStats>& normalization() const { return normalization_; }

  std::size_t count_label(int y) const {
    return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), y));
  }

  WindowedDataset subset(const std::vector<std::size_t>& idx) const {
    std::vector<Matrix> w;
    std::vector<int> y, s;
    w.reserve(idx.size());
    for (auto i : idx) {
      w.push_back(windows_.at(i));
      y.push_back(labels_[i]);
      s.push_back(subjects_[i]);
    }
    return {sensors_, window_len_, std::move(w), std::move(y), std::move(s), normalization_};
  }

  // Keeps only the channels of `sub`, preserving canonical order.
  WindowedDataset slice(SensorSet sub) const {
    if (sub == sensors_) return *this;
    const auto idx = sensors_.channel_indices_of(sub);
    std::vector<Matrix> w;
    w.reserve(windows_.size());
    for (const auto& src : windows_) w.push_back(slice_window(src, idx));
    std::optional<NormalizationStats> stats;
    if (normalization_) stats = normalization_->select(idx);
    return {sub, window_len_, std::move(w), labels_, subjects_, std::move(stats)};
  }

  static Matrix slice_window(const Matrix& src, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), src.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto from = src.row(rows[r]);
      std::copy(from.begin(), from.end(), out.row(r).begin());
    }
    return out;
  }

 private:
  SensorSet sensors_;
  std::size_t window_len_;
  std::vector<Matrix> windows_;
  std::vector<int> labels_;
  std::vector<int> subjects_;
  std::optional<NormalizationStats> normalization_;
};

struct WindowingResult {
  WindowedDataset dataset;
  std::size_t skipped_short = 0;
};

// Sliding windows of length T with the given stride. A window is labelled 1
// iff its recording's activity code is in `fall_codes`.
inline WindowingResult window_and_label(const std::vector<Recording>& recordings, SensorSet sensors,
                                        std::size_t T, std::size_t stride,
                                        const std::set<int>& fall_codes) {
  if (T < 2) throw ConfigError("window length must be at least 2");
  if (stride < 1 || stride > T) throw ConfigError("stride must be in [1, window length]");
  if (fall_codes.empty()) throw ConfigError("fall code set is empty");

  std::vector<Matrix> windows;
  std::vector<int> labels, subjects;
  std::size_t skipped = 0;
  for (const auto& rec : recordings) {
    if (!sensors.is_subset_of(rec.available())) {
      throw SchemaError("recording " + rec.source + " lacks sensors required by " + sensors.name());
    }
    double fastest = 0.0;
    for (const auto& s : rec.streams) fastest = std::max(fastest, s.sampling_rate_hz);
    const auto aligned = align_streams(rec, fastest);
    const auto rows = aligned.sensors.channel_indices_of(sensors);
    const std::size_t n = aligned.data.cols();
    if (n < T) {
      ++skipped;
      continue;
    }
    const int label = fall_codes.count(rec.activity_code) ? 1 : 0;
    for (std::size_t start = 0; start + T <= n; start += stride) {
      Matrix w(rows.size(), T);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t t = 0; t < T; ++t) w(r, t) = aligned.data(rows[r], start + t);
      }
      windows.push_back(std::move(w));
      labels.push_back(label);
      subjects.push_back(rec.subject_id);
    }
  }
  return {WindowedDataset(sensors, T, std::move(windows), std::move(labels), std::move(subjects)),
          skipped};
}

inline NormalizationStats compute_stats(const WindowedDataset& ds) {
  const auto ch = ds.channel_count();
  NormalizationStats stats{std::vector<double>(ch, 0.0), std::vector<double>(ch, 0.0)};
  if (ds.empty()) {
    std::fill(stats.std.begin(), stats.std.end(), 1.0);
    return stats;
  }
  const double count = static_cast<double>(ds.size() * ds.window_len());
  for (std::size_t c = 0; c < ch; ++c) {
    double sum = 0.0;
    for (const auto& w : ds.windows()) {
      for (double v : w.row(c)) sum += v;
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (const auto& w : ds.windows()) {
      for (double v : w.row(c)) sq += (v - mean) * (v - mean);
    }
    stats.mean[c] = mean;
    stats.std[c] = std::max(std::sqrt(sq / count), kStdFloor);
  }
  return stats;
}

// Per-channel z-score with population std (floored at 1e-8). Without stats,
// they are computed from `ds`. The dataset records the raw->current mapping,
// so normalizing an already-normalized dataset first undoes the old stats;
// reapplying the same stats is a no-op.
inline WindowedDataset normalize(const WindowedDataset& ds,
                                 const std::optional<NormalizationStats>& stats = std::nullopt) {
  if (stats && ds.normalization() && *stats == *ds.normalization()) return ds;

  std::vector<Matrix> raw = ds.windows();
  if (const auto& prev = ds.normalization()) {
    for (auto& w : raw) {
      for (std::size_t c = 0; c < w.rows(); ++c) {
        for (double& v : w.row(c)) v = v * prev->std[c] + prev->mean[c];
      }
    }
  }
  WindowedDataset raw_ds(ds.sensor_set(), ds.window_len(), std::move(raw), ds.labels(),
                         ds.subjects());
  NormalizationStats use = stats ? *stats : compute_stats(raw_ds);
  if (use.mean.size() != ds.channel_count() || use.std.size() != ds.channel_count()) {
    throw ShapeError("normalization stats have " + std::to_string(use.mean.size()) +
                     " channels, dataset has " + std::to_string(ds.channel_count()));
  }
  for (auto& s : use.std) s = std::max(s, kStdFloor);

  std::vector<Matrix> out = raw_ds.windows();
  for (auto& w : out) {
    for (std::size_t c = 0; c < w.rows(); ++c) {
      for (double& v : w.row(c)) v = (v - use.mean[c]) / use.std[c];
    }
  }
  return {ds.sensor_set(), ds.window_len(), std::move(out), ds.labels(), ds.subjects(),
          std::move(use)};
}

// ---------------------------------------------------------------------------
// Train/test split
// ---------------------------------------------------------------------------

enum class SplitMode { Random, SubjectHoldout };

struct SplitSpec {
  SplitMode mode = SplitMode::SubjectHoldout;
  double test_fraction = 0.25;
  // Explicit held-out subjects. When empty in subject mode, a seeded 20% of
  // the subjects present is held out (3 of 15 for a full wrist dataset).
  std::vector<int> holdout_subjects;
  std::uint64_t seed = 42;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline SplitIndices split_indices(const WindowedDataset& ds, const SplitSpec& spec) {
  SplitIndices out;
  std::mt19937_64 rng(spec.seed);
  if (spec.mode == SplitMode::Random) {
    if (!(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0)) {
      throw ConfigError("test fraction must be in [0, 1)");
    }
    std::vector<std::size_t> perm(ds.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto n_test = static_cast<std::size_t>(
        std::llround(spec.test_fraction * static_cast<double>(ds.size())));
    out.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  } else {
    std::set<int> present(ds.subjects().begin(), ds.subjects().end());
    std::set<int> held;
    if (spec.holdout_subjects.empty()) {
      std::vector<int> subjects(present.begin(), present.end());
      if (subjects.size() < 2) throw ConfigError("subject holdout needs at least 2 subjects");
      std::shuffle(subjects.begin(), subjects.end(), rng);
      const auto k = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(subjects.size()))), 1,
          subjects.size() - 1);
      held.insert(subjects.begin(), subjects.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
      for (int s : spec.holdout_subjects) {
        if (!present.count(s)) {
          throw ConfigError("held-out subject " + std::to_string(s) + " not present in data");
        }
        held.insert(s);
      }
      if (held.size() == present.size()) throw ConfigError("every subject is held out");
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
      (held.count(ds.subjects()[i]) ? out.test : out.train).push_back(i);
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

inline std::pair<WindowedDataset, WindowedDataset> split(const WindowedDataset& ds,
                                                         const SplitSpec& spec) {
  const auto idx = split_indices(ds, spec);
  return {ds.subset(idx.train), ds.subset(idx.test)};
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

// Noise level at which classes overlap noticeably; the "hard" benchmark.
// Single-sensor models drop to roughly 75-90% here.
inline constexpr double kHardNoiseStd = 1.5;
inline constexpr int kSyntheticSubjects = 15;

// Falls: a short high-magnitude accelerometer spike, a gyroscope burst
// around the impact, and a monotone pressure step. ADLs: low-amplitude
// periodic motion. Sensors not in `informative` carry the ADL pattern for
// both classes, so they hold no label information.
// Windows alternate ADL, fall, ADL, ...; subject ids cycle through 1..15.
inline WindowedDataset synth_generate(std::size_t n_per_class, std::size_t T, SensorSet sensors,
                                      std::uint64_t seed, double noise_std,
                                      SensorSet informative = SensorSet::all()) {
  if (n_per_class < 1) throw ConfigError("n_per_class must be at least 1");
  if (T < 2) throw ConfigError("window length must be at least 2");
  if (noise_std < 0.0) throw ConfigError("noise_std must be non-negative");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  constexpr double kTwoPi = 6.283185307179586;
  const double Td = static_cast<double>(T);

  auto periodic = [&](Matrix& w, std::size_t row0, std::size_t rows, double base_z, double amp_lo,
                      double amp_hi) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double amp = uniform(amp_lo, amp_hi);
      const double freq = uniform(0.05, 0.2);
      const double phase = uniform(0.0, kTwoPi);
      const double base = (r == 2) ? base_z : 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        w(row0 + r, t) = base + amp * std::sin(kTwoPi * freq * static_cast<double>(t) + phase);
      }
    }
  };

  const auto idx = sensors.full_channel_indices();
  std::vector<Matrix> windows;
  std::vector<int> labels, subjects;
  windows.reserve(2 * n_per_class);

  for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    Matrix full(kFullChannelCount, T);
    const bool fall = label == 1;

    // Accelerometer, in g. Gravity on z for ADLs.
    if (fall && informative.contains(SensorKind::Accelerometer)) {
      const auto impact = static_cast<std::size_t>(uniform(0.25 * Td, 0.75 * Td));
      const double mag = uniform(3.0, 4.0);
      double dir[3] = {gauss(rng), gauss(rng), gauss(rng)};
      const double norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]) + 1e-12;
      for (std::size_t t = 0; t < T; ++t) {
        // Upright before the impact, lying (gravity on x) after.
        const bool after = t > impact;
        full(0, t) = after ? 1.0 : 0.0;
        full(2, t) = after ? 0.0 : 1.0;
        for (int a = 0; a < 3; ++a) full(a, t) += uniform(-0.05, 0.05);
      }
      for (int a = 0; a < 3; ++a) {
        full(a, impact) += mag * dir[a] / norm;
        if (impact + 1 < T) full(a, impact + 1) += 0.5 * mag * dir[a] / norm;
      }
    } else {
      periodic(full, 0, 3, 1.0, 0.05, 0.3);
    }

    // Gyroscope, rad/s.
    if (fall && informative.contains(SensorKind::Gyroscope)) {
      const auto impact = static_cast<std::size_t>(uniform(0.25 * Td, 0.75 * Td));
      periodic(full, 3, 3, 0.0, 0.05, 0.2);
      for (std::size_t r = 3; r < 6; ++r) {
        const double amp = uniform(2.0, 4.0) * (unit(rng) < 0.5 ? -1.0 : 1.0);
        for (std::size_t t = impact > 0 ? impact - 1 : 0; t <= std::min(impact + 1, T - 1); ++t) {
          full(r, t) += amp * (t == impact ? 1.0 : 0.5);
        }
      }
    } else {
      periodic(full, 3, 3, 0.0, 0.1, 0.5);
    }

    // Barometer, relative pressure. A fall raises pressure by roughly one
    // unit over two samples.
    if (fall && informative.contains(SensorKind::Barometer)) {
      const auto impact = static_cast<std::size_t>(uniform(0.25 * Td, 0.75 * Td));
      const double step = uniform(0.8, 1.2);
      for (std::size_t t = 0; t < T; ++t) {
        double v = 0.0;
        if (t >= impact + 1) v = step;
        else if (t == impact) v = 0.5 * step;
        full(6, t) = v;
      }
    } else {
      const double amp = uniform(0.0, 0.1);
      const double phase = uniform(0.0, kTwoPi);
      for (std::size_t t = 0; t < T; ++t) {
        full(6, t) = amp * std::sin(kTwoPi * 0.02 * static_cast<double>(t) + phase);
      }
    }

    if (noise_std > 0.0) {
      for (double& v : full.values()) v += noise_std * gauss(rng);
    }

    windows.push_back(WindowedDataset::slice_window(full, idx));
    labels.push_back(label);
    subjects.push_back(static_cast<int>((i / 2) % kSyntheticSubjects) + 1);
  }
  return {sensors, T, std::move(windows), std::move(labels), std::move(subjects)};
}

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------

inline constexpr int kDatasetFormatVersion = 1;

inline nlohmann::json dataset_to_json(const WindowedDataset& ds) {
  nlohmann::json j;
  j["format_version"] = kDatasetFormatVersion;
  j["sensor_set"] = ds.sensor_set().name();
  j["window_len"] = ds.window_len();
  j["labels"] = ds.labels();
  j["subjects"] = ds.subjects();
  auto& windows = j["windows"] = nlohmann::json::array();
  for (const auto& w : ds.windows()) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < w.rows(); ++r) {
      rows.push_back(std::vector<double>(w.row(r).begin(), w.row(r).end()));
    }
    windows.push_back(std::move(rows));
  }
  if (ds.normalization()) {
    j["normalization"] = {{"mean", ds.normalization()->mean}, {"std", ds.normalization()->std}};
  }
  return j;
}

inline WindowedDataset dataset_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kDatasetFormatVersion) {
      throw DataError("unsupported dataset format version");
    }
    const auto sensors = SensorSet::parse(j.at("sensor_set").get<std::string>());
    const auto T = j.at("window_len").get<std::size_t>();
    std::vector<Matrix> windows;
    for (const auto& jw : j.at("windows")) {
      std::vector<double> flat;
      for (const auto& row : jw) {
        auto r = row.get<std::vector<double>>();
        if (r.size() != T) throw ShapeError("dataset window row length mismatch");
        flat.insert(flat.end(), r.begin(), r.end());
      }
      windows.push_back(Matrix::from_values(jw.size(), T, std::move(flat)));
    }
    std::optional<NormalizationStats> stats;
    if (j.contains("normalization")) {
      stats = NormalizationStats{j["normalization"].at("mean").get<std::vector<double>>(),
                                 j["normalization"].at("std").get<std::vector<double>>()};
    }
    return {sensors, T, std::move(windows), j.at("labels").get<std::vector<int>>(),
            j.at("subjects").get<std::vector<int>>(), std::move(stats)};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed dataset file: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("malformed dataset file: ") + e.what());
  }
}

inline void save_dataset(const WindowedDataset& ds, const std::filesystem::path& path) {
  io::write_file_atomic(path, dataset_to_json(ds).dump() + "\n");
}

inline WindowedDataset load_dataset(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("cannot parse dataset " + path.string() + ": " + e.what());
  }
  return dataset_from_json(j);
}

}  // namespace edgefall
