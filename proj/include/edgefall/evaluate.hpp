#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <sys/utsname.h>

#include <json.hpp>

#include "edgefall/data.hpp"
#include "edgefall/errors.hpp"
#include "edgefall/lstm.hpp"
#include "edgefall/parallel.hpp"

namespace edgefall {

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const Confusion&) const = default;
};

struct EvalReport {
  double accuracy = 0.0;
  Confusion confusion;
  std::size_t n_windows = 0;
  SensorSet sensor_set;
  ModelTopology topology;

  // accuracy == (TP + TN) / n exactly, and the counts add up.
  bool consistent() const {
    return confusion.total() == n_windows && n_windows > 0 &&
           accuracy == static_cast<double>(confusion.tp + confusion.tn) /
                           static_cast<double>(n_windows);
  }
};

inline EvalReport evaluate(const LstmClassifier& model, const WindowedDataset& test_ds,
                           double threshold = 0.5, std::size_t threads = 1) {
  if (test_ds.empty()) throw DataError("cannot evaluate on an empty test set");
  if (test_ds.sensor_set() != model.sensor_set) {
    throw ConfigError("test data sensors " + test_ds.sensor_set().name() +
                      " do not match model sensors " + model.sensor_set.name());
  }
  std::vector<int> predicted(test_ds.size());
  parallel_for(test_ds.size(), threads, [&](std::size_t i) {
    predicted[i] = predict_label(model, test_ds.windows()[i], threshold);
  });
  EvalReport r;
  r.n_windows = test_ds.size();
  r.sensor_set = model.sensor_set;
  r.topology = model.topology;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const int y = test_ds.labels()[i];
    if (predicted[i] == 1) {
      (y == 1 ? r.confusion.tp : r.confusion.fp) += 1;
    } else {
      (y == 0 ? r.confusion.tn : r.confusion.fn) += 1;
    }
  }
  r.accuracy = static_cast<double>(r.confusion.tp + r.confusion.tn) / static_cast<double>(r.n_windows);
  return r;
}

// ---------------------------------------------------------------------------
// Latency
// ---------------------------------------------------------------------------

struct LatencyStats {
  double min_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  bool operator==(const LatencyStats&) const = default;
};

// Median averages the two middle samples for even counts; p95 is the
// nearest-rank percentile.
inline LatencyStats latency_stats(std::vector<double> trials_ms) {
  if (trials_ms.empty()) throw ConfigError("no latency samples");
  std::sort(trials_ms.begin(), trials_ms.end());
  const std::size_t n = trials_ms.size();
  LatencyStats s;
  s.min_ms = trials_ms.front();
  s.median_ms = n % 2 == 1 ? trials_ms[n / 2] : 0.5 * (trials_ms[n / 2 - 1] + trials_ms[n / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95_ms = trials_ms[std::clamp<std::size_t>(rank, 1, n) - 1];
  return s;
}

struct LatencyReport {
  std::size_t window_len = 0;
  std::size_t n_trials = 0;
  std::size_t warmup = 0;
  std::vector<double> trials_ms;
  LatencyStats stats;
  std::uint64_t macs = 0;
  ModelTopology topology;
  std::string machine;

  bool consistent() const {
    return trials_ms.size() == n_trials && latency_stats(trials_ms) == stats;
  }

  nlohmann::json to_json() const {
    return {{"window_len", window_len},
            {"n_trials", n_trials},
            {"warmup", warmup},
            {"trials_ms", trials_ms},
            {"min_ms", stats.min_ms},
            {"median_ms", stats.median_ms},
            {"p95_ms", stats.p95_ms},
            {"macs", macs},
            {"topology",
             {{"input_channels", topology.input_channels},
              {"lstm_units", topology.lstm_units},
              {"hidden_units", topology.hidden_units},
              {"output_units", topology.output_units}}},
            {"machine", machine}};
  }
};

inline std::string machine_descriptor() {
  std::string out;
  utsname u{};
  if (::uname(&u) == 0) {
    out = std::string(u.sysname) + " " + u.release + " " + u.machine;
  } else {
    out = "unknown";
  }
  return out + ", " + std::to_string(std::thread::hardware_concurrency()) + " hw threads";
}

inline constexpr std::size_t kLatencyWarmup = 5;
inline constexpr std::size_t kMinLatencyTrials = 30;

// Times single-threaded forward passes on one fixed random window.
inline LatencyReport bench_latency(const LstmClassifier& model, std::size_t window_len,
                                   std::size_t n_trials, std::uint64_t seed = 0) {
  if (n_trials < kMinLatencyTrials) {
    throw ConfigError("latency benchmark needs at least " + std::to_string(kMinLatencyTrials) +
                      " trials");
  }
  if (window_len < 1) throw ConfigError("window length must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix window(model.topology.input_channels, window_len);
  for (double& v : window.values()) v = gauss(rng);

  volatile double sink = 0.0;
  for (std::size_t i = 0; i < kLatencyWarmup; ++i) sink = sink + forward(model, window).first;

  LatencyReport r;
  r.window_len = window_len;
  r.n_trials = n_trials;
  r.warmup = kLatencyWarmup;
  r.topology = model.topology;
  r.macs = count_macs(model.topology, window_len);
  r.machine = machine_descriptor();
  r.trials_ms.reserve(n_trials);
  for (std::size_t i = 0; i < n_trials; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    sink = sink + forward(model, window).first;
    const auto t1 = std::chrono::steady_clock::now();
    r.trials_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  r.stats = latency_stats(r.trials_ms);
  return r;
}

}  // namespace edgefall
