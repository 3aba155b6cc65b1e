#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "edgefall/data.hpp"
#include "edgefall/errors.hpp"
#include "edgefall/evaluate.hpp"
#include "edgefall/io.hpp"
#include "edgefall/lstm.hpp"
#include "edgefall/parallel.hpp"
#include "edgefall/trainer.hpp"

namespace edgefall {

// Published wrist-device accuracies per sensor combination, kept for
// side-by-side display only.
inline const std::map<std::string, double>& published_ablation_accuracy() {
  static const std::map<std::string, double> table = {
      {"ABG", 0.9355}, {"AG", 0.8237}, {"BG", 0.8943}, {"AB", 0.9228},
      {"A", 0.8039},   {"G", 0.7918},  {"B", 0.8809}};
  return table;
}

// Prefixes an in-flight toolkit error with `context`, keeping its family so
// exit codes survive.
[[noreturn]] inline void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const ConfigError& e) {
    throw ConfigError(context + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(context + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(context + ": " + e.what());
  }
}

struct AblationRow {
  SensorSet sensor_set;
  std::uint64_t seed = 0;
  EvalReport report;
  TrainLog log;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::uint64_t seed = 0;
  std::string config_fingerprint;

  std::string to_csv() const {
    std::string out = "sensors,accuracy\n";
    for (const auto& r : rows) out += r.sensor_set.name() + "," + io::format_double(r.report.accuracy) + "\n";
    return out;
  }

  std::string to_text() const {
    std::string out = "sensors  accuracy  published   TP   FP   TN   FN\n";
    char line[160];
    for (const auto& r : rows) {
      const auto& pub = published_ablation_accuracy();
      const auto it = pub.find(r.sensor_set.name());
      const auto& c = r.report.confusion;
      std::snprintf(line, sizeof(line), "%-7s  %7.2f%%  %8.2f%%  %4zu %4zu %4zu %4zu\n",
                    r.sensor_set.name().c_str(), 100.0 * r.report.accuracy,
                    it == pub.end() ? 0.0 : 100.0 * it->second, c.tp, c.fp, c.tn, c.fn);
      out += line;
    }
    return out;
  }
};

inline std::string fingerprint(const TrainConfig& cfg, const ModelTopology& t) {
  const std::string text =
      std::to_string(cfg.epochs) + "|" + std::to_string(cfg.batch_size) + "|" +
      io::format_double(cfg.learning_rate) + "|" + io::format_double(cfg.beta1) + "|" +
      io::format_double(cfg.beta2) + "|" + io::format_double(cfg.grad_clip_norm) + "|" +
      std::to_string(cfg.shuffle) + "|" + std::to_string(t.lstm_units) + "|" +
      std::to_string(t.hidden_units);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Canonical position of a subset in all_sensor_sets(); used to derive
// per-subset seeds that do not depend on which subsets were requested.
inline std::size_t canonical_index(SensorSet s) {
  const auto all = all_sensor_sets();
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i] == s) return i;
  }
  return 0;
}

// Trains an independent model per subset on channel-sliced data. Each
// subset uses seed + its canonical index for both initialization and
// shuffling. `lstm_units`/`hidden_units` come from `width`.
inline AblationTable run_ablation(const WindowedDataset& train_full, const WindowedDataset& test_full,
                                  const ModelTopology& width, const TrainConfig& base_cfg,
                                  std::uint64_t seed,
                                  std::vector<SensorSet> subsets = all_sensor_sets()) {
  if (train_full.sensor_set() != test_full.sensor_set()) {
    throw ConfigError("train and test sets carry different sensors");
  }
  for (auto s : subsets) {
    if (!s.is_subset_of(train_full.sensor_set())) {
      throw ConfigError("subset " + s.name() + " not available in data with sensors " +
                        train_full.sensor_set().name());
    }
  }
  AblationTable table;
  table.seed = seed;
  table.config_fingerprint = fingerprint(base_cfg, width);
  table.rows.resize(subsets.size());

  const std::size_t outer = std::min(worker_count(), subsets.size());
  parallel_for(subsets.size(), outer, [&](std::size_t i) {
    const SensorSet s = subsets[i];
    try {
      TrainConfig cfg = base_cfg;
      cfg.seed = seed + canonical_index(s);
      if (outer > 1) cfg.threads = 1;
      const auto train_s = train_full.slice(s);
      const auto test_s = test_full.slice(s);
      ModelTopology t = width;
      t.input_channels = s.channel_count();
      auto model = init_params(t, s, cfg.seed);
      auto [trained, log] = train(model, train_s, test_s, cfg);
      table.rows[i] = AblationRow{s, cfg.seed, evaluate(trained, test_s), std::move(log)};
    } catch (const Error&) {
      rethrow_with_context("ablation subset " + s.name());
    }
  });
  return table;
}

}  // namespace edgefall
