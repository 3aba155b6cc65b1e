#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "edgefall/ablation.hpp"
#include "edgefall/data.hpp"
#include "edgefall/errors.hpp"
#include "edgefall/evaluate.hpp"
#include "edgefall/io.hpp"
#include "edgefall/lstm.hpp"
#include "edgefall/parallel.hpp"
#include "edgefall/trainer.hpp"

namespace edgefall {

struct DistillConfig {
  double temperature = 2.0;
  // Weight of the hard-label term; 1 - alpha weights the soft term.
  double alpha = 0.5;
  SensorSet student_sensor_set = SensorSet::all();
  double width_factor = 0.5;
  TrainConfig train;

  void validate() const {
    if (!(temperature > 0.0)) throw ConfigError("distillation temperature must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (!(width_factor > 0.0 && width_factor <= 1.0)) {
      throw ConfigError("width_factor must lie in (0, 1]");
    }
    train.validate();
  }
};

inline ModelTopology student_topology(const ModelTopology& teacher, const DistillConfig& cfg) {
  cfg.validate();
  const auto scale = [&](std::size_t n) {
    return static_cast<std::size_t>(std::llround(cfg.width_factor * static_cast<double>(n)));
  };
  ModelTopology t{cfg.student_sensor_set.channel_count(), scale(teacher.lstm_units),
                  scale(teacher.hidden_units), 1};
  if (t.lstm_units == 0 || t.hidden_units == 0) {
    throw ConfigError("width factor " + io::format_double(cfg.width_factor) +
                      " leaves a layer of teacher " + teacher.summary() + " with zero units");
  }
  return t;
}

// Both the LSTM and the dense hidden layer are scaled by width_factor.
inline LstmClassifier make_student(const ModelTopology& teacher, const DistillConfig& cfg,
                                   std::uint64_t seed) {
  return init_params(student_topology(teacher, cfg), cfg.student_sensor_set, seed);
}

struct KdTerms {
  double loss = 0.0;
  double dlogit = 0.0;  // d(loss)/d(student logit)
};

// alpha * BCE(sigmoid(zs), y) + (1 - alpha) * T^2 * BCE(sigmoid(zs/T), sigmoid(zt/T)).
inline KdTerms kd_terms(double student_logit, double teacher_logit, int y, const DistillConfig& cfg) {
  const double T = cfg.temperature;
  const double p = sigmoid(student_logit);
  const double ps = sigmoid(student_logit / T);
  const double q = sigmoid(teacher_logit / T);
  const double yd = static_cast<double>(y);
  KdTerms out;
  out.loss = cfg.alpha * bce_loss(p, yd) + (1.0 - cfg.alpha) * T * T * bce_loss(ps, q);
  out.dlogit = cfg.alpha * (p - yd) + (1.0 - cfg.alpha) * T * (ps - q);
  return out;
}

inline double kd_loss(double student_logit, double teacher_logit, int y, const DistillConfig& cfg) {
  return kd_terms(student_logit, teacher_logit, y, cfg).loss;
}

// Teacher logits on full-channel windows. The teacher is only read.
inline std::vector<double> teacher_logits(const LstmClassifier& teacher, const WindowedDataset& ds,
                                          std::size_t threads = 1) {
  std::vector<double> z(ds.size());
  parallel_for(ds.size(), threads, [&](std::size_t i) { z[i] = predict_logit(teacher, ds.windows()[i]); });
  return z;
}

// Trains a fresh student (seeded with cfg.train.seed) on the channel slice
// of its sensor set against the frozen teacher's full-channel logits.
inline std::pair<LstmClassifier, TrainLog> distill(const LstmClassifier& teacher,
                                                   const WindowedDataset& train_full,
                                                   const WindowedDataset& test_full,
                                                   const DistillConfig& cfg) {
  cfg.validate();
  if (!cfg.student_sensor_set.is_subset_of(teacher.sensor_set)) {
    throw ConfigError("student sensors " + cfg.student_sensor_set.name() +
                      " are not a subset of teacher sensors " + teacher.sensor_set.name());
  }
  if (train_full.sensor_set() != teacher.sensor_set ||
      (!test_full.empty() && test_full.sensor_set() != teacher.sensor_set)) {
    throw ConfigError("distillation data must carry the teacher's sensors " +
                      teacher.sensor_set.name());
  }
  const auto logits = teacher_logits(teacher, train_full, worker_count());
  const auto train_s = train_full.slice(cfg.student_sensor_set);
  const auto test_s = test_full.slice(cfg.student_sensor_set);
  auto student = make_student(teacher.topology, cfg, cfg.train.seed);
  student.normalization = train_s.normalization();
  const auto& labels = train_s.labels();
  LogitLoss loss = [&](std::size_t idx, double z, double) {
    const auto terms = kd_terms(z, logits[idx], labels[idx], cfg);
    return std::pair{terms.loss, terms.dlogit};
  };
  return fit(std::move(student), train_s, test_s, cfg.train, loss);
}

// ---------------------------------------------------------------------------
// Three-way comparison
// ---------------------------------------------------------------------------

struct ComparisonRow {
  SensorSet sensor_set;
  double big_acc = 0.0;
  double small_acc = 0.0;
  double kd_acc = 0.0;
  double kd_minus_small = 0.0;
  double big_minus_kd = 0.0;
};

// Published reference points for annotating reports: the best distilled
// model (AB) and the envelopes between the three model kinds.
struct ComparisonReference {
  static constexpr double kd_ab_accuracy = 0.8952;
  static constexpr double kd_ab_below_teacher = 0.0276;
  static constexpr double kd_vs_small_envelope = 0.02;
  static constexpr double big_vs_kd_envelope = 0.06;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  ModelTopology teacher_topology;
  ModelTopology student_topology;
  double teacher_accuracy = 0.0;
  std::uint64_t seed = 0;

  std::string to_csv() const {
    std::string out = "sensor_set,big_acc,small_acc,kd_acc,kd_minus_small,big_minus_kd\n";
    for (const auto& r : rows) {
      out += r.sensor_set.name() + "," + io::format_double(r.big_acc) + "," +
             io::format_double(r.small_acc) + "," + io::format_double(r.kd_acc) + "," +
             io::format_double(r.kd_minus_small) + "," + io::format_double(r.big_minus_kd) + "\n";
    }
    return out;
  }

  // x = sensor set, one accuracy series per model kind.
  std::string to_plot_csv() const {
    std::string out = "sensor_set,big,small,kd\n";
    for (const auto& r : rows) {
      out += r.sensor_set.name() + "," + io::format_double(r.big_acc) + "," +
             io::format_double(r.small_acc) + "," + io::format_double(r.kd_acc) + "\n";
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) {
      rows_json.push_back({{"sensor_set", r.sensor_set.name()},
                           {"big_acc", r.big_acc},
                           {"small_acc", r.small_acc},
                           {"kd_acc", r.kd_acc},
                           {"kd_minus_small", r.kd_minus_small},
                           {"big_minus_kd", r.big_minus_kd}});
    }
    return {{"rows", rows_json},
            {"teacher_topology", teacher_topology.summary()},
            {"student_topology_lstm_hidden",
             {student_topology.lstm_units, student_topology.hidden_units}},
            {"teacher_accuracy", teacher_accuracy},
            {"seed", seed},
            {"reference",
             {{"kd_ab_accuracy", ComparisonReference::kd_ab_accuracy},
              {"kd_ab_below_teacher", ComparisonReference::kd_ab_below_teacher},
              {"kd_vs_small_envelope", ComparisonReference::kd_vs_small_envelope},
              {"big_vs_kd_envelope", ComparisonReference::big_vs_kd_envelope}}}};
  }

  std::string to_text() const {
    std::string out = "sensors      big    small       kd  kd-small   big-kd\n";
    char line[160];
    for (const auto& r : rows) {
      std::snprintf(line, sizeof(line), "%-7s  %6.2f%%  %6.2f%%  %6.2f%%  %+7.2f  %+7.2f\n",
                    r.sensor_set.name().c_str(), 100 * r.big_acc, 100 * r.small_acc,
                    100 * r.kd_acc, 100 * r.kd_minus_small, 100 * r.big_minus_kd);
      out += line;
    }
    return out;
  }
};

// For each subset: (a) a teacher-width model, (b) a student-width model
// trained on labels only, (c) a distilled student. Small and distilled
// models share their initialization seed.
inline ComparisonReport compare_three(const LstmClassifier& teacher,
                                      const std::vector<SensorSet>& sensor_sets,
                                      const WindowedDataset& train_full,
                                      const WindowedDataset& test_full, const DistillConfig& base) {
  base.validate();
  ComparisonReport report;
  report.teacher_topology = teacher.topology;
  report.seed = base.train.seed;
  report.teacher_accuracy = evaluate(teacher, test_full).accuracy;
  for (auto s : sensor_sets) {
    try {
      DistillConfig cfg = base;
      cfg.student_sensor_set = s;
      const auto train_s = train_full.slice(s);
      const auto test_s = test_full.slice(s);

      ModelTopology big_t = teacher.topology;
      big_t.input_channels = s.channel_count();
      const auto big = train(init_params(big_t, s, cfg.train.seed), train_s, test_s, cfg.train).first;

      const auto small =
          train(make_student(teacher.topology, cfg, cfg.train.seed), train_s, test_s, cfg.train).first;
      report.student_topology = small.topology;

      const auto kd = distill(teacher, train_full, test_full, cfg).first;

      ComparisonRow row;
      row.sensor_set = s;
      row.big_acc = evaluate(big, test_s).accuracy;
      row.small_acc = evaluate(small, test_s).accuracy;
      row.kd_acc = evaluate(kd, test_s).accuracy;
      row.kd_minus_small = row.kd_acc - row.small_acc;
      row.big_minus_kd = row.big_acc - row.kd_acc;
      report.rows.push_back(row);
    } catch (const Error&) {
      rethrow_with_context("comparison subset " + s.name());
    }
  }
  return report;
}

}  // namespace edgefall
