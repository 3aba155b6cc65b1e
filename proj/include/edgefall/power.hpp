#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "edgefall/config.hpp"
#include "edgefall/data.hpp"
#include "edgefall/distill.hpp"
#include "edgefall/errors.hpp"
#include "edgefall/evaluate.hpp"
#include "edgefall/io.hpp"
#include "edgefall/lstm.hpp"
#include "edgefall/sensors.hpp"

namespace edgefall {

// Operating point of each sensor, indexed by SensorKind. Currents default to
// the datasheet values for MPU-6500 (accelerometer, gyroscope) and BMP280
// (barometer). Voltage and duty cycle are deployment settings.
struct SensorPowerSpec {
  std::array<double, 3> current_a = {450e-6, 0.6e-3, 3.2e-3};
  std::array<double, 3> voltage_v = {3.3, 3.3, 3.3};
  std::array<double, 3> duty_cycle = {1.0, 1.0, 1.0};

  void validate() const {
    for (auto k : kSensorOrder) {
      const auto i = static_cast<std::size_t>(k);
      if (!(current_a[i] > 0.0)) throw ConfigError(std::string(sensor_name(k)) + " current must be positive");
      if (!(voltage_v[i] > 0.0)) throw ConfigError(std::string(sensor_name(k)) + " voltage must be positive");
      if (!(duty_cycle[i] > 0.0 && duty_cycle[i] <= 1.0)) {
        throw ConfigError(std::string(sensor_name(k)) + " duty cycle must lie in (0, 1]");
      }
    }
  }

  double sensor_mw(SensorKind k) const {
    const auto i = static_cast<std::size_t>(k);
    return voltage_v[i] * current_a[i] * duty_cycle[i] * 1000.0;
  }

  // Keys: power.voltage, power.voltage.<sensor>, power.current.<sensor>,
  // power.duty.<sensor>, with <sensor> one of accelerometer, gyroscope,
  // barometer.
  static SensorPowerSpec from_config(const KeyValueConfig& cfg) {
    SensorPowerSpec s;
    const double v = cfg.get_double("power.voltage", 3.3);
    for (auto k : kSensorOrder) {
      const auto i = static_cast<std::size_t>(k);
      const std::string name(sensor_name(k));
      s.voltage_v[i] = cfg.get_double("power.voltage." + name, v);
      s.current_a[i] = cfg.get_double("power.current." + name, s.current_a[i]);
      s.duty_cycle[i] = cfg.get_double("power.duty." + name, s.duty_cycle[i]);
    }
    s.validate();
    return s;
  }
};

// Controller energy as energy-per-MAC times MAC rate. The default energy is
// a placeholder to be calibrated for the target controller. A zero
// inference rate drops the compute term.
struct ComputePowerSpec {
  double energy_per_mac_j = 1e-10;
  double inference_rate_hz = 1.0;

  void validate() const {
    if (!(energy_per_mac_j >= 0.0) || !(inference_rate_hz >= 0.0)) {
      throw ConfigError("compute power parameters must be non-negative");
    }
  }

  static ComputePowerSpec from_config(const KeyValueConfig& cfg) {
    ComputePowerSpec c;
    c.energy_per_mac_j = cfg.get_double("power.energy_per_mac", c.energy_per_mac_j);
    c.inference_rate_hz = cfg.get_double("power.inference_rate_hz", c.inference_rate_hz);
    c.validate();
    return c;
  }
};

// Average power in milliwatts: sensors' V * I * duty plus the compute term.
inline double estimate_power(SensorSet sensors, const ModelTopology& topology, std::size_t T,
                             const SensorPowerSpec& sensor_spec, const ComputePowerSpec& compute) {
  double mw = 0.0;
  for (auto k : kSensorOrder) {
    if (sensors.contains(k)) mw += sensor_spec.sensor_mw(k);
  }
  mw += compute.energy_per_mac_j * static_cast<double>(count_macs(topology, T)) *
        compute.inference_rate_hz * 1000.0;
  return mw;
}

struct CandidateConfig {
  SensorSet sensor_set;
  ModelTopology topology;
  std::size_t window_len = 20;
  double accuracy = 0.0;
  double power_mw = 0.0;
};

// True if `a` should be chosen over `b` among feasible candidates: lower
// power, then higher accuracy, then fewer sensors, then sensor name.
inline bool preferred(const CandidateConfig& a, const CandidateConfig& b) {
  if (a.power_mw != b.power_mw) return a.power_mw < b.power_mw;
  if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
  if (a.sensor_set.sensor_count() != b.sensor_set.sensor_count()) {
    return a.sensor_set.sensor_count() < b.sensor_set.sensor_count();
  }
  return a.sensor_set.name() < b.sensor_set.name();
}

// Indices of candidates no other candidate dominates. b dominates a when it
// is at least as accurate and at most as power-hungry, and strictly better
// in one of the two.
inline std::vector<std::size_t> pareto_front(const std::vector<CandidateConfig>& c) {
  std::vector<std::size_t> idx(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) idx[i] = i;
  // Sweep by power ascending (accuracy descending on ties); a candidate
  // survives iff it beats every accuracy seen at strictly lower power.
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (c[a].power_mw != c[b].power_mw) return c[a].power_mw < c[b].power_mw;
    return c[a].accuracy > c[b].accuracy;
  });
  std::vector<std::size_t> front;
  double best_acc = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  while (i < idx.size()) {
    // Group of equal power.
    std::size_t j = i;
    while (j < idx.size() && c[idx[j]].power_mw == c[idx[i]].power_mw) ++j;
    const double group_best = c[idx[i]].accuracy;
    for (std::size_t k = i; k < j; ++k) {
      const double acc = c[idx[k]].accuracy;
      if (acc == group_best && acc > best_acc) front.push_back(idx[k]);
    }
    best_acc = std::max(best_acc, group_best);
    i = j;
  }
  std::sort(front.begin(), front.end());
  return front;
}

struct SkippedSubset {
  SensorSet sensor_set;
  std::string reason;
};

struct SelectionReport {
  std::vector<CandidateConfig> candidates;
  double accuracy_floor = 0.0;
  std::optional<std::size_t> chosen;  // index into candidates
  std::vector<std::size_t> pareto;    // indices into candidates
  std::vector<SkippedSubset> skipped;
  nlohmann::json provenance = nlohmann::json::object();

  const CandidateConfig* chosen_config() const {
    return chosen ? &candidates[*chosen] : nullptr;
  }

  nlohmann::json to_json() const {
    auto cand = [](const CandidateConfig& c) {
      return nlohmann::json{{"sensor_set", c.sensor_set.name()},
                            {"lstm_units", c.topology.lstm_units},
                            {"hidden_units", c.topology.hidden_units},
                            {"input_channels", c.topology.input_channels},
                            {"window_len", c.window_len},
                            {"accuracy", c.accuracy},
                            {"power_mw", c.power_mw}};
    };
    nlohmann::json all = nlohmann::json::array();
    for (const auto& c : candidates) all.push_back(cand(c));
    nlohmann::json front = nlohmann::json::array();
    for (auto i : pareto) front.push_back(candidates[i].sensor_set.name());
    nlohmann::json skipped_json = nlohmann::json::array();
    for (const auto& s : skipped) skipped_json.push_back({{"sensor_set", s.sensor_set.name()}, {"reason", s.reason}});
    return {{"accuracy_floor", accuracy_floor},
            {"candidates", all},
            {"chosen", chosen ? cand(candidates[*chosen]) : nlohmann::json(nullptr)},
            {"pareto_front", front},
            {"skipped", skipped_json},
            {"provenance", provenance}};
  }

  std::string to_text() const {
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return candidates[a].power_mw < candidates[b].power_mw;
    });
    std::string out = "sensors  lstm  hidden  accuracy    power_mw  pareto  chosen\n";
    char line[160];
    for (auto i : order) {
      const auto& c = candidates[i];
      const bool on_front = std::find(pareto.begin(), pareto.end(), i) != pareto.end();
      std::snprintf(line, sizeof(line), "%-7s  %4zu  %6zu  %7.2f%%  %10.4f  %6s  %6s\n",
                    c.sensor_set.name().c_str(), c.topology.lstm_units, c.topology.hidden_units,
                    100 * c.accuracy, c.power_mw, on_front ? "yes" : "", chosen == i ? "<==" : "");
      out += line;
    }
    char tail[96];
    std::snprintf(tail, sizeof(tail), "accuracy floor %.2f%%: %s\n", 100 * accuracy_floor,
                  chosen ? candidates[*chosen].sensor_set.name().c_str() : "no candidate qualifies");
    return out + tail;
  }
};

// Lowest-power candidate with accuracy >= floor (ties per preferred()).
inline SelectionReport select(std::vector<CandidateConfig> candidates, double accuracy_floor) {
  if (candidates.empty()) throw ConfigError("selection needs at least one candidate");
  SelectionReport r;
  r.candidates = std::move(candidates);
  r.accuracy_floor = accuracy_floor;
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    if (r.candidates[i].accuracy < accuracy_floor) continue;
    if (!r.chosen || preferred(r.candidates[i], r.candidates[*r.chosen])) r.chosen = i;
  }
  r.pareto = pareto_front(r.candidates);
  return r;
}

// For every subset: distill a student from `teacher`, evaluate it, price it.
// Subsets whose training fails are recorded and skipped.
inline SelectionReport run_selection_loop(const LstmClassifier& teacher,
                                          const WindowedDataset& train_full,
                                          const WindowedDataset& test_full,
                                          const std::vector<SensorSet>& subsets,
                                          const DistillConfig& distill_cfg,
                                          const SensorPowerSpec& sensor_spec,
                                          const ComputePowerSpec& compute, double accuracy_floor) {
  sensor_spec.validate();
  compute.validate();
  std::vector<CandidateConfig> candidates;
  std::vector<SkippedSubset> skipped;
  nlohmann::json per_subset = nlohmann::json::array();
  for (auto s : subsets) {
    DistillConfig cfg = distill_cfg;
    cfg.student_sensor_set = s;
    try {
      auto [student, log] = distill(teacher, train_full, test_full, cfg);
      const auto test_s = test_full.slice(s);
      const auto report = evaluate(student, test_s);
      CandidateConfig c{s, student.topology, train_full.window_len(), report.accuracy,
                        estimate_power(s, student.topology, train_full.window_len(), sensor_spec, compute)};
      candidates.push_back(c);
      per_subset.push_back({{"sensor_set", s.name()},
                            {"seed", cfg.train.seed},
                            {"best_epoch", log.best_epoch},
                            {"macs", count_macs(student.topology, train_full.window_len())}});
    } catch (const Error& e) {
      skipped.push_back({s, e.what()});
    }
  }
  if (candidates.empty()) throw NumericalError("every subset failed to train");
  auto report = select(std::move(candidates), accuracy_floor);
  report.skipped = std::move(skipped);
  report.provenance = {{"teacher_topology", teacher.topology.summary()},
                       {"teacher_seed", teacher.seed},
                       {"temperature", distill_cfg.temperature},
                       {"alpha", distill_cfg.alpha},
                       {"width_factor", distill_cfg.width_factor},
                       {"train_seed", distill_cfg.train.seed},
                       {"epochs", distill_cfg.train.epochs},
                       {"subsets", per_subset}};
  return report;
}

}  // namespace edgefall
