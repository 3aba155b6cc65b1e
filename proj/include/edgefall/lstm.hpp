#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "edgefall/data.hpp"
#include "edgefall/errors.hpp"
#include "edgefall/io.hpp"
#include "edgefall/sensors.hpp"
#include "edgefall/tensor.hpp"

namespace edgefall {

struct ModelTopology {
  std::size_t input_channels = 7;
  std::size_t lstm_units = 512;
  std::size_t hidden_units = 128;
  std::size_t output_units = 1;

  static ModelTopology teacher(SensorSet sensors = SensorSet::all()) {
    return {sensors.channel_count(), 512, 128, 1};
  }

  void validate() const {
    if (output_units != 1) throw ShapeError("output_units must be 1");
    if (input_channels < 1 || lstm_units < 1 || hidden_units < 1) {
      throw ShapeError("topology sizes must be positive");
    }
  }

  std::string summary() const {
    return std::to_string(input_channels) + "-" + std::to_string(lstm_units) + "-" +
           std::to_string(hidden_units) + "-" + std::to_string(output_units);
  }

  bool operator==(const ModelTopology&) const = default;
};

// Every trainable tensor of the network. Gate blocks are stacked in the
// order [input, forget, cell candidate, output], each `lstm_units` rows.
struct Parameters {
  Matrix w_gates;  // 4h x d
  Matrix u_gates;  // 4h x h
  Vector b_gates;  // 4h
  Matrix w_dense;  // hidden x h
  Vector b_dense;  // hidden
  Matrix w_out;    // 1 x hidden
  Vector b_out;    // 1

  static Parameters zeros(const ModelTopology& t) {
    t.validate();
    const auto h = t.lstm_units;
    return {Matrix(4 * h, t.input_channels), Matrix(4 * h, h), Vector(4 * h),
            Matrix(t.hidden_units, h),       Vector(t.hidden_units), Matrix(1, t.hidden_units),
            Vector(1)};
  }

  static constexpr std::array<const char*, 7> kNames = {
      "W_gates", "U_gates", "b_gates", "W_dense1", "b_dense1", "W_out", "b_out"};

  // Tensors in serialization order, matching kNames.
  std::array<std::span<double>, 7> spans() {
    return {w_gates.values(), u_gates.values(), b_gates.values(), w_dense.values(),
            b_dense.values(), w_out.values(),   b_out.values()};
  }
  std::array<std::span<const double>, 7> spans() const {
    return {w_gates.values(), u_gates.values(), b_gates.values(), w_dense.values(),
            b_dense.values(), w_out.values(),   b_out.values()};
  }

  template <class Fn>
  void for_each(Fn&& fn) {
    auto s = spans();
    for (std::size_t i = 0; i < s.size(); ++i) fn(kNames[i], s[i]);
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    auto s = spans();
    for (std::size_t i = 0; i < s.size(); ++i) fn(kNames[i], s[i]);
  }

  std::size_t count() const {
    std::size_t n = 0;
    for_each([&](const char*, std::span<const double> v) { n += v.size(); });
    return n;
  }

  bool operator==(const Parameters&) const = default;
};

// Gradients have exactly the parameters' shapes.
using Gradients = Parameters;

struct LstmClassifier {
  ModelTopology topology;
  SensorSet sensor_set;
  std::uint64_t seed = 0;
  Parameters params;
  // Input standardization fitted on the training set, if any.
  std::optional<NormalizationStats> normalization;

  void validate() const {
    topology.validate();
    if (topology.input_channels != sensor_set.channel_count()) {
      throw ShapeError("topology has " + std::to_string(topology.input_channels) +
                       " input channels but sensor set " + sensor_set.name() + " has " +
                       std::to_string(sensor_set.channel_count()));
    }
    const auto ref = Parameters::zeros(topology);
    auto shape_ok = [](const Matrix& a, const Matrix& b) {
      return a.rows() == b.rows() && a.cols() == b.cols();
    };
    if (!shape_ok(params.w_gates, ref.w_gates) || !shape_ok(params.u_gates, ref.u_gates) ||
        params.b_gates.size() != ref.b_gates.size() || !shape_ok(params.w_dense, ref.w_dense) ||
        params.b_dense.size() != ref.b_dense.size() || !shape_ok(params.w_out, ref.w_out) ||
        params.b_out.size() != 1) {
      throw ShapeError("parameter shapes do not match topology " + topology.summary());
    }
  }
};

// FNV-1a over topology and parameter bit patterns.
inline std::uint64_t parameter_hash(const LstmClassifier& m) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  mix(m.topology.input_channels);
  mix(m.topology.lstm_units);
  mix(m.topology.hidden_units);
  mix(m.sensor_set.bits());
  m.params.for_each([&](const char*, std::span<const double> v) {
    for (double x : v) mix(std::bit_cast<std::uint64_t>(x));
  });
  return h;
}

inline double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

// Glorot-uniform weights with fans taken from each kernel's (in, out) shape,
// zero biases, forget-gate bias 1.
inline LstmClassifier init_params(const ModelTopology& topology, SensorSet sensors,
                                  std::uint64_t seed) {
  LstmClassifier m{topology, sensors, seed, Parameters::zeros(topology), std::nullopt};
  m.validate();
  std::mt19937_64 rng(seed);
  auto fill = [&](Matrix& w, std::size_t fan_in, std::size_t fan_out) {
    const double lim = glorot_limit(fan_in, fan_out);
    std::uniform_real_distribution<double> dist(-lim, lim);
    for (double& v : w.values()) v = dist(rng);
  };
  const auto h = topology.lstm_units;
  fill(m.params.w_gates, topology.input_channels, 4 * h);
  fill(m.params.u_gates, h, 4 * h);
  fill(m.params.w_dense, h, topology.hidden_units);
  fill(m.params.w_out, topology.hidden_units, 1);
  for (std::size_t k = h; k < 2 * h; ++k) m.params.b_gates[k] = 1.0;
  return m;
}

// Multiply-accumulates of one forward pass over a window of length T.
inline std::uint64_t count_macs(const ModelTopology& t, std::size_t T) {
  const std::uint64_t h = t.lstm_units, d = t.input_channels, hid = t.hidden_units;
  return static_cast<std::uint64_t>(T) * 4 * h * (d + h + 1) + hid * (h + 1) + (hid + 1);
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

struct CellStep {
  Vector h;
  Vector c;
  Vector gates;  // post-activation [i f g o], 4h
};

namespace detail {

// One LSTM step writing into caller-provided buffers.
inline void cell_step(const Parameters& p, std::span<const double> x, std::span<const double> h_prev,
                      std::span<const double> c_prev, std::span<double> gates,
                      std::span<double> c_out, std::span<double> h_out) {
  const std::size_t h = c_out.size();
  std::copy(p.b_gates.begin(), p.b_gates.end(), gates.begin());
  matvec_accumulate(p.w_gates, x, gates);
  matvec_accumulate(p.u_gates, h_prev, gates);
  for (std::size_t k = 0; k < h; ++k) {
    const double i = sigmoid(gates[k]);
    const double f = sigmoid(gates[h + k]);
    const double g = std::tanh(gates[2 * h + k]);
    const double o = sigmoid(gates[3 * h + k]);
    gates[k] = i;
    gates[h + k] = f;
    gates[2 * h + k] = g;
    gates[3 * h + k] = o;
    c_out[k] = f * c_prev[k] + i * g;
    h_out[k] = o * std::tanh(c_out[k]);
  }
}

inline std::uint64_t window_checksum(const Matrix& w) {
  std::uint64_t h = 1469598103934665603ull ^ (w.rows() * 31 + w.cols());
  for (double v : w.values()) {
    h ^= std::bit_cast<std::uint64_t>(v);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

inline CellStep lstm_cell_step(const Parameters& params, const Vector& x, const Vector& h_prev,
                               const Vector& c_prev) {
  const std::size_t h = params.u_gates.cols();
  if (x.size() != params.w_gates.cols()) {
    throw ShapeError("input has " + std::to_string(x.size()) + " channels, cell expects " +
                     std::to_string(params.w_gates.cols()));
  }
  if (h_prev.size() != h || c_prev.size() != h) {
    throw ShapeError("recurrent state size mismatch, expected " + std::to_string(h));
  }
  CellStep s{Vector(h), Vector(h), Vector(4 * h)};
  detail::cell_step(params, x.values(), h_prev.values(), c_prev.values(), s.gates.values(),
                    s.c.values(), s.h.values());
  return s;
}

// Activations cached by forward for backpropagation through time.
struct ForwardTrace {
  Matrix gates;   // T x 4h, post-activation
  Matrix cell;    // T x h
  Matrix hidden;  // T x h
  Vector dense_pre;
  Vector dense_act;
  double logit = 0.0;
  double probability = 0.5;
  std::uint64_t window_checksum = 0;

  std::size_t length() const { return gates.rows(); }
};

inline void check_window(const LstmClassifier& m, const Matrix& window) {
  if (window.rows() != m.topology.input_channels) {
    throw ShapeError("window has " + std::to_string(window.rows()) + " channels, model expects " +
                     std::to_string(m.topology.input_channels));
  }
}

// Runs the cell from zero state over every column of `window`
// (channels x T), then dense-ReLU and dense-sigmoid on the last hidden state.
inline std::pair<double, ForwardTrace> forward(const LstmClassifier& m, const Matrix& window) {
  check_window(m, window);
  const auto& p = m.params;
  const std::size_t T = window.cols(), h = m.topology.lstm_units, d = window.rows();

  ForwardTrace tr{Matrix(T, 4 * h), Matrix(T, h), Matrix(T, h), Vector(m.topology.hidden_units),
                  Vector(m.topology.hidden_units)};
  const std::vector<double> zeros(h, 0.0);
  std::vector<double> x(d);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < d; ++c) x[c] = window(c, t);
    const std::span<const double> h_prev = t == 0 ? std::span<const double>(zeros) : tr.hidden.row(t - 1);
    const std::span<const double> c_prev = t == 0 ? std::span<const double>(zeros) : tr.cell.row(t - 1);
    detail::cell_step(p, x, h_prev, c_prev, tr.gates.row(t), tr.cell.row(t), tr.hidden.row(t));
  }

  std::copy(p.b_dense.begin(), p.b_dense.end(), tr.dense_pre.begin());
  matvec_accumulate(p.w_dense, tr.hidden.row(T - 1), tr.dense_pre.values());
  for (std::size_t k = 0; k < tr.dense_pre.size(); ++k) tr.dense_act[k] = relu(tr.dense_pre[k]);
  double z = p.b_out[0];
  const auto w = p.w_out.row(0);
  for (std::size_t k = 0; k < w.size(); ++k) z += w[k] * tr.dense_act[k];
  tr.logit = z;
  tr.probability = sigmoid(z);
  tr.window_checksum = detail::window_checksum(window);
  return {tr.probability, std::move(tr)};
}

inline double predict_logit(const LstmClassifier& m, const Matrix& window) {
  return forward(m, window).second.logit;
}

// 1 ("Fall") iff probability >= threshold; ties go to Fall.
inline int predict_label(const LstmClassifier& m, const Matrix& window, double threshold = 0.5) {
  return forward(m, window).first >= threshold ? 1 : 0;
}

// Maps a raw window into the model's input space using its stored
// normalization (if any).
inline Matrix prepare_window(const LstmClassifier& m, const Matrix& raw) {
  check_window(m, raw);
  if (!m.normalization) return raw;
  Matrix w = raw;
  const auto& s = *m.normalization;
  for (std::size_t c = 0; c < w.rows(); ++c) {
    for (double& v : w.row(c)) v = (v - s.mean[c]) / s.std[c];
  }
  return w;
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols,
                               const char* name) {
  if (!j.is_array() || j.size() != rows) {
    throw ShapeInconsistencyError(std::string(name) + ": expected " + std::to_string(rows) +
                                  " rows");
  }
  std::vector<double> flat;
  flat.reserve(rows * cols);
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != cols) {
      throw ShapeInconsistencyError(std::string(name) + ": expected rows of " +
                                    std::to_string(cols) + " values");
    }
    for (const auto& v : row) flat.push_back(v.get<double>());
  }
  return Matrix::from_values(rows, cols, std::move(flat));
}

inline Vector vector_from_json(const nlohmann::json& j, std::size_t len, const char* name) {
  if (!j.is_array() || j.size() != len) {
    throw ShapeInconsistencyError(std::string(name) + ": expected " + std::to_string(len) +
                                  " values");
  }
  return Vector(j.get<std::vector<double>>());
}

}  // namespace detail

inline nlohmann::json model_to_json(const LstmClassifier& m) {
  m.validate();
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["topology"] = {{"input_channels", m.topology.input_channels},
                   {"lstm_units", m.topology.lstm_units},
                   {"hidden_units", m.topology.hidden_units},
                   {"output_units", m.topology.output_units}};
  j["sensor_set"] = m.sensor_set.name();
  j["channels"] = m.sensor_set.channel_names();
  j["seed"] = m.seed;
  j["gate_order"] = "ifgo";
  const auto& p = m.params;
  j["weights"] = {{"W_gates", detail::matrix_json(p.w_gates)},
                  {"U_gates", detail::matrix_json(p.u_gates)},
                  {"b_gates", std::vector<double>(p.b_gates.begin(), p.b_gates.end())},
                  {"W_dense1", detail::matrix_json(p.w_dense)},
                  {"b_dense1", std::vector<double>(p.b_dense.begin(), p.b_dense.end())},
                  {"W_out", detail::matrix_json(p.w_out)},
                  {"b_out", std::vector<double>(p.b_out.begin(), p.b_out.end())}};
  if (m.normalization) {
    j["normalization"] = {{"mean", m.normalization->mean}, {"std", m.normalization->std}};
  }
  return j;
}

inline LstmClassifier model_from_json(const nlohmann::json& j) {
  try {
    if (!j.contains("format_version")) throw LoadError("model file lacks format_version");
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw VersionMismatchError("model format version " + std::to_string(version) +
                                 ", expected " + std::to_string(kModelFormatVersion));
    }
    const auto& jt = j.at("topology");
    ModelTopology t{jt.at("input_channels").get<std::size_t>(), jt.at("lstm_units").get<std::size_t>(),
                    jt.at("hidden_units").get<std::size_t>(), jt.at("output_units").get<std::size_t>()};
    if (t.output_units != 1 || t.input_channels < 1 || t.lstm_units < 1 || t.hidden_units < 1) {
      throw ShapeInconsistencyError("invalid topology " + t.summary());
    }
    SensorSet sensors;
    try {
      sensors = SensorSet::parse(j.at("sensor_set").get<std::string>());
    } catch (const ConfigError& e) {
      throw LoadError(std::string("bad sensor_set: ") + e.what());
    }
    if (sensors.channel_count() != t.input_channels) {
      throw ShapeInconsistencyError("sensor set " + sensors.name() + " has " +
                                    std::to_string(sensors.channel_count()) +
                                    " channels but topology declares " +
                                    std::to_string(t.input_channels));
    }
    if (j.contains("gate_order") && j["gate_order"] != "ifgo") {
      throw LoadError("unsupported gate order " + j["gate_order"].dump());
    }
    const auto& w = j.at("weights");
    const auto h = t.lstm_units;
    LstmClassifier m;
    m.topology = t;
    m.sensor_set = sensors;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.params = Parameters{
        detail::matrix_from_json(w.at("W_gates"), 4 * h, t.input_channels, "W_gates"),
        detail::matrix_from_json(w.at("U_gates"), 4 * h, h, "U_gates"),
        detail::vector_from_json(w.at("b_gates"), 4 * h, "b_gates"),
        detail::matrix_from_json(w.at("W_dense1"), t.hidden_units, h, "W_dense1"),
        detail::vector_from_json(w.at("b_dense1"), t.hidden_units, "b_dense1"),
        detail::matrix_from_json(w.at("W_out"), 1, t.hidden_units, "W_out"),
        detail::vector_from_json(w.at("b_out"), 1, "b_out")};
    if (j.contains("normalization")) {
      NormalizationStats s{j["normalization"].at("mean").get<std::vector<double>>(),
                           j["normalization"].at("std").get<std::vector<double>>()};
      if (s.mean.size() != t.input_channels || s.std.size() != t.input_channels) {
        throw ShapeInconsistencyError("normalization stats do not match input channels");
      }
      m.normalization = std::move(s);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed model file: ") + e.what());
  }
}

inline void save_model(const LstmClassifier& m, const std::filesystem::path& path) {
  io::write_file_atomic(path, model_to_json(m).dump() + "\n");
}

inline LstmClassifier load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw LoadError("model file not found: " + path.string());
  const std::string text = io::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw TruncatedFileError("model file " + path.string() + " is truncated or corrupt: " +
                             e.what());
  }
  return model_from_json(j);
}

}  // namespace edgefall
