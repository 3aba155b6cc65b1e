#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "edgefall/data.hpp"
#include "edgefall/errors.hpp"
#include "edgefall/io.hpp"
#include "edgefall/lstm.hpp"
#include "edgefall/parallel.hpp"
#include "edgefall/tensor.hpp"

namespace edgefall {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 42;
  bool shuffle = true;
  // 0 picks worker_count(). Results do not depend on this value.
  std::size_t threads = 0;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
      throw ConfigError("Adam betas must lie in (0, 1)");
    }
    if (!(grad_clip_norm > 0.0)) throw ConfigError("grad_clip_norm must be positive");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;

  std::string to_csv(bool include_timing = true) const {
    std::string out = include_timing ? "epoch,loss,train_acc,test_acc,seconds\n"
                                     : "epoch,loss,train_acc,test_acc\n";
    for (const auto& e : epochs) {
      out += std::to_string(e.epoch) + "," + io::format_double(e.loss) + "," +
             io::format_double(e.train_acc) + "," + io::format_double(e.test_acc);
      if (include_timing) out += "," + io::format_double(e.seconds);
      out += "\n";
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

inline constexpr double kProbEpsilon = 1e-12;

// Binary cross-entropy with p clamped to [eps, 1 - eps]. `target` may be a
// soft label in [0, 1].
inline double bce_loss(double p, double target) {
  const double q = std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
  return -(target * std::log(q) + (1.0 - target) * std::log(1.0 - q));
}

// ---------------------------------------------------------------------------
// Backpropagation through time
// ---------------------------------------------------------------------------

// Adds d(loss)/d(params) to `grad`, given d(loss)/d(logit) for a window whose
// forward pass produced `trace`.
inline void accumulate_backward(const LstmClassifier& m, const Matrix& window,
                                const ForwardTrace& trace, double dlogit, Gradients& grad) {
  check_window(m, window);
  const std::size_t T = window.cols();
  if (trace.length() != T || trace.window_checksum != detail::window_checksum(window) ||
      trace.cell.cols() != m.topology.lstm_units) {
    throw DataError("forward trace does not belong to this model and window");
  }
  const auto& p = m.params;
  const std::size_t h = m.topology.lstm_units, H = m.topology.hidden_units, d = window.rows();

  // Output and dense layers.
  grad.b_out[0] += dlogit;
  auto gw_out = grad.w_out.row(0);
  const auto w_out = p.w_out.row(0);
  std::vector<double> d_dense(H);
  for (std::size_t k = 0; k < H; ++k) {
    gw_out[k] += dlogit * trace.dense_act[k];
    d_dense[k] = trace.dense_pre[k] > 0.0 ? dlogit * w_out[k] : 0.0;
    grad.b_dense[k] += d_dense[k];
  }
  add_outer(grad.w_dense, d_dense, trace.hidden.row(T - 1));

  std::vector<double> dh(h, 0.0), dc(h, 0.0), dgates(4 * h), x(d);
  matvec_transposed_accumulate(p.w_dense, d_dense, dh);
  const std::vector<double> zeros(h, 0.0);

  for (std::size_t step = T; step-- > 0;) {
    const auto gates = trace.gates.row(step);
    const auto c_t = trace.cell.row(step);
    const std::span<const double> c_prev = step == 0 ? std::span<const double>(zeros) : trace.cell.row(step - 1);
    const std::span<const double> h_prev = step == 0 ? std::span<const double>(zeros) : trace.hidden.row(step - 1);
    for (std::size_t k = 0; k < h; ++k) {
      const double i = gates[k], f = gates[h + k], g = gates[2 * h + k], o = gates[3 * h + k];
      const double tc = std::tanh(c_t[k]);
      dc[k] += dh[k] * o * (1.0 - tc * tc);
      const double d_o = dh[k] * tc;
      const double d_i = dc[k] * g;
      const double d_g = dc[k] * i;
      const double d_f = dc[k] * c_prev[k];
      dgates[k] = d_i * i * (1.0 - i);
      dgates[h + k] = d_f * f * (1.0 - f);
      dgates[2 * h + k] = d_g * (1.0 - g * g);
      dgates[3 * h + k] = d_o * o * (1.0 - o);
      dc[k] *= f;
    }
    for (std::size_t c = 0; c < d; ++c) x[c] = window(c, step);
    for (std::size_t k = 0; k < 4 * h; ++k) grad.b_gates[k] += dgates[k];
    add_outer(grad.w_gates, dgates, x);
    add_outer(grad.u_gates, dgates, h_prev);
    std::fill(dh.begin(), dh.end(), 0.0);
    matvec_transposed_accumulate(p.u_gates, dgates, dh);
  }
}

// Exact gradient of bce_loss(forward(window), y) over all T steps.
inline std::pair<double, Gradients> backward(const LstmClassifier& m, const Matrix& window, int y,
                                             const ForwardTrace& trace) {
  Gradients g = Parameters::zeros(m.topology);
  const double p = trace.probability;
  accumulate_backward(m, window, trace, p - static_cast<double>(y), g);
  return {bce_loss(p, static_cast<double>(y)), std::move(g)};
}

inline double global_norm(const Gradients& g) {
  double sq = 0.0;
  g.for_each([&](const char*, std::span<const double> v) {
    for (double x : v) sq += x * x;
  });
  return std::sqrt(sq);
}

// Rescales `g` so its global L2 norm is at most `max_norm`. Returns the norm
// before clipping.
inline double clip_gradients(Gradients& g, double max_norm) {
  const double norm = global_norm(g);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    g.for_each([&](const char*, std::span<double> v) {
      for (double& x : v) x *= scale;
    });
  }
  return norm;
}

class AdamOptimizer {
 public:
  AdamOptimizer(const ModelTopology& t, const TrainConfig& cfg)
      : cfg_(cfg), m_(Parameters::zeros(t)), v_(Parameters::zeros(t)) {}

  void step(Parameters& params, const Gradients& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto p = params.spans();
    const auto g = grad.spans();
    auto m = m_.spans();
    auto v = v_.spans();
    for (std::size_t k = 0; k < p.size(); ++k) {
      for (std::size_t i = 0; i < p[k].size(); ++i) {
        m[k][i] = cfg_.beta1 * m[k][i] + (1.0 - cfg_.beta1) * g[k][i];
        v[k][i] = cfg_.beta2 * v[k][i] + (1.0 - cfg_.beta2) * g[k][i] * g[k][i];
        const double mhat = m[k][i] / c1;
        const double vhat = v[k][i] / c2;
        p[k][i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.adam_epsilon);
      }
    }
  }

 private:
  TrainConfig cfg_;
  Parameters m_;
  Parameters v_;
  std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Batched gradients
// ---------------------------------------------------------------------------

// Loss on one window given the model's logit and probability. Returns the
// loss value and its derivative with respect to the logit.
using LogitLoss = std::function<std::pair<double, double>(std::size_t index, double logit, double prob)>;

inline LogitLoss bce_logit_loss(const std::vector<int>& labels) {
  return [&labels](std::size_t index, double, double prob) {
    const double y = static_cast<double>(labels[index]);
    return std::pair{bce_loss(prob, y), prob - y};
  };
}

struct BatchResult {
  double mean_loss = 0.0;
  Gradients grad;
  std::size_t correct = 0;  // labels matched at threshold 0.5, pre-update
};

// A batch is cut into this many contiguous chunks, each summed in index
// order; chunk sums are then added in chunk order. The chunk count is fixed
// so the floating-point result is independent of the thread count.
inline constexpr std::size_t kReductionChunks = 4;

inline BatchResult batch_gradient(const LstmClassifier& m, const std::vector<Matrix>& windows,
                                  const std::vector<int>& labels,
                                  std::span<const std::size_t> batch, const LogitLoss& loss,
                                  std::size_t threads = 1) {
  const std::size_t n = batch.size();
  if (n == 0) throw ConfigError("empty batch");
  const std::size_t chunks = std::min(kReductionChunks, n);
  std::vector<Gradients> partial(chunks, Parameters::zeros(m.topology));
  std::vector<double> losses(n, 0.0);
  std::vector<std::size_t> correct(n, 0);

  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * n / chunks, hi = (c + 1) * n / chunks;
    for (std::size_t j = lo; j < hi; ++j) {
      const std::size_t idx = batch[j];
      const auto [prob, trace] = forward(m, windows[idx]);
      const auto [l, dz] = loss(idx, trace.logit, prob);
      losses[j] = l;
      correct[j] = (prob >= 0.5 ? 1 : 0) == labels[idx] ? 1 : 0;
      accumulate_backward(m, windows[idx], trace, dz, partial[c]);
    }
  });

  BatchResult out{0.0, std::move(partial[0]), 0};
  for (std::size_t c = 1; c < chunks; ++c) {
    auto dst = out.grad.spans();
    const auto src = partial[c].spans();
    for (std::size_t k = 0; k < dst.size(); ++k) {
      for (std::size_t i = 0; i < dst[k].size(); ++i) dst[k][i] += src[k][i];
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.grad.for_each([&](const char*, std::span<double> v) {
    for (double& x : v) x *= inv;
  });
  for (std::size_t j = 0; j < n; ++j) {
    out.mean_loss += losses[j];
    out.correct += correct[j];
  }
  out.mean_loss *= inv;
  return out;
}

inline double accuracy(const LstmClassifier& m, const WindowedDataset& ds, std::size_t threads = 1) {
  if (ds.empty()) return 0.0;
  std::vector<int> hit(ds.size(), 0);
  parallel_for(ds.size(), threads, [&](std::size_t i) {
    hit[i] = predict_label(m, ds.windows()[i]) == ds.labels()[i] ? 1 : 0;
  });
  return static_cast<double>(std::accumulate(hit.begin(), hit.end(), 0)) /
         static_cast<double>(ds.size());
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t resolve_threads(const TrainConfig& cfg, const LstmClassifier& m) {
  if (cfg.threads > 0) return cfg.threads;
  // Thread start-up costs more than a tiny model's batch.
  if (m.params.count() * cfg.batch_size < 200000) return 1;
  return worker_count();
}

}  // namespace detail

// Adam on mean-reduced batch gradients with global-norm clipping. Training
// accuracy is accumulated from the pre-update predictions of each batch.
// Returns the parameters of the epoch with the best test accuracy (first
// one on ties); with an empty test set, training accuracy decides.
inline std::pair<LstmClassifier, TrainLog> fit(LstmClassifier model, const WindowedDataset& train_ds,
                                               const WindowedDataset& test_ds,
                                               const TrainConfig& cfg, const LogitLoss& loss) {
  cfg.validate();
  if (train_ds.empty()) throw ConfigError("training set is empty");
  if (train_ds.sensor_set() != model.sensor_set) {
    throw ConfigError("training data sensors " + train_ds.sensor_set().name() +
                      " do not match model sensors " + model.sensor_set.name());
  }
  if (!test_ds.empty() && test_ds.sensor_set() != model.sensor_set) {
    throw ConfigError("test data sensors do not match model sensors");
  }
  const std::size_t threads = detail::resolve_threads(cfg, model);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_ds.size());
  std::iota(order.begin(), order.end(), 0);
  AdamOptimizer adam(model.topology, cfg);

  TrainLog log;
  LstmClassifier best = model;
  double best_acc = -1.0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_no = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size, ++batch_no) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - b);
      const std::span<const std::size_t> batch(order.data() + b, len);
      auto result = batch_gradient(model, train_ds.windows(), train_ds.labels(), batch, loss, threads);
      if (!std::isfinite(result.mean_loss) || !std::isfinite(global_norm(result.grad))) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_no) + " (loss " +
                             io::format_double(result.mean_loss) + ")");
      }
      clip_gradients(result.grad, cfg.grad_clip_norm);
      adam.step(model.params, result.grad);
      loss_sum += result.mean_loss * static_cast<double>(len);
      correct += result.correct;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(train_ds.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train_ds.size());
    rec.test_acc = test_ds.empty() ? rec.train_acc : accuracy(model, test_ds, threads);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.epochs.push_back(rec);
    if (rec.test_acc > best_acc) {
      best_acc = rec.test_acc;
      best = model;
      log.best_epoch = epoch;
    }
  }
  return {std::move(best), std::move(log)};
}

inline std::pair<LstmClassifier, TrainLog> train(const LstmClassifier& model,
                                                 const WindowedDataset& train_ds,
                                                 const WindowedDataset& test_ds,
                                                 const TrainConfig& cfg) {
  return fit(model, train_ds, test_ds, cfg, bce_logit_loss(train_ds.labels()));
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

struct TensorCheck {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = true;

  // Name of the worst failing tensor, empty when the check passed.
  std::string failing_tensor() const {
    std::string worst;
    double err = -1.0;
    for (const auto& t : tensors) {
      if (!t.passed && t.max_rel_error > err) {
        err = t.max_rel_error;
        worst = t.name;
      }
    }
    return worst;
  }
};

// |a - n| / max(|a|, |n|, floor); the floor keeps exactly-zero gradients
// from producing 0/0.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares `analytic` against central differences of the BCE loss.
inline GradCheckReport compare_with_finite_differences(const LstmClassifier& model,
                                                       const Matrix& window, int y,
                                                       const Gradients& analytic, double delta,
                                                       double tolerance) {
  GradCheckReport report;
  report.tolerance = tolerance;
  LstmClassifier probe = model;
  auto loss_at = [&] { return bce_loss(forward(probe, window).first, static_cast<double>(y)); };
  auto params = probe.params.spans();
  const auto grads = analytic.spans();
  for (std::size_t k = 0; k < params.size(); ++k) {
    TensorCheck tc{Parameters::kNames[k], 0.0, true};
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double saved = params[k][i];
      params[k][i] = saved + delta;
      const double up = loss_at();
      params[k][i] = saved - delta;
      const double down = loss_at();
      params[k][i] = saved;
      const double numeric = (up - down) / (2.0 * delta);
      double err = relative_error(grads[k][i], numeric);
      if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
      tc.max_rel_error = std::max(tc.max_rel_error, err);
    }
    tc.passed = tc.max_rel_error < tolerance;
    report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
    report.passed = report.passed && tc.passed;
    report.tensors.push_back(std::move(tc));
  }
  return report;
}

// Checks backward() on one window. Intended for tiny models: the cost is
// two forward passes per parameter.
inline GradCheckReport grad_check(const LstmClassifier& model, const Matrix& window, int y,
                                  double delta = 1e-5, double tolerance = 1e-4) {
  const auto [p, trace] = forward(model, window);
  const auto [loss, grads] = backward(model, window, y, trace);
  return compare_with_finite_differences(model, window, y, grads, delta, tolerance);
}

}  // namespace edgefall
