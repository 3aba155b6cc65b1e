#pragma once

// Independent reference implementations used only by tests. Nothing here
// calls into the library's forward/backward/select code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <tuple>
#include <random>
#include <vector>

#include "edgefall/edgefall.hpp"

namespace edgefall::oracle {

using Mat = std::vector<std::vector<double>>;

struct ScalarNet {
  std::size_t d = 0, h = 0, hidden = 0;
  // Per gate g in {i, f, c, o}: W[g][k][j], U[g][k][j], b[g][k].
  Mat W[4], U[4];
  std::vector<double> b[4];
  Mat W1;
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;
};

inline Mat to_rows(const Matrix& m, std::size_t row0, std::size_t n) {
  Mat out(n, std::vector<double>(m.cols()));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m.values()[(row0 + r) * m.cols() + c];
  }
  return out;
}

inline ScalarNet from_model(const LstmClassifier& m) {
  ScalarNet n;
  n.d = m.topology.input_channels;
  n.h = m.topology.lstm_units;
  n.hidden = m.topology.hidden_units;
  for (int g = 0; g < 4; ++g) {
    n.W[g] = to_rows(m.params.w_gates, g * n.h, n.h);
    n.U[g] = to_rows(m.params.u_gates, g * n.h, n.h);
    n.b[g].assign(m.params.b_gates.begin() + static_cast<long>(g * n.h),
                  m.params.b_gates.begin() + static_cast<long>((g + 1) * n.h));
  }
  n.W1 = to_rows(m.params.w_dense, 0, n.hidden);
  n.b1.assign(m.params.b_dense.begin(), m.params.b_dense.end());
  n.w2.assign(m.params.w_out.values().begin(), m.params.w_out.values().end());
  n.b2 = m.params.b_out[0];
  return n;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Fully unrolled forward pass, one scalar at a time. Returns the logit.
inline double logit(const ScalarNet& n, const Mat& window /* channels x T */) {
  const std::size_t T = window[0].size();
  std::vector<double> h(n.h, 0.0), c(n.h, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> nh(n.h), nc(n.h);
    for (std::size_t k = 0; k < n.h; ++k) {
      double pre[4];
      for (int g = 0; g < 4; ++g) {
        double s = n.b[g][k];
        for (std::size_t j = 0; j < n.d; ++j) s += n.W[g][k][j] * window[j][t];
        for (std::size_t j = 0; j < n.h; ++j) s += n.U[g][k][j] * h[j];
        pre[g] = s;
      }
      const double i = logistic(pre[0]);
      const double f = logistic(pre[1]);
      const double cand = std::tanh(pre[2]);
      const double o = logistic(pre[3]);
      nc[k] = f * c[k] + i * cand;
      nh[k] = o * std::tanh(nc[k]);
    }
    h = nh;
    c = nc;
  }
  double z = n.b2;
  for (std::size_t q = 0; q < n.hidden; ++q) {
    double a = n.b1[q];
    for (std::size_t k = 0; k < n.h; ++k) a += n.W1[q][k] * h[k];
    z += n.w2[q] * std::max(0.0, a);
  }
  return z;
}

inline Mat to_mat(const Matrix& w) { return to_rows(w, 0, w.rows()); }

inline double probability(const LstmClassifier& m, const Matrix& window) {
  return logistic(logit(from_model(m), to_mat(window)));
}

inline double bce(double p, int y) {
  return y == 1 ? -std::log(p) : -std::log(1.0 - p);
}

// Central-difference gradient of the BCE loss using only the scalar
// reference forward pass.
inline Gradients finite_difference_gradients(const LstmClassifier& model, const Matrix& window, int y,
                                             double delta) {
  Gradients g = Parameters::zeros(model.topology);
  LstmClassifier probe = model;
  auto params = probe.params.spans();
  auto out = g.spans();
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double saved = params[k][i];
      params[k][i] = saved + delta;
      const double up = bce(probability(probe, window), y);
      params[k][i] = saved - delta;
      const double down = bce(probability(probe, window), y);
      params[k][i] = saved;
      out[k][i] = (up - down) / (2.0 * delta);
    }
  }
  return g;
}

inline LstmClassifier random_model(std::mt19937_64& rng, std::size_t max_d, std::size_t max_h,
                                   std::size_t max_hidden, double scale = 0.8) {
  std::uniform_int_distribution<std::size_t> hh(1, max_h), qq(1, max_hidden);
  // Random sensor set with at most max_d channels.
  SensorSet sensors;
  for (;;) {
    std::uniform_int_distribution<int> bits(1, 7);
    sensors = SensorSet::from_bits(static_cast<std::uint8_t>(bits(rng)));
    if (sensors.channel_count() <= max_d) break;
  }
  ModelTopology t{sensors.channel_count(), hh(rng), qq(rng), 1};
  auto m = init_params(t, sensors, rng());
  std::uniform_real_distribution<double> u(-scale, scale);
  m.params.for_each([&](const char*, std::span<double> v) {
    for (double& x : v) x = u(rng);
  });
  return m;
}

inline Matrix random_window(std::mt19937_64& rng, std::size_t channels, std::size_t T) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix w(channels, T);
  for (double& v : w.values()) v = g(rng);
  return w;
}

// Exhaustive selection: the feasible candidate that no other feasible
// candidate beats under the tie-break chain.
inline std::optional<std::size_t> brute_force_select(const std::vector<CandidateConfig>& c,
                                                     double floor) {
  auto key = [&](std::size_t i) {
    return std::make_tuple(c[i].power_mw, -c[i].accuracy, c[i].sensor_set.sensor_count(),
                           c[i].sensor_set.name(), i);
  };
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!(c[i].accuracy >= floor)) continue;
    bool beaten = false;
    for (std::size_t j = 0; j < c.size() && !beaten; ++j) {
      if (j != i && c[j].accuracy >= floor && key(j) < key(i)) beaten = true;
    }
    if (!beaten) best = i;
  }
  return best;
}

// O(n^2) dominance scan.
inline std::vector<std::size_t> brute_force_pareto(const std::vector<CandidateConfig>& c) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < c.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (j == i) continue;
      const bool no_worse = c[j].accuracy >= c[i].accuracy && c[j].power_mw <= c[i].power_mw;
      const bool better = c[j].accuracy > c[i].accuracy || c[j].power_mw < c[i].power_mw;
      if (no_worse && better) dominated = true;
    }
    if (!dominated) out.push_back(i);
  }
  return out;
}

}  // namespace edgefall::oracle
