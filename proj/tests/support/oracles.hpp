#pragma once

// Straight-line reference implementations used as test oracles. They share no
// code with the tape operators.

#include <cmath>
#include <vector>

#include "layers.hpp"
#include "rng.hpp"

namespace wsnad::testing {

using Matrix = std::vector<std::vector<double>>;

inline Matrix to_matrix(const Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

struct GatOracle {
  Matrix output;
  Matrix attention;
};

// Projection, pairwise logits, masked softmax, weighted aggregation.
inline GatOracle gat_oracle(const GatLayer& layer, const Matrix& h, const Matrix& adj) {
  const std::size_t p = h.size();
  const std::size_t fin = layer.in_features();
  const std::size_t fout = layer.out_features();
  const Tensor& b = layer.weight.value;
  const Tensor& a = layer.attention.value;

  bool weighted = false;
  for (const auto& row : adj)
    for (double v : row)
      if (v != 0.0 && v != 1.0) weighted = true;

  Matrix q(p, std::vector<double>(fout, 0.0));
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t o = 0; o < fout; ++o)
      for (std::size_t k = 0; k < fin; ++k) q[i][o] += b(o, k) * h[i][k];

  GatOracle out{Matrix(p, std::vector<double>(fout, 0.0)), Matrix(p, std::vector<double>(p, 0.0))};
  for (std::size_t i = 0; i < p; ++i) {
    std::vector<double> e(p, 0.0);
    double top = -INFINITY;
    for (std::size_t j = 0; j < p; ++j) {
      if (adj[i][j] == 0.0) continue;
      double s = 0.0;
      for (std::size_t o = 0; o < fout; ++o) s += a(o, 0) * q[i][o] + a(fout + o, 0) * q[j][o];
      s = s > 0.0 ? s : layer.leaky_slope * s;
      if (weighted) s *= adj[i][j];
      e[j] = s;
      top = std::max(top, s);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < p; ++j)
      if (adj[i][j] != 0.0) z += std::exp(e[j] - top);
    for (std::size_t j = 0; j < p; ++j)
      if (adj[i][j] != 0.0) out.attention[i][j] = std::exp(e[j] - top) / z;
    for (std::size_t o = 0; o < fout; ++o) {
      double acc = 0.0;
      for (std::size_t j = 0; j < p; ++j) acc += out.attention[i][j] * q[j][o];
      if (layer.activation == Activation::kRelu && acc < 0.0) acc = 0.0;
      out.output[i][o] = acc;
    }
  }
  return out;
}

inline double oracle_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One GRU layer step for a single sequence, vectors in and out.
inline std::vector<double> gru_step_oracle(const GruLayer& layer, const std::vector<double>& x,
                                           const std::vector<double>& h) {
  const std::size_t d = layer.hidden_size();
  const std::size_t fin = layer.input_size();
  auto affine = [&](const Parameter& w, const Parameter& u, const std::vector<double>& hh, std::size_t i) {
    double s = 0.0;
    for (std::size_t k = 0; k < fin; ++k) s += w.value(i, k) * x[k];
    for (std::size_t k = 0; k < d; ++k) s += u.value(i, k) * hh[k];
    return s;
  };
  std::vector<double> z(d), r(d), gated(d), out(d);
  for (std::size_t i = 0; i < d; ++i) {
    z[i] = oracle_sigmoid(affine(layer.w_z, layer.u_z, h, i));
    r[i] = oracle_sigmoid(affine(layer.w_r, layer.u_r, h, i));
  }
  for (std::size_t i = 0; i < d; ++i) gated[i] = r[i] * h[i];
  for (std::size_t i = 0; i < d; ++i) {
    const double cand = std::tanh(affine(layer.w_h, layer.u_h, gated, i));
    out[i] = (1.0 - z[i]) * cand + z[i] * h[i];
  }
  return out;
}

inline std::vector<double> gru_run_oracle(const GruCell& cell, const Matrix& sequence) {
  Matrix seq = sequence;
  std::vector<double> h;
  for (const GruLayer& layer : cell.layers) {
    h.assign(layer.hidden_size(), 0.0);
    for (auto& x : seq) {
      h = gru_step_oracle(layer, x, h);
      x = h;
    }
  }
  return h;
}

}  // namespace wsnad::testing
