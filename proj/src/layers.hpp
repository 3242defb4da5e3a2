#pragma once

#include <span>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"

namespace wsnad {

enum class Activation { kIdentity, kRelu };

/// Uniform Glorot initialisation, bound sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
                      Rng& rng);

/// Single-head graph attention layer.
///
/// Each vertex i is projected as q_i = B h_i, attention logits are
/// e_ij = leaky_relu(a^T [q_i || q_j]) for every neighbour j (nonzero entry
/// A(i, j)), multiplied by A(i, j) when the adjacency is weighted, normalised
/// with a masked row softmax, and the output is act(sum_j alpha_ij q_j).
struct GatLayer {
  Parameter weight;     // B, F_out x F_in
  Parameter attention;  // a, 2F_out x 1
  double leaky_slope = 0.2;
  Activation activation = Activation::kIdentity;

  static GatLayer create(const std::string& name, std::size_t in_features, std::size_t out_features,
                         Activation activation, Rng& rng);

  std::size_t in_features() const { return weight.value.cols(); }
  std::size_t out_features() const { return weight.value.rows(); }
  std::vector<Parameter*> parameters() { return {&weight, &attention}; }
};

/// GatLayer parameters placed on a tape, so one forward pass can apply the
/// layer to many graphs without re-binding.
struct BoundGat {
  Var weight_t;     // B^T
  Var attn_center;  // first half of a, F_out x 1
  Var attn_neighbor;
  double leaky_slope;
  Activation activation;
};

BoundGat bind(Tape& tape, const GatLayer& layer);

struct GatResult {
  Var features;   // P x F_out
  Var attention;  // P x P, row-stochastic over each neighbour set
};

GatResult gat_forward(const BoundGat& layer, Var features, const Tensor& adjacency);
GatResult gat_forward(Tape& tape, const GatLayer& layer, Var features, const Tensor& adjacency);

/// One layer of a gated recurrent unit; input weights are D x F_in and
/// recurrent weights D x D. No biases.
struct GruLayer {
  Parameter w_z, w_r, w_h;
  Parameter u_z, u_r, u_h;

  std::size_t input_size() const { return w_z.value.cols(); }
  std::size_t hidden_size() const { return w_z.value.rows(); }
};

struct GruCell {
  std::vector<GruLayer> layers;

  static GruCell create(const std::string& name, std::size_t input_size, std::size_t hidden_size,
                        std::size_t num_layers, Rng& rng);

  std::size_t input_size() const { return layers.front().input_size(); }
  std::size_t hidden_size() const { return layers.front().hidden_size(); }
  std::vector<Parameter*> parameters();
};

struct BoundGruLayer {
  Var w_z_t, w_r_t, w_h_t;
  Var u_z_t, u_r_t, u_h_t;
};

BoundGruLayer bind(Tape& tape, const GruLayer& layer);

/// h_t = z * h_prev + (1 - z) * tanh(x W_h^T + (r * h_prev) U_h^T) with
/// sigmoid gates z, r. Rows are independent sequences: x is B x F_in and
/// h_prev is B x D.
Var gru_step(const BoundGruLayer& layer, Var x, Var h_prev);
Var gru_step(Tape& tape, const GruLayer& layer, Var x, Var h_prev);

/// Folds the stack over `steps` (each B x F_in) from a zero state; layer k's
/// hidden sequence feeds layer k+1. Returns the top layer's final state, B x D.
Var gru_run(Tape& tape, const GruCell& cell, std::span<const Var> steps);
/// Single sequence given as L x F_in rows; returns 1 x D.
Var gru_run(Tape& tape, const GruCell& cell, Var sequence);

/// One layer over a whole packed sequence as a single tape op. `inputs` is
/// (L * B) x F_in with step-major rows (rows [s*B, (s+1)*B) hold step s); the
/// result holds every hidden state in the same layout, (L * B) x D. Agrees
/// with repeated gru_step calls; backpropagates through time in one pass.
Var gru_layer_sequence(Tape& tape, const GruLayer& layer, Var inputs, std::size_t batch);

/// Stack of gru_layer_sequence calls; returns the top layer's final state, B x D.
Var gru_run_packed(Tape& tape, const GruCell& cell, Var inputs, std::size_t batch);

struct DenseLayer {
  Parameter weight;  // F_out x F_in
  Parameter bias;    // F_out x 1

  static DenseLayer create(const std::string& name, std::size_t in_features,
                           std::size_t out_features, Rng& rng);
  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

/// x W^T + b for each row of x (B x F_in), giving B x F_out.
Var dense_forward(Tape& tape, const DenseLayer& layer, Var x);

}  // namespace wsnad
