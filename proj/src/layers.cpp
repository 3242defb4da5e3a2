#include "layers.hpp"

#include <cmath>
#include <memory>

#include <Eigen/Core>

namespace wsnad {

Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
                      Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor out({rows, cols});
  for (double& v : out.data()) v = rng.uniform(-bound, bound);
  return out;
}

GatLayer GatLayer::create(const std::string& name, std::size_t in_features,
                          std::size_t out_features, Activation activation, Rng& rng) {
  GatLayer layer;
  layer.weight = Parameter(name + ".weight",
                           glorot_uniform(out_features, in_features, in_features, out_features, rng));
  layer.attention = Parameter(name + ".attention",
                              glorot_uniform(2 * out_features, 1, 2 * out_features, 1, rng));
  layer.activation = activation;
  return layer;
}

BoundGat bind(Tape& tape, const GatLayer& layer) {
  const std::size_t f = layer.out_features();
  if (layer.attention.value.rows() != 2 * f || layer.attention.value.cols() != 1) {
    fail(ErrorCode::kDimension, "gat: attention vector " + to_string(layer.attention.value.shape()) +
                                    " does not match output width " + std::to_string(f));
  }
  Var a = tape.parameter(layer.attention);
  return BoundGat{transpose(tape.parameter(layer.weight)), slice(a, 0, 0, f), slice(a, 0, f, 2 * f),
                  layer.leaky_slope, layer.activation};
}

GatResult gat_forward(const BoundGat& layer, Var features, const Tensor& adjacency) {
  Tape& tape = *features.tape();
  const std::size_t p = features.rows();
  if (adjacency.rank() != 2 || adjacency.rows() != p || adjacency.cols() != p) {
    fail(ErrorCode::kDimension, "gat: adjacency " + to_string(adjacency.shape()) +
                                    " does not match " + std::to_string(p) + " vertices");
  }
  if (features.cols() != layer.weight_t.rows()) {
    fail(ErrorCode::kDimension, "gat: features " + to_string(features.value().shape()) +
                                    " do not match weight input width " +
                                    std::to_string(layer.weight_t.rows()));
  }

  Tensor mask({p, p}, 0.0);
  bool weighted = false;
  for (std::size_t i = 0; i < p; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < p; ++j) {
      const double a = adjacency(i, j);
      if (a != 0.0) {
        mask(i, j) = 1.0;
        any = true;
        if (a != 1.0) weighted = true;
      }
    }
    if (!any) fail(ErrorCode::kDegenerateRow, "gat: vertex " + std::to_string(i) + " has no neighbours");
  }

  Var q = matmul(features, layer.weight_t);
  Var center = matmul(q, layer.attn_center);
  Var neighbor = matmul(q, layer.attn_neighbor);
  Var logits = add(matmul(center, tape.constant(Tensor::ones(1, p))),
                   matmul(tape.constant(Tensor::ones(p, 1)), transpose(neighbor)));
  Var scores = leaky_relu(logits, layer.leaky_slope);
  if (weighted) scores = mul(scores, tape.constant(adjacency));
  Var alpha = softmax_rows(scores, mask);
  Var out = matmul(alpha, q);
  if (layer.activation == Activation::kRelu) out = relu(out);
  return {out, alpha};
}

GatResult gat_forward(Tape& tape, const GatLayer& layer, Var features, const Tensor& adjacency) {
  return gat_forward(bind(tape, layer), features, adjacency);
}

GruCell GruCell::create(const std::string& name, std::size_t input_size, std::size_t hidden_size,
                        std::size_t num_layers, Rng& rng) {
  if (num_layers == 0) fail(ErrorCode::kConfig, "gru: at least one layer is required");
  GruCell cell;
  for (std::size_t l = 0; l < num_layers; ++l) {
    const std::size_t in = l == 0 ? input_size : hidden_size;
    const std::string prefix = name + "." + std::to_string(l) + ".";
    auto input_weight = [&](const char* gate) {
      return Parameter(prefix + "w_" + gate, glorot_uniform(hidden_size, in, in, hidden_size, rng));
    };
    auto recurrent_weight = [&](const char* gate) {
      return Parameter(prefix + "u_" + gate,
                       glorot_uniform(hidden_size, hidden_size, hidden_size, hidden_size, rng));
    };
    GruLayer layer;
    layer.w_z = input_weight("z");
    layer.w_r = input_weight("r");
    layer.w_h = input_weight("h");
    layer.u_z = recurrent_weight("z");
    layer.u_r = recurrent_weight("r");
    layer.u_h = recurrent_weight("h");
    cell.layers.push_back(std::move(layer));
  }
  return cell;
}

std::vector<Parameter*> GruCell::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers) {
    for (Parameter* p : {&l.w_z, &l.w_r, &l.w_h, &l.u_z, &l.u_r, &l.u_h}) out.push_back(p);
  }
  return out;
}

BoundGruLayer bind(Tape& tape, const GruLayer& layer) {
  auto t = [&](const Parameter& p) { return transpose(tape.parameter(p)); };
  return {t(layer.w_z), t(layer.w_r), t(layer.w_h), t(layer.u_z), t(layer.u_r), t(layer.u_h)};
}

Var gru_step(const BoundGruLayer& layer, Var x, Var h_prev) {
  if (x.cols() != layer.w_z_t.rows() || h_prev.cols() != layer.u_z_t.rows() ||
      x.rows() != h_prev.rows()) {
    fail(ErrorCode::kDimension, "gru_step: input " + to_string(x.value().shape()) + " and state " +
                                    to_string(h_prev.value().shape()) + " do not match weights " +
                                    to_string(layer.w_z_t.value().shape()));
  }
  Var z = sigmoid(add(matmul(x, layer.w_z_t), matmul(h_prev, layer.u_z_t)));
  Var r = sigmoid(add(matmul(x, layer.w_r_t), matmul(h_prev, layer.u_r_t)));
  Var candidate = tanh(add(matmul(x, layer.w_h_t), matmul(mul(r, h_prev), layer.u_h_t)));
  return add(candidate, mul(z, sub(h_prev, candidate)));
}

Var gru_step(Tape& tape, const GruLayer& layer, Var x, Var h_prev) {
  return gru_step(bind(tape, layer), x, h_prev);
}

Var gru_run(Tape& tape, const GruCell& cell, std::span<const Var> steps) {
  if (steps.empty()) fail(ErrorCode::kContract, "gru_run: empty sequence");
  if (cell.layers.empty()) fail(ErrorCode::kContract, "gru_run: cell has no layers");
  const std::size_t batch = steps.front().rows();
  std::vector<Var> sequence(steps.begin(), steps.end());
  Var h;
  for (const GruLayer& layer : cell.layers) {
    BoundGruLayer bound = bind(tape, layer);
    h = tape.constant(Tensor::zeros(batch, layer.hidden_size()));
    for (Var& x : sequence) {
      h = gru_step(bound, x, h);
      x = h;
    }
  }
  return h;
}

Var gru_run(Tape& tape, const GruCell& cell, Var sequence) {
  std::vector<Var> steps;
  steps.reserve(sequence.rows());
  for (std::size_t t = 0; t < sequence.rows(); ++t) steps.push_back(slice(sequence, 0, t, t + 1));
  return gru_run(tape, cell, steps);
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap view(const Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
MutMap view(Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

// Vectorises through Eigen's exp; saturates cleanly to 0 and 1.
template <typename Derived>
auto gate_activation(const Eigen::ArrayBase<Derived>& v) {
  return ((-v).exp() + 1.0).inverse();
}

// Forward activations kept for the backward pass, all (L * B) x D.
struct GruTrace {
  RowMat z, r, candidate, gated_prev;
};

}  // namespace

Var gru_layer_sequence(Tape& tape, const GruLayer& layer, Var inputs, std::size_t batch) {
  const std::size_t d = layer.hidden_size();
  if (batch == 0 || inputs.rows() % batch != 0 || inputs.cols() != layer.input_size()) {
    fail(ErrorCode::kDimension, "gru_layer_sequence: inputs " + to_string(inputs.value().shape()) +
                                    " do not pack batch " + std::to_string(batch) + " of width " +
                                    std::to_string(layer.input_size()));
  }
  const auto steps = static_cast<Eigen::Index>(inputs.rows() / batch);
  const auto b = static_cast<Eigen::Index>(batch);
  const auto total = static_cast<Eigen::Index>(inputs.rows());

  const Var wz = tape.parameter(layer.w_z), wr = tape.parameter(layer.w_r), wh = tape.parameter(layer.w_h);
  const Var uz = tape.parameter(layer.u_z), ur = tape.parameter(layer.u_r), uh = tape.parameter(layer.u_h);
  const ConstMap x = view(inputs.value());
  const ConstMap Uh = view(uh.value());

  auto trace = std::make_shared<GruTrace>();
  RowMat az = x * view(wz.value()).transpose();
  RowMat ar = x * view(wr.value()).transpose();
  RowMat ah = x * view(wh.value()).transpose();
  trace->z.resize(total, static_cast<Eigen::Index>(d));
  trace->r.resize(total, static_cast<Eigen::Index>(d));
  trace->candidate.resize(total, static_cast<Eigen::Index>(d));
  trace->gated_prev.resize(total, static_cast<Eigen::Index>(d));

  const auto dd = static_cast<Eigen::Index>(d);
  RowMat u_gates(2 * dd, dd);
  u_gates << view(uz.value()), view(ur.value());
  Tensor out({inputs.rows(), d});
  MutMap h = view(out);
  const RowMat zero = RowMat::Zero(b, dd);
  RowMat gates(b, 2 * dd), cand(b, dd);
  for (Eigen::Index s = 0; s < steps; ++s) {
    const auto rows = Eigen::seqN(s * b, b);
    const ConstMap prev(s == 0 ? zero.data() : h.data() + (s - 1) * b * dd, b, dd);
    auto z = trace->z(rows, Eigen::all);
    auto r = trace->r(rows, Eigen::all);
    auto c = trace->candidate(rows, Eigen::all);
    auto rh = trace->gated_prev(rows, Eigen::all);
    gates.noalias() = prev * u_gates.transpose();
    z = gate_activation(az(rows, Eigen::all).array() + gates.leftCols(dd).array()).matrix();
    r = gate_activation(ar(rows, Eigen::all).array() + gates.rightCols(dd).array()).matrix();
    rh = r.cwiseProduct(prev);
    cand.noalias() = rh * Uh.transpose();
    c = (ah(rows, Eigen::all) + cand).array().tanh().matrix();
    h(rows, Eigen::all) = c + z.cwiseProduct(prev - c);
  }

  const std::vector<Var> operands{inputs, wz, wr, wh, uz, ur, uh};
  return tape.record(
      OpKind::kGruSequence, std::move(out), operands,
      [operands, trace, steps, b](Tape& tp, const Tensor& value_out, const Tensor& grad_out) {
        const Var &in = operands[0], &wz = operands[1], &wr = operands[2], &wh = operands[3];
        const Var &uz = operands[4], &ur = operands[5], &uh = operands[6];
        const ConstMap h = view(value_out), g = view(grad_out);
        const Eigen::Index d = h.cols();
        RowMat u_gates(2 * d, d);
        u_gates << view(tp.value(uz)), view(tp.value(ur));
        const ConstMap Uh = view(tp.value(uh));
        // Pre-activation gradients: update and reset gates side by side, then candidate.
        RowMat dgates(h.rows(), 2 * d), dah(h.rows(), d);
        RowMat du_gates = RowMat::Zero(2 * d, d), duh = RowMat::Zero(d, d);
        RowMat carry = RowMat::Zero(b, d), dh(b, d), d_rh(b, d);
        const RowMat zero = RowMat::Zero(b, d);
        for (Eigen::Index s = steps - 1; s >= 0; --s) {
          const auto rows = Eigen::seqN(s * b, b);
          const ConstMap prev(s == 0 ? zero.data() : h.data() + (s - 1) * b * d, b, d);
          const auto z = trace->z(rows, Eigen::all).array();
          const auto r = trace->r(rows, Eigen::all).array();
          const auto c = trace->candidate(rows, Eigen::all).array();
          const auto rh = trace->gated_prev(rows, Eigen::all);
          dh = g(rows, Eigen::all) + carry;

          auto pre_c = dah(rows, Eigen::all);
          pre_c = (dh.array() * (1.0 - z) * (1.0 - c.square())).matrix();
          d_rh.noalias() = pre_c * Uh;
          auto pre_gates = dgates(rows, Eigen::all);
          pre_gates.leftCols(d) = (dh.array() * (prev.array() - c) * z * (1.0 - z)).matrix();
          pre_gates.rightCols(d) = (d_rh.array() * prev.array() * r * (1.0 - r)).matrix();

          duh.noalias() += pre_c.transpose() * rh;
          du_gates.noalias() += pre_gates.transpose() * prev;
          carry = (dh.array() * z + d_rh.array() * r).matrix();
          carry.noalias() += pre_gates * u_gates;
        }
        const ConstMap x = view(tp.value(in));
        if (tp.requires_grad(in)) {
          RowMat w_gates(2 * d, x.cols());
          w_gates << view(tp.value(wz)), view(tp.value(wr));
          MutMap dx = view(tp.grad_buffer(in));
          dx.noalias() += dgates * w_gates;
          dx.noalias() += dah * view(tp.value(wh));
        }
        auto accumulate = [&tp](const Var& v, const auto& value) {
          if (tp.requires_grad(v)) view(tp.grad_buffer(v)).noalias() += value;
        };
        accumulate(wz, dgates.leftCols(d).transpose() * x);
        accumulate(wr, dgates.rightCols(d).transpose() * x);
        accumulate(wh, dah.transpose() * x);
        accumulate(uz, du_gates.topRows(d));
        accumulate(ur, du_gates.bottomRows(d));
        accumulate(uh, duh);
      });
}

Var gru_run_packed(Tape& tape, const GruCell& cell, Var inputs, std::size_t batch) {
  if (cell.layers.empty()) fail(ErrorCode::kContract, "gru_run_packed: cell has no layers");
  if (inputs.rows() == 0) fail(ErrorCode::kContract, "gru_run_packed: empty sequence");
  Var h = inputs;
  for (const GruLayer& layer : cell.layers) h = gru_layer_sequence(tape, layer, h, batch);
  return slice(h, 0, h.rows() - batch, h.rows());
}

DenseLayer DenseLayer::create(const std::string& name, std::size_t in_features,
                              std::size_t out_features, Rng& rng) {
  DenseLayer layer;
  layer.weight = Parameter(name + ".weight",
                           glorot_uniform(out_features, in_features, in_features, out_features, rng));
  layer.bias = Parameter(name + ".bias", Tensor::zeros(out_features, 1));
  return layer;
}

Var dense_forward(Tape& tape, const DenseLayer& layer, Var x) {
  if (x.cols() != layer.weight.value.cols()) {
    fail(ErrorCode::kDimension, "dense: input " + to_string(x.value().shape()) +
                                    " does not match weight " + to_string(layer.weight.value.shape()));
  }
  Var w = tape.parameter(layer.weight);
  Var b = tape.parameter(layer.bias);
  return add(matmul(x, transpose(w)),
             matmul(tape.constant(Tensor::ones(x.rows(), 1)), transpose(b)));
}

}  // namespace wsnad
