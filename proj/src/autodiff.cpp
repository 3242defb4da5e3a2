#include "autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace wsnad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> view(const Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()),
          static_cast<Eigen::Index>(t.cols())};
}

Eigen::Map<RowMat> view(Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()),
          static_cast<Eigen::Index>(t.cols())};
}

struct FaultState {
  bool active = false;
  OpKind kind = OpKind::kLeaf;
  double factor = 1.0;
};

thread_local FaultState g_fault;

Tape& tape_of(Var v, const char* op) {
  if (!v.valid()) fail(ErrorCode::kContract, std::string(op) + ": operand is not on a tape");
  return *v.tape();
}

Tape& common_tape(Var a, Var b, const char* op) {
  Tape& t = tape_of(a, op);
  if (b.tape() != &t) fail(ErrorCode::kContract, std::string(op) + ": operands live on different tapes");
  return t;
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    fail(ErrorCode::kDimension, std::string(op) + ": expected a matrix, got " + to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    fail(ErrorCode::kDimension, std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                                    " vs " + to_string(b.shape()));
  }
}

void add_into(Tensor& dst, const Tensor& src, double factor = 1.0) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * s[i];
}

template <typename Forward, typename Derivative>
Var unary(Var a, OpKind kind, const char* op, Forward forward, Derivative derivative) {
  Tape& t = tape_of(a, op);
  const Tensor& x = a.value();
  require_matrix(x, op);
  Tensor y(x.shape());
  auto xs = x.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = forward(xs[i]);
  return t.record(kind, std::move(y), {a}, [a, derivative](Tape& tape, const Tensor&, const Tensor& g) {
    if (!tape.requires_grad(a)) return;
    const Tensor& x = tape.value(a);
    Tensor& ga = tape.grad_buffer(a);
    auto xs = x.data();
    auto gs = g.data();
    auto out = ga.data();
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] += gs[i] * derivative(xs[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kConcat: return "concat";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kSlice: return "slice";
    case OpKind::kReshape: return "reshape";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kRelu: return "relu";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSquare: return "square";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kGruSequence: return "gru_sequence";
  }
  return "unknown";
}

bool parse_op_name(const std::string& name, OpKind& kind) {
  for (int k = 0; k <= static_cast<int>(OpKind::kGruSequence); ++k) {
    if (name == op_name(static_cast<OpKind>(k))) {
      kind = static_cast<OpKind>(k);
      return true;
    }
  }
  return false;
}

const Tensor& Var::value() const {
  if (!tape_) fail(ErrorCode::kContract, "value of an unbound variable");
  return tape_->value(*this);
}

ScopedBackwardFault::ScopedBackwardFault(OpKind kind, double factor) {
  g_fault = {true, kind, factor};
}

ScopedBackwardFault::~ScopedBackwardFault() { g_fault = {}; }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.leaf = true;
  return push(std::move(node));
}

Var Tape::variable(Tensor value) {
  Node node;
  node.accum = Tensor(value.shape(), 0.0);
  node.value = std::move(value);
  node.leaf = true;
  node.requires_grad = tracking_;
  return push(std::move(node));
}

Var Tape::parameter(const Parameter& param) {
  Node node;
  node.value = param.value;
  node.leaf = true;
  if (tracking_) {
    node.requires_grad = true;
    node.param = &param;
    node.accum = Tensor(param.value.shape(), 0.0);
  }
  return push(std::move(node));
}

Var Tape::record(OpKind kind, Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  Node node;
  node.kind = kind;
  node.value = std::move(value);
  if (tracking_) {
    for (const Var& in : inputs) {
      if (in.tape_ != this) fail(ErrorCode::kContract, std::string(op_name(kind)) + ": operand from another tape");
      if (nodes_[in.id_].requires_grad) {
        node.requires_grad = true;
        break;
      }
    }
  }
  if (node.requires_grad) node.backward = std::move(fn);
  return push(std::move(node));
}

Tensor& Tape::grad_buffer(Var v) {
  Node& node = nodes_[v.id_];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) fail(ErrorCode::kContract, "backward: loss is not on this tape");
  if (nodes_[loss.id_].value.size() != 1) {
    fail(ErrorCode::kContract, "backward: loss must be a scalar, got " +
                                   to_string(nodes_[loss.id_].value.shape()));
  }
  if (!tracking_) fail(ErrorCode::kContract, "backward on a non-tracking tape");
  for (auto& node : nodes_) node.grad = Tensor();
  grad_buffer(loss).fill(1.0);

  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty()) continue;
    if (node.leaf) {
      if (node.requires_grad) add_into(node.accum, node.grad);
    } else if (node.backward) {
      if (g_fault.active && g_fault.kind == node.kind) {
        Tensor scaled = node.grad;
        for (double& v : scaled.data()) v *= g_fault.factor;
        node.backward(*this, node.value, scaled);
      } else {
        node.backward(*this, node.value, node.grad);
      }
    }
    if (!node.leaf) node.grad = Tensor();
  }
}

const Tensor& Tape::gradient(Var leaf) const {
  const Node& node = nodes_[leaf.id_];
  if (!node.leaf || !node.requires_grad) {
    fail(ErrorCode::kContract, "gradient requested for an untracked or non-leaf node");
  }
  return node.accum;
}

Tensor Tape::gradient(const Parameter& param) const {
  Tensor total(param.value.shape(), 0.0);
  for (const auto& node : nodes_) {
    if (node.param == &param) add_into(total, node.accum);
  }
  return total;
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    fail(ErrorCode::kDimension,
         "matmul: inner extents differ for " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  Tensor out({a.rows(), b.cols()}, 0.0);
  view(out).noalias() = view(a) * view(b);
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

Tensor softmax_rows(const Tensor& logits, const Tensor& mask) {
  require_matrix(logits, "softmax_rows");
  require_same_shape(logits, mask, "softmax_rows");
  const std::size_t rows = logits.rows();
  const std::size_t cols = logits.cols();
  Tensor out({rows, cols}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double peak = -INFINITY;
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask(r, c) != 0.0) {
        peak = std::max(peak, logits(r, c));
        any = true;
      }
    }
    if (!any) {
      fail(ErrorCode::kDegenerateRow, "softmax_rows: row " + std::to_string(r) + " has no unmasked entry");
    }
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask(r, c) != 0.0) {
        const double e = std::exp(logits(r, c) - peak);
        out(r, c) = e;
        total += e;
      }
    }
    for (std::size_t c = 0; c < cols; ++c) out(r, c) /= total;
  }
  return out;
}

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b, "matmul");
  Tensor out = matmul(a.value(), b.value());
  return t.record(OpKind::kMatmul, std::move(out), {a, b}, [a, b](Tape& tape, const Tensor&, const Tensor& g) {
    if (tape.requires_grad(a)) {
      view(tape.grad_buffer(a)).noalias() += view(g) * view(tape.value(b)).transpose();
    }
    if (tape.requires_grad(b)) {
      view(tape.grad_buffer(b)).noalias() += view(tape.value(a)).transpose() * view(g);
    }
  });
}

Var add(Var a, Var b) {
  Tape& t = common_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  add_into(out, b.value());
  return t.record(OpKind::kAdd, std::move(out), {a, b}, [a, b](Tape& tape, const Tensor&, const Tensor& g) {
    if (tape.requires_grad(a)) add_into(tape.grad_buffer(a), g);
    if (tape.requires_grad(b)) add_into(tape.grad_buffer(b), g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = common_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  add_into(out, b.value(), -1.0);
  return t.record(OpKind::kSub, std::move(out), {a, b}, [a, b](Tape& tape, const Tensor&, const Tensor& g) {
    if (tape.requires_grad(a)) add_into(tape.grad_buffer(a), g);
    if (tape.requires_grad(b)) add_into(tape.grad_buffer(b), g, -1.0);
  });
}

Var mul(Var a, Var b) {
  Tape& t = common_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  {
    auto o = out.data();
    auto y = b.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= y[i];
  }
  return t.record(OpKind::kMul, std::move(out), {a, b}, [a, b](Tape& tape, const Tensor&, const Tensor& g) {
    auto gs = g.data();
    if (tape.requires_grad(a)) {
      auto dst = tape.grad_buffer(a).data();
      auto other = tape.value(b).data();
      for (std::size_t i = 0; i < gs.size(); ++i) dst[i] += gs[i] * other[i];
    }
    if (tape.requires_grad(b)) {
      auto dst = tape.grad_buffer(b).data();
      auto other = tape.value(a).data();
      for (std::size_t i = 0; i < gs.size(); ++i) dst[i] += gs[i] * other[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tape& t = tape_of(a, "scale");
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return t.record(OpKind::kScale, std::move(out), {a}, [a, factor](Tape& tape, const Tensor&, const Tensor& g) {
    if (tape.requires_grad(a)) add_into(tape.grad_buffer(a), g, factor);
  });
}

Var add_scalar(Var a, double offset) {
  Tape& t = tape_of(a, "add_scalar");
  Tensor out = a.value();
  for (double& v : out.data()) v += offset;
  return t.record(OpKind::kAddScalar, std::move(out), {a}, [a](Tape& tape, const Tensor&, const Tensor& g) {
    if (tape.requires_grad(a)) add_into(tape.grad_buffer(a), g);
  });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) fail(ErrorCode::kContract, "concat: no operands");
  if (axis > 1) fail(ErrorCode::kDimension, "concat: axis must be 0 or 1");
  Tape& t = tape_of(parts[0], "concat");
  const std::size_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) fail(ErrorCode::kContract, "concat: operands live on different tapes");
    require_matrix(p.value(), "concat");
    const std::size_t other = axis == 0 ? p.cols() : p.rows();
    if (other != fixed) {
      fail(ErrorCode::kDimension, "concat: incompatible shapes " + to_string(parts[0].value().shape()) +
                                      " and " + to_string(p.value().shape()) + " along axis " +
                                      std::to_string(axis));
    }
    total += axis == 0 ? p.rows() : p.cols();
  }
  const std::size_t rows = axis == 0 ? total : fixed;
  const std::size_t cols = axis == 0 ? fixed : total;
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < v.rows(); ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) {
        if (axis == 0) out(offset + r, c) = v(r, c);
        else out(r, offset + c) = v(r, c);
      }
    offset += axis == 0 ? v.rows() : v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(OpKind::kConcat, std::move(out), parts, [inputs, axis](Tape& tape, const Tensor&, const Tensor& g) {
    std::size_t offset = 0;
    for (const Var& p : inputs) {
      const Tensor& v = tape.value(p);
      if (tape.requires_grad(p)) {
        Tensor& gp = tape.grad_buffer(p);
        for (std::size_t r = 0; r < v.rows(); ++r)
          for (std::size_t c = 0; c < v.cols(); ++c)
            gp(r, c) += axis == 0 ? g(offset + r, c) : g(r, offset + c);
      }
      offset += axis == 0 ? v.rows() : v.cols();
    }
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a, "transpose");
  Tensor out = transpose(a.value());
  return t.record(OpKind::kTranspose, std::move(out), {a}, [a](Tape& tape, const Tensor&, const Tensor& g) {
    if (!tape.requires_grad(a)) return;
    Tensor& ga = tape.grad_buffer(a);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(c, r);
  });
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(a, "slice");
  const Tensor& x = a.value();
  require_matrix(x, "slice");
  if (axis > 1) fail(ErrorCode::kDimension, "slice: axis must be 0 or 1");
  const std::size_t extent = axis == 0 ? x.rows() : x.cols();
  if (begin >= end || end > extent) {
    fail(ErrorCode::kDimension, "slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                    ") out of bounds for " + to_string(x.shape()) + " axis " +
                                    std::to_string(axis));
  }
  const std::size_t rows = axis == 0 ? end - begin : x.rows();
  const std::size_t cols = axis == 0 ? x.cols() : end - begin;
  const std::size_t r0 = axis == 0 ? begin : 0;
  const std::size_t c0 = axis == 0 ? 0 : begin;
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = x(r0 + r, c0 + c);
  return t.record(OpKind::kSlice, std::move(out), {a}, [a, r0, c0](Tape& tape, const Tensor&, const Tensor& g) {
    if (!tape.requires_grad(a)) return;
    Tensor& ga = tape.grad_buffer(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r0 + r, c0 + c) += g(r, c);
  });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  Tape& t = tape_of(a, "reshape");
  Tensor out = a.value().reshaped({rows, cols});
  return t.record(OpKind::kReshape, std::move(out), {a}, [a](Tape& tape, const Tensor&, const Tensor& g) {
    if (tape.requires_grad(a)) add_into(tape.grad_buffer(a), g);
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a, "sum");
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return t.record(OpKind::kSum, Tensor::scalar(total), {a}, [a](Tape& tape, const Tensor&, const Tensor& g) {
    if (!tape.requires_grad(a)) return;
    const double s = g[0];
    for (double& v : tape.grad_buffer(a).data()) v += s;
  });
}

Var mean(Var a) {
  Tape& t = tape_of(a, "mean");
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const double n = static_cast<double>(a.value().size());
  return t.record(OpKind::kMean, Tensor::scalar(total / n), {a}, [a, n](Tape& tape, const Tensor&, const Tensor& g) {
    if (!tape.requires_grad(a)) return;
    const double s = g[0] / n;
    for (double& v : tape.grad_buffer(a).data()) v += s;
  });
}

Var leaky_relu(Var a, double slope) {
  return unary(
      a, OpKind::kLeakyRelu, "leaky_relu", [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x) { return x > 0 ? 1.0 : slope; });
}

Var relu(Var a) {
  return unary(
      a, OpKind::kRelu, "relu", [](double x) { return x > 0 ? x : 0.0; },
      [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(
      a, OpKind::kTanh, "tanh", [](double x) { return std::tanh(x); },
      [](double x) {
        const double y = std::tanh(x);
        return 1.0 - y * y;
      });
}

Var sigmoid(Var a) {
  return unary(a, OpKind::kSigmoid, "sigmoid", stable_sigmoid, [](double x) {
    const double y = stable_sigmoid(x);
    return y * (1.0 - y);
  });
}

Var square(Var a) {
  return unary(
      a, OpKind::kSquare, "square", [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var softmax_rows(Var logits, const Tensor& mask) {
  Tape& t = tape_of(logits, "softmax_rows");
  Tensor out = softmax_rows(logits.value(), mask);
  return t.record(OpKind::kSoftmaxRows, std::move(out), {logits},
                  [logits](Tape& tape, const Tensor& probs, const Tensor& g) {
                    if (!tape.requires_grad(logits)) return;
                    Tensor& gx = tape.grad_buffer(logits);
                    for (std::size_t r = 0; r < probs.rows(); ++r) {
                      double dot = 0.0;
                      for (std::size_t c = 0; c < probs.cols(); ++c) dot += probs(r, c) * g(r, c);
                      for (std::size_t c = 0; c < probs.cols(); ++c)
                        gx(r, c) += probs(r, c) * (g(r, c) - dot);
                    }
                  });
}

}  // namespace wsnad
