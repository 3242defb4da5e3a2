#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace wsnad {

/// A learnable tensor that outlives any single tape. `grad` is filled by the
/// owning model after a backward sweep and consumed by the optimizer.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor(value.shape(), 0.0);
  }
  void zero_grad() { grad = Tensor(value.shape(), 0.0); }
};

enum class OpKind {
  kLeaf,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kConcat,
  kTranspose,
  kSlice,
  kReshape,
  kSum,
  kMean,
  kLeakyRelu,
  kRelu,
  kTanh,
  kSigmoid,
  kSquare,
  kSoftmaxRows,
  kGruSequence,
};

const char* op_name(OpKind kind);
bool parse_op_name(const std::string& name, OpKind& kind);

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const noexcept { return tape_; }
  std::uint32_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Records operations in creation order (which is a topological order) and
/// replays their backward rules in reverse. One tape per logical thread.
class Tape {
 public:
  using BackwardFn =
      std::function<void(Tape&, const Tensor& value_out, const Tensor& grad_out)>;

  explicit Tape(bool tracking = true) : tracking_(tracking) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool tracking() const noexcept { return tracking_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Tensor value);
  /// Tracked leaf with its own gradient accumulator.
  Var variable(Tensor value);
  /// Tracked leaf whose gradient is reported under `param` (untracked when the
  /// tape is not tracking).
  Var parameter(const Parameter& param);

  /// Populates gradients of every tracked leaf. Repeated calls accumulate into
  /// the leaf accumulators.
  void backward(Var loss);

  const Tensor& gradient(Var leaf) const;
  /// Sum of gradients over all leaves bound to `param`.
  Tensor gradient(const Parameter& param) const;

  // Operator plumbing.
  Var record(OpKind kind, Tensor value, std::span<const Var> inputs, BackwardFn fn);
  Var record(OpKind kind, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(kind, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(fn));
  }
  const Tensor& value(Var v) const { return nodes_[v.id_].value; }
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }
  /// Gradient buffer of `v` for the current sweep, zero-initialised on first use.
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
    bool leaf = false;
    const Parameter* param = nullptr;
    Tensor accum;
  };

  Var push(Node node);

  bool tracking_;
  std::deque<Node> nodes_;
};

/// Test fixture: while alive, scales the incoming gradient of every `kind`
/// node on this thread by `factor`, corrupting that backward rule.
class ScopedBackwardFault {
 public:
  ScopedBackwardFault(OpKind kind, double factor);
  ~ScopedBackwardFault();
  ScopedBackwardFault(const ScopedBackwardFault&) = delete;
  ScopedBackwardFault& operator=(const ScopedBackwardFault&) = delete;
};

// Differentiable operators. All operands are rank-2 and live on one tape.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);
Var transpose(Var a);
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(Var a, std::size_t rows, std::size_t cols);
Var sum(Var a);
Var mean(Var a);
Var leaky_relu(Var a, double slope);
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var square(Var a);
/// Row-wise softmax restricted to entries where `mask` is nonzero; masked
/// entries come out exactly 0. Throws kDegenerateRow on an all-zero mask row.
Var softmax_rows(Var logits, const Tensor& mask);

// Plain (tape-free) kernels shared with the operators above.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& logits, const Tensor& mask);

}  // namespace wsnad
