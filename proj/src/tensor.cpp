#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wsnad {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kInput: return "input error";
    case ErrorCode::kDimension: return "dimension error";
    case ErrorCode::kContract: return "contract error";
    case ErrorCode::kDegenerateRow: return "degenerate row";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kConstantSeries: return "constant series";
    case ErrorCode::kMissingNode: return "missing node";
    case ErrorCode::kCheckpoint: return "checkpoint error";
    case ErrorCode::kConfig: return "config error";
  }
  return "error";
}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

namespace {

void check_extents(const Shape& shape) {
  if (shape.empty()) fail(ErrorCode::kDimension, "tensor shape must have at least one extent");
  for (auto extent : shape) {
    if (extent == 0) {
      fail(ErrorCode::kDimension, "tensor extents must be positive, got " + to_string(shape));
    }
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (element_count(shape_) != data_.size()) {
    fail(ErrorCode::kDimension, "shape " + to_string(shape_) + " needs " +
                                    std::to_string(element_count(shape_)) + " values, got " +
                                    std::to_string(data_.size()));
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

std::size_t Tensor::rows() const {
  if (shape_.size() != 2) fail(ErrorCode::kDimension, "expected a matrix, got " + to_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() != 2) fail(ErrorCode::kDimension, "expected a matrix, got " + to_string(shape_));
  return shape_[1];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != data_.size()) {
    fail(ErrorCode::kDimension, "cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::item() const {
  if (data_.size() != 1) {
    fail(ErrorCode::kContract, "expected a single-element tensor, got " + to_string(shape_));
  }
  return data_[0];
}

}  // namespace wsnad
