#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graph.hpp"
#include "tensor.hpp"

namespace wsnad {

/// Readings over (time, node, mode), stored [t][node][mode] row-major.
struct FlowTensor {
  std::size_t nodes = 0;
  std::size_t modes = 0;
  std::size_t length = 0;
  std::vector<double> values;
  std::vector<int> node_ids;
  std::vector<std::string> mode_names;
  double epoch_start = 0.0;   // seconds of the first timestamp
  double epoch_stride = 1.0;  // seconds between timestamps
  std::optional<NodeCoordinates> coordinates;
  nlohmann::json provenance = nlohmann::json::object();

  double at(std::size_t t, std::size_t node, std::size_t mode) const {
    return values[(t * nodes + node) * modes + mode];
  }
  double& at(std::size_t t, std::size_t node, std::size_t mode) {
    return values[(t * nodes + node) * modes + mode];
  }
  double timestamp(std::size_t t) const { return epoch_start + epoch_stride * static_cast<double>(t); }
  std::vector<double> series(std::size_t node, std::size_t mode) const;
  std::optional<std::size_t> node_index(int id) const;
  std::optional<std::size_t> mode_index(const std::string& name) const;

  /// Timestamps [begin, end) as a new flow.
  FlowTensor segment(std::size_t begin, std::size_t end) const;
  /// Throws on inconsistent extents or non-finite values.
  void validate() const;
};

FlowTensor make_flow(std::size_t nodes, std::size_t modes, std::size_t length,
                     std::vector<double> values);

struct SplitFlows {
  FlowTensor train;
  FlowTensor validation;
  FlowTensor test;
};

/// Contiguous chronological segments with lengths round(T * r_train),
/// round(T * r_val) and the remainder. Any segment shorter than
/// `min_length` is a contract error.
SplitFlows split(const FlowTensor& flow, std::array<double, 3> ratios, std::size_t min_length = 0);

enum class NormKind { kZScore, kMaxMin };

const char* to_string(NormKind kind);
NormKind parse_norm_kind(const std::string& name);

struct NormStats {
  NormKind kind = NormKind::kZScore;
  std::size_t nodes = 0;
  std::size_t modes = 0;
  std::vector<double> mean;  // [node][mode], zscore
  std::vector<double> sd;    // [node][mode], zscore, population
  std::vector<double> lo;    // [mode], maxmin
  std::vector<double> hi;    // [mode], maxmin

  double apply(std::size_t node, std::size_t mode, double x) const;
  double invert(std::size_t node, std::size_t mode, double x) const;
};

/// Fixed max-min bounds for the lab modes that have documented ranges.
std::optional<std::array<double, 2>> documented_range(const std::string& mode_name);

NormStats fit_norm(const FlowTensor& train, NormKind kind);
FlowTensor apply_norm(const FlowTensor& flow, const NormStats& stats);
FlowTensor invert_norm(const FlowTensor& flow, const NormStats& stats);

nlohmann::json to_json(const NormStats& stats);
NormStats norm_from_json(const nlohmann::json& doc);

/// The W readings at t-W .. t-1 (window, shape {M, N, W}) and the reading at
/// t (target, shape {M, N}).
struct WindowBatch {
  Tensor window;
  Tensor target;
  std::size_t target_index = 0;
};

/// Stride-1 windows over a flow: one batch per target index in [W, T-1].
/// Holds a reference to `flow`.
class WindowView {
 public:
  WindowView(const FlowTensor& flow, std::size_t window);

  std::size_t size() const { return flow_->length - window_; }
  std::size_t window() const { return window_; }
  std::size_t first_target() const { return window_; }
  WindowBatch operator[](std::size_t k) const { return at_target(window_ + k); }
  WindowBatch at_target(std::size_t t) const;

 private:
  const FlowTensor* flow_;
  std::size_t window_;
};

WindowView windows(const FlowTensor& flow, std::size_t window);

/// Prepared-flow files: JSON metadata at `meta_path`, float32 little-endian
/// payload next to it with the extension replaced by ".bin".
void save_flow(const FlowTensor& flow, const std::filesystem::path& meta_path,
               const std::optional<NormStats>& stats = std::nullopt);
FlowTensor load_flow(const std::filesystem::path& meta_path, std::optional<NormStats>* stats = nullptr);

}  // namespace wsnad
