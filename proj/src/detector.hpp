#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "graph.hpp"
#include "layers.hpp"
#include "stream.hpp"

namespace wsnad {

enum class NodeGraph { kFull, kTopK };
enum class ModeGraph { kFull, kCorrelation };

struct Ablation {
  bool mode = false;  // drop the mode-axis attention block
  bool time = false;  // drop the time-axis attention block
  bool node = false;  // replace the spatial attention with a pass-through

  bool any() const { return mode || time || node; }
};

struct DetectorConfig {
  std::size_t window = 60;
  std::size_t hidden = 32;
  std::size_t gru_layers = 2;
  std::size_t epochs = 60;
  double learning_rate = 5e-5;
  NodeGraph node_graph = NodeGraph::kFull;
  std::size_t topk = 5;
  ModeGraph mode_graph = ModeGraph::kFull;
  std::vector<std::vector<std::size_t>> mode_dependencies;
  Ablation ablation;
  std::uint64_t seed = 1;
  NormKind norm = NormKind::kZScore;
  std::array<double, 3> split{0.8, 0.1, 0.1};

  /// Throws kConfig on the first violated constraint.
  void validate() const;
};

nlohmann::json to_json(const DetectorConfig& config);
/// Fields present in `doc` override `base`; unknown keys are a config error.
DetectorConfig config_from_json(const nlohmann::json& doc, DetectorConfig base = {});

struct DetectorGraphs {
  Adjacency mode;
  Adjacency time;
  Adjacency node;
};

/// Structure for a detector built from the normalised training split.
/// TopK needs `train.coordinates`; correlation adjacency pools each mode's
/// series over all nodes.
DetectorGraphs build_graphs(const DetectorConfig& config, const FlowTensor& train_normalized);

struct DetectorModel {
  DetectorConfig config;
  std::size_t nodes = 0;
  std::size_t modes = 0;
  std::vector<int> node_ids;
  std::vector<std::string> mode_names;

  std::optional<GatLayer> mode_gat;  // F = W, rectified output
  std::optional<GatLayer> time_gat;  // F = N, rectified output
  GruCell gru;                       // scalar input, shared over nodes and rows
  DenseLayer head;                   // D -> 1
  std::optional<GatLayer> node_gat;  // F = N, identity output

  DetectorGraphs graphs;
  NormStats norm;

  /// Registry order: mode GAT, time GAT, GRU layers, dense head, node GAT.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
  /// Length of each row-wise GRU sequence: W times the active feature blocks.
  std::size_t sequence_length() const;
};

/// Initialises every block from `config.seed` and then drops the blocks the
/// ablation disables, so ablated variants share the surviving initial weights.
DetectorModel create_detector(const DetectorConfig& config, std::size_t nodes, std::size_t modes,
                              DetectorGraphs graphs, NormStats norm);

/// Removes the flagged blocks from a model (flags already set stay set).
DetectorModel ablate(DetectorModel model, Ablation flags);

/// Intermediate extents of one forward pass, for inspection.
struct ForwardTrace {
  Shape mode_features;
  Shape time_features;
  Shape characteristic;
  Shape reduced;
  Shape representation;
  Shape prediction;
  Tensor node_attention;
};

/// Prediction of the readings at the batch target, M x N, in normalised units.
Var forward(Tape& tape, const DetectorModel& model, const WindowBatch& batch,
            ForwardTrace* trace = nullptr);
Tensor predict(const DetectorModel& model, const WindowBatch& batch);

/// Mean squared error over the M x N entries of one batch.
Var batch_loss(Var prediction, const Tensor& target);
/// Average over batches of the per-batch mean squared error.
double mean_squared_error(std::span<const Tensor> predictions, std::span<const Tensor> targets);
double segment_loss(const DetectorModel& model, const FlowTensor& normalized);

/// Copies the gradients accumulated on `tape` into each parameter's `grad`.
void collect_gradients(DetectorModel& model, const Tape& tape);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_rmse = 0.0;
  std::optional<double> validation_loss;
};

struct TrainResult {
  DetectorModel model;
  std::vector<EpochStats> history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Chronological stride-1 windows, one Adam update per window.
TrainResult train(const DetectorConfig& config, const FlowTensor& train_normalized,
                  const FlowTensor& validation_normalized, const NormStats& norm,
                  const EpochCallback& on_epoch = {});

/// Throws kDimension when `flow` does not have the model's node/mode extents.
void check_compatible(const DetectorModel& model, const FlowTensor& flow);

/// Checkpoint: JSON metadata at `meta_path`, float64 little-endian parameter
/// payload next to it with the extension replaced by ".bin".
void save_checkpoint(const DetectorModel& model, const std::filesystem::path& meta_path);
DetectorModel load_checkpoint(const std::filesystem::path& meta_path);

}  // namespace wsnad
