#include "detector.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "adam.hpp"
#include "binio.hpp"

namespace wsnad {

namespace {

const char* to_string(NodeGraph g) { return g == NodeGraph::kFull ? "full" : "topk"; }
const char* to_string(ModeGraph g) { return g == ModeGraph::kFull ? "full" : "correlation"; }

}  // namespace

void DetectorConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::kConfig, what); };
  if (window < 2) bad("window length must be at least 2, got " + std::to_string(window));
  if (hidden < 1) bad("GRU hidden size must be at least 1");
  if (gru_layers < 1) bad("at least one GRU layer is required");
  if (epochs < 1) bad("epochs must be at least 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) bad("learning rate must be positive");
  if (node_graph == NodeGraph::kTopK && topk < 1) bad("topk must be at least 1");
  if (mode_graph == ModeGraph::kCorrelation && mode_dependencies.empty()) {
    bad("correlation mode graph needs dependency sets");
  }
  double total = 0.0;
  for (double r : split) {
    if (!(r > 0)) bad("split ratios must be positive");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) bad("split ratios must sum to 1");
}

nlohmann::json to_json(const DetectorConfig& c) {
  return {{"window", c.window},
          {"hidden", c.hidden},
          {"gru_layers", c.gru_layers},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"node_graph", to_string(c.node_graph)},
          {"topk", c.topk},
          {"mode_graph", to_string(c.mode_graph)},
          {"mode_dependencies", c.mode_dependencies},
          {"ablation", {{"mode", c.ablation.mode}, {"time", c.ablation.time}, {"node", c.ablation.node}}},
          {"seed", c.seed},
          {"norm", to_string(c.norm)},
          {"split", c.split}};
}

DetectorConfig config_from_json(const nlohmann::json& doc, DetectorConfig c) {
  if (!doc.is_object()) fail(ErrorCode::kConfig, "detector config must be a JSON object");
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "window") c.window = value.get<std::size_t>();
      else if (key == "hidden") c.hidden = value.get<std::size_t>();
      else if (key == "gru_layers") c.gru_layers = value.get<std::size_t>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "topk") c.topk = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "norm") c.norm = parse_norm_kind(value.get<std::string>());
      else if (key == "split") c.split = value.get<std::array<double, 3>>();
      else if (key == "mode_dependencies") c.mode_dependencies = value.get<std::vector<std::vector<std::size_t>>>();
      else if (key == "node_graph") {
        const auto s = value.get<std::string>();
        if (s == "full") c.node_graph = NodeGraph::kFull;
        else if (s == "topk") c.node_graph = NodeGraph::kTopK;
        else fail(ErrorCode::kConfig, "node_graph must be full or topk, got " + s);
      } else if (key == "mode_graph") {
        const auto s = value.get<std::string>();
        if (s == "full") c.mode_graph = ModeGraph::kFull;
        else if (s == "correlation") c.mode_graph = ModeGraph::kCorrelation;
        else fail(ErrorCode::kConfig, "mode_graph must be full or correlation, got " + s);
      } else if (key == "ablation") {
        c.ablation.mode = value.value("mode", c.ablation.mode);
        c.ablation.time = value.value("time", c.ablation.time);
        c.ablation.node = value.value("node", c.ablation.node);
      } else {
        fail(ErrorCode::kConfig, "unknown detector config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("detector config: ") + e.what());
  }
  return c;
}

DetectorGraphs build_graphs(const DetectorConfig& config, const FlowTensor& train) {
  DetectorGraphs g;
  if (config.mode_graph == ModeGraph::kFull) {
    g.mode = make_adjacency(AdjacencyKind::kMode, Tensor({train.modes, train.modes}, 1.0));
  } else {
    const std::size_t len = train.nodes * train.length;
    Tensor series({train.modes, len});
    for (std::size_t j = 0; j < train.modes; ++j)
      for (std::size_t i = 0; i < train.nodes; ++i)
        for (std::size_t t = 0; t < train.length; ++t) series(j, i * train.length + t) = train.at(t, i, j);
    g.mode = mode_adjacency(series, config.mode_dependencies);
  }
  g.time = time_adjacency(config.window);
  if (config.node_graph == NodeGraph::kFull) {
    g.node = node_adjacency_full(train.nodes);
  } else {
    if (!train.coordinates) fail(ErrorCode::kConfig, "topk node graph needs node coordinates in the flow");
    g.node = node_adjacency_topk(train.coordinates->select(train.node_ids), config.topk);
  }
  return g;
}

std::vector<Parameter*> DetectorModel::parameters() {
  std::vector<Parameter*> out;
  if (mode_gat) for (Parameter* p : mode_gat->parameters()) out.push_back(p);
  if (time_gat) for (Parameter* p : time_gat->parameters()) out.push_back(p);
  for (Parameter* p : gru.parameters()) out.push_back(p);
  for (Parameter* p : head.parameters()) out.push_back(p);
  if (node_gat) for (Parameter* p : node_gat->parameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> DetectorModel::parameters() const {
  auto mutable_list = const_cast<DetectorModel*>(this)->parameters();
  return {mutable_list.begin(), mutable_list.end()};
}

std::size_t DetectorModel::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.size();
  return n;
}

std::size_t DetectorModel::sequence_length() const {
  return config.window * (1 + (mode_gat ? 1 : 0) + (time_gat ? 1 : 0));
}

DetectorModel create_detector(const DetectorConfig& config, std::size_t nodes, std::size_t modes,
                              DetectorGraphs graphs, NormStats norm) {
  config.validate();
  if (graphs.mode.extent() != modes || graphs.time.extent() != config.window ||
      graphs.node.extent() != nodes) {
    fail(ErrorCode::kDimension, "detector graphs do not match " + std::to_string(nodes) + " nodes, " +
                                    std::to_string(modes) + " modes, window " + std::to_string(config.window));
  }
  Rng rng(config.seed);
  DetectorModel model;
  model.config = config;
  model.config.ablation = {};
  model.nodes = nodes;
  model.modes = modes;
  for (std::size_t i = 0; i < nodes; ++i) model.node_ids.push_back(static_cast<int>(i + 1));
  for (std::size_t j = 0; j < modes; ++j) model.mode_names.push_back("mode" + std::to_string(j));
  model.mode_gat = GatLayer::create("mode_gat", config.window, config.window, Activation::kRelu, rng);
  model.time_gat = GatLayer::create("time_gat", modes, modes, Activation::kRelu, rng);
  model.gru = GruCell::create("gru", 1, config.hidden, config.gru_layers, rng);
  model.head = DenseLayer::create("head", config.hidden, 1, rng);
  model.node_gat = GatLayer::create("node_gat", modes, modes, Activation::kIdentity, rng);
  model.graphs = std::move(graphs);
  model.norm = std::move(norm);
  return ablate(std::move(model), config.ablation);
}

DetectorModel ablate(DetectorModel model, Ablation flags) {
  if (flags.mode) {
    model.mode_gat.reset();
    model.config.ablation.mode = true;
  }
  if (flags.time) {
    model.time_gat.reset();
    model.config.ablation.time = true;
  }
  if (flags.node) {
    model.node_gat.reset();
    model.config.ablation.node = true;
  }
  return model;
}

Var forward(Tape& tape, const DetectorModel& model, const WindowBatch& batch, ForwardTrace* trace) {
  const std::size_t m = model.nodes;
  const std::size_t n = model.modes;
  const std::size_t w = model.config.window;
  if (batch.window.shape() != Shape{m, n, w} || batch.target.shape() != Shape{m, n}) {
    fail(ErrorCode::kDimension, "forward: window " + to_string(batch.window.shape()) + " / target " +
                                    to_string(batch.target.shape()) + " do not match model [" +
                                    std::to_string(m) + "x" + std::to_string(n) + "x" + std::to_string(w) + "]");
  }

  std::optional<BoundGat> mode_gat, time_gat, node_gat;
  if (model.mode_gat) mode_gat = bind(tape, *model.mode_gat);
  if (model.time_gat) time_gat = bind(tape, *model.time_gat);

  std::vector<Var> rows;
  rows.reserve(m);
  auto window = batch.window.data();
  for (std::size_t i = 0; i < m; ++i) {
    Tensor slab({n, w}, std::vector<double>(window.begin() + static_cast<std::ptrdiff_t>(i * n * w),
                                            window.begin() + static_cast<std::ptrdiff_t>((i + 1) * n * w)));
    Var x = tape.constant(std::move(slab));
    std::vector<Var> parts{x};
    if (mode_gat) {
      Var f = gat_forward(*mode_gat, x, model.graphs.mode.entries).features;
      if (trace && i == 0) trace->mode_features = f.value().shape();
      parts.push_back(f);
    }
    if (time_gat) {
      Var f = gat_forward(*time_gat, transpose(x), model.graphs.time.entries).features;
      if (trace && i == 0) trace->time_features = f.value().shape();
      parts.push_back(transpose(f));
    }
    rows.push_back(parts.size() == 1 ? x : concat(parts, 1));
    if (trace && i == 0) trace->characteristic = rows.back().value().shape();
  }

  Var stacked = m == 1 ? rows.front() : concat(rows, 0);
  // Each row of `stacked` is one scalar sequence; pack them step-major.
  const std::size_t batch_rows = stacked.rows();
  Var packed = reshape(transpose(stacked), stacked.cols() * batch_rows, 1);
  Var reduced = gru_run_packed(tape, model.gru, packed, batch_rows);
  Var representation = reshape(dense_forward(tape, model.head, reduced), m, n);
  if (trace) {
    trace->reduced = Shape{n, reduced.cols()};
    trace->representation = representation.value().shape();
  }

  Var out = representation;
  if (model.node_gat) {
    node_gat = bind(tape, *model.node_gat);
    GatResult r = gat_forward(*node_gat, representation, model.graphs.node.entries);
    out = r.features;
    if (trace) trace->node_attention = r.attention.value();
  }
  if (trace) trace->prediction = out.value().shape();
  return out;
}

Tensor predict(const DetectorModel& model, const WindowBatch& batch) {
  Tape tape(false);
  return forward(tape, model, batch).value();
}

Var batch_loss(Var prediction, const Tensor& target) {
  return mean(square(sub(prediction, prediction.tape()->constant(target))));
}

double mean_squared_error(std::span<const Tensor> predictions, std::span<const Tensor> targets) {
  if (predictions.empty()) fail(ErrorCode::kContract, "loss over an empty segment");
  if (predictions.size() != targets.size()) {
    fail(ErrorCode::kDimension, "loss: " + std::to_string(predictions.size()) + " predictions for " +
                                    std::to_string(targets.size()) + " targets");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    if (!predictions[k].same_shape(targets[k])) {
      fail(ErrorCode::kDimension, "loss: prediction " + to_string(predictions[k].shape()) +
                                      " vs target " + to_string(targets[k].shape()));
    }
    double sq = 0.0;
    for (std::size_t e = 0; e < predictions[k].size(); ++e) {
      const double d = targets[k][e] - predictions[k][e];
      sq += d * d;
    }
    total += sq / static_cast<double>(predictions[k].size());
  }
  return total / static_cast<double>(predictions.size());
}

double segment_loss(const DetectorModel& model, const FlowTensor& normalized) {
  check_compatible(model, normalized);
  WindowView view(normalized, model.config.window);
  std::vector<Tensor> preds, targets;
  for (std::size_t k = 0; k < view.size(); ++k) {
    WindowBatch b = view[k];
    preds.push_back(predict(model, b));
    targets.push_back(std::move(b.target));
  }
  return mean_squared_error(preds, targets);
}

void collect_gradients(DetectorModel& model, const Tape& tape) {
  for (Parameter* p : model.parameters()) p->grad = tape.gradient(*p);
}

void check_compatible(const DetectorModel& model, const FlowTensor& flow) {
  if (flow.nodes != model.nodes || flow.modes != model.modes) {
    fail(ErrorCode::kDimension, "model expects " + std::to_string(model.nodes) + " nodes x " +
                                    std::to_string(model.modes) + " modes, flow has " +
                                    std::to_string(flow.nodes) + " x " + std::to_string(flow.modes));
  }
}

TrainResult train(const DetectorConfig& config, const FlowTensor& train_flow,
                  const FlowTensor& validation_flow, const NormStats& norm, const EpochCallback& on_epoch) {
  config.validate();
  DetectorModel model =
      create_detector(config, train_flow.nodes, train_flow.modes, build_graphs(config, train_flow), norm);
  model.node_ids = train_flow.node_ids;
  model.mode_names = train_flow.mode_names;
  WindowView view(train_flow, config.window);
  const bool have_validation = validation_flow.length > config.window;
  if (have_validation) check_compatible(model, validation_flow);

  Adam adam(AdamOptions{config.learning_rate});
  std::vector<Parameter*> params = model.parameters();
  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t k = 0; k < view.size(); ++k) {
      WindowBatch batch = view[k];
      Tape tape;
      Var loss = batch_loss(forward(tape, model, batch), batch.target);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        fail(ErrorCode::kNonFinite, "non-finite training loss at epoch " + std::to_string(epoch + 1) +
                                        ", batch " + std::to_string(k) + " (target index " +
                                        std::to_string(batch.target_index) + ")");
      }
      tape.backward(loss);
      collect_gradients(model, tape);
      adam.step(params);
      total += value;
    }
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.train_loss = total / static_cast<double>(view.size());
    stats.train_rmse = std::sqrt(stats.train_loss);
    if (have_validation) stats.validation_loss = segment_loss(model, validation_flow);
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  result.model = std::move(model);
  return result;
}

namespace {

nlohmann::json adjacency_json(const Adjacency& a) {
  return {{"kind", to_string(a.kind)}, {"extent", a.extent()}, {"entries", a.entries.values()}};
}

Adjacency adjacency_from_json(const nlohmann::json& doc, AdjacencyKind kind) {
  const auto extent = doc.at("extent").get<std::size_t>();
  return make_adjacency(kind, Tensor({extent, extent}, doc.at("entries").get<std::vector<double>>()));
}

}  // namespace

void save_checkpoint(const DetectorModel& model, const std::filesystem::path& meta_path) {
  std::filesystem::path payload = meta_path;
  payload.replace_extension(".bin");
  nlohmann::json registry = nlohmann::json::array();
  std::vector<double> values;
  for (const Parameter* p : model.parameters()) {
    registry.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", values.size()}});
    values.insert(values.end(), p->value.data().begin(), p->value.data().end());
  }
  nlohmann::json meta{{"format", "wsnad-checkpoint"},
                      {"version", 1},
                      {"config", to_json(model.config)},
                      {"nodes", model.nodes},
                      {"modes", model.modes},
                      {"node_ids", model.node_ids},
                      {"mode_names", model.mode_names},
                      {"norm", to_json(model.norm)},
                      {"adjacency",
                       {{"mode", adjacency_json(model.graphs.mode)},
                        {"time", adjacency_json(model.graphs.time)},
                        {"node", adjacency_json(model.graphs.node)}}},
                      {"parameter_count", values.size()},
                      {"parameters", registry},
                      {"payload", payload.filename().string()},
                      {"payload_dtype", "float64-le"}};
  if (meta_path.has_parent_path()) std::filesystem::create_directories(meta_path.parent_path());
  std::ofstream out(meta_path, std::ios::trunc);
  if (!out) fail(ErrorCode::kInput, "cannot write " + meta_path.string());
  out << meta.dump(2) << '\n';
  binio::write_f64(payload, values);
}

DetectorModel load_checkpoint(const std::filesystem::path& meta_path) {
  std::ifstream in(meta_path);
  if (!in) fail(ErrorCode::kCheckpoint, "cannot open checkpoint " + meta_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCheckpoint, meta_path.string() + ": " + e.what());
  }
  if (meta.value("format", "") != "wsnad-checkpoint") {
    fail(ErrorCode::kCheckpoint, meta_path.string() + " is not a checkpoint");
  }
  if (meta.value("version", 0) != 1) fail(ErrorCode::kCheckpoint, "unsupported checkpoint version");

  DetectorModel model;
  std::size_t total = 0;
  try {
    const DetectorConfig config = config_from_json(meta.at("config"));
    const auto nodes = meta.at("nodes").get<std::size_t>();
    const auto modes = meta.at("modes").get<std::size_t>();
    DetectorGraphs graphs{adjacency_from_json(meta.at("adjacency").at("mode"), AdjacencyKind::kMode),
                          adjacency_from_json(meta.at("adjacency").at("time"), AdjacencyKind::kTime),
                          adjacency_from_json(meta.at("adjacency").at("node"), AdjacencyKind::kNode)};
    model = create_detector(config, nodes, modes, std::move(graphs), norm_from_json(meta.at("norm")));
    model.node_ids = meta.at("node_ids").get<std::vector<int>>();
    model.mode_names = meta.at("mode_names").get<std::vector<std::string>>();
    if (model.node_ids.size() != nodes || model.mode_names.size() != modes ||
        model.norm.nodes != nodes || model.norm.modes != modes) {
      fail(ErrorCode::kDimension, "checkpoint labels or stats do not match " + std::to_string(nodes) +
                                      " nodes x " + std::to_string(modes) + " modes");
    }
    const auto& registry = meta.at("parameters");
    auto params = model.parameters();
    if (registry.size() != params.size()) {
      fail(ErrorCode::kCheckpoint, "checkpoint lists " + std::to_string(registry.size()) +
                                       " parameters, architecture has " + std::to_string(params.size()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto name = registry[k].at("name").get<std::string>();
      const auto shape = registry[k].at("shape").get<Shape>();
      if (name != params[k]->name) {
        fail(ErrorCode::kCheckpoint, "parameter " + std::to_string(k) + " is '" + name + "', expected '" +
                                         params[k]->name + "'");
      }
      if (shape != params[k]->value.shape()) {
        fail(ErrorCode::kDimension, "parameter " + name + ": checkpoint shape " + to_string(shape) +
                                        ", expected " + to_string(params[k]->value.shape()));
      }
      if (registry[k].at("offset").get<std::size_t>() != total) {
        fail(ErrorCode::kCheckpoint, "parameter " + name + " has an inconsistent payload offset");
      }
      total += params[k]->value.size();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCheckpoint, meta_path.string() + ": " + e.what());
  }

  const auto payload = meta_path.parent_path() / meta.at("payload").get<std::string>();
  const std::vector<double> values = binio::read_f64(payload, total, ErrorCode::kCheckpoint);
  std::size_t offset = 0;
  for (Parameter* p : model.parameters()) {
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(offset),
              values.begin() + static_cast<std::ptrdiff_t>(offset + p->value.size()), p->value.data().begin());
    offset += p->value.size();
    p->zero_grad();
  }
  return model;
}

}  // namespace wsnad
