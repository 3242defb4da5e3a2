#include "stream.hpp"

#include <cmath>
#include <fstream>

#include "binio.hpp"

namespace wsnad {

std::vector<double> FlowTensor::series(std::size_t node, std::size_t mode) const {
  std::vector<double> out(length);
  for (std::size_t t = 0; t < length; ++t) out[t] = at(t, node, mode);
  return out;
}

std::optional<std::size_t> FlowTensor::node_index(int id) const {
  for (std::size_t i = 0; i < node_ids.size(); ++i)
    if (node_ids[i] == id) return i;
  return std::nullopt;
}

std::optional<std::size_t> FlowTensor::mode_index(const std::string& name) const {
  for (std::size_t j = 0; j < mode_names.size(); ++j)
    if (mode_names[j] == name) return j;
  return std::nullopt;
}

FlowTensor FlowTensor::segment(std::size_t begin, std::size_t end) const {
  if (begin > end || end > length) {
    fail(ErrorCode::kContract, "segment [" + std::to_string(begin) + ", " + std::to_string(end) +
                                   ") outside a flow of length " + std::to_string(length));
  }
  FlowTensor out = *this;
  out.length = end - begin;
  const std::size_t stride = nodes * modes;
  out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                    values.begin() + static_cast<std::ptrdiff_t>(end * stride));
  out.epoch_start = timestamp(begin);
  return out;
}

void FlowTensor::validate() const {
  if (nodes == 0 || modes == 0) fail(ErrorCode::kDimension, "flow needs at least one node and one mode");
  if (values.size() != nodes * modes * length) {
    fail(ErrorCode::kDimension, "flow payload holds " + std::to_string(values.size()) +
                                    " values, expected " + std::to_string(nodes * modes * length));
  }
  if (node_ids.size() != nodes || mode_names.size() != modes) {
    fail(ErrorCode::kDimension, "flow labels do not match its extents");
  }
  if (!(epoch_stride > 0)) fail(ErrorCode::kContract, "flow timestamps must be strictly increasing");
  for (double v : values) {
    if (!std::isfinite(v)) fail(ErrorCode::kNonFinite, "flow contains a non-finite reading");
  }
}

FlowTensor make_flow(std::size_t nodes, std::size_t modes, std::size_t length,
                     std::vector<double> values) {
  FlowTensor flow;
  flow.nodes = nodes;
  flow.modes = modes;
  flow.length = length;
  flow.values = std::move(values);
  for (std::size_t i = 0; i < nodes; ++i) flow.node_ids.push_back(static_cast<int>(i + 1));
  for (std::size_t j = 0; j < modes; ++j) flow.mode_names.push_back("mode" + std::to_string(j));
  flow.validate();
  return flow;
}

SplitFlows split(const FlowTensor& flow, std::array<double, 3> ratios, std::size_t min_length) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r > 0)) fail(ErrorCode::kContract, "split ratios must be positive");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::kContract, "split ratios must sum to 1");
  const double t = static_cast<double>(flow.length);
  const std::size_t n_train = static_cast<std::size_t>(std::llround(t * ratios[0]));
  const std::size_t n_val = static_cast<std::size_t>(std::llround(t * ratios[1]));
  if (n_train + n_val > flow.length) fail(ErrorCode::kContract, "flow too short to split");
  const std::size_t n_test = flow.length - n_train - n_val;
  const std::array<std::size_t, 3> lengths{n_train, n_val, n_test};
  const char* names[] = {"training", "validation", "test"};
  for (std::size_t k = 0; k < 3; ++k) {
    if (lengths[k] < min_length || lengths[k] == 0) {
      fail(ErrorCode::kContract, std::string(names[k]) + " segment has " + std::to_string(lengths[k]) +
                                     " timestamps, need at least " +
                                     std::to_string(std::max<std::size_t>(min_length, 1)));
    }
  }
  return {flow.segment(0, n_train), flow.segment(n_train, n_train + n_val),
          flow.segment(n_train + n_val, flow.length)};
}

const char* to_string(NormKind kind) { return kind == NormKind::kZScore ? "zscore" : "maxmin"; }

NormKind parse_norm_kind(const std::string& name) {
  if (name == "zscore") return NormKind::kZScore;
  if (name == "maxmin") return NormKind::kMaxMin;
  fail(ErrorCode::kConfig, "unknown normalisation '" + name + "' (expected zscore or maxmin)");
}

double NormStats::apply(std::size_t node, std::size_t mode, double x) const {
  if (kind == NormKind::kZScore) {
    const std::size_t k = node * modes + mode;
    return (x - mean[k]) / sd[k];
  }
  return (x - lo[mode]) / (hi[mode] - lo[mode]);
}

double NormStats::invert(std::size_t node, std::size_t mode, double x) const {
  if (kind == NormKind::kZScore) {
    const std::size_t k = node * modes + mode;
    return x * sd[k] + mean[k];
  }
  return x * (hi[mode] - lo[mode]) + lo[mode];
}

std::optional<std::array<double, 2>> documented_range(const std::string& mode_name) {
  if (mode_name == "temperature" || mode_name == "humidity") return std::array<double, 2>{0.0, 100.0};
  if (mode_name == "voltage") return std::array<double, 2>{2.0, 3.0};
  return std::nullopt;
}

NormStats fit_norm(const FlowTensor& train, NormKind kind) {
  train.validate();
  if (train.length == 0) fail(ErrorCode::kContract, "fit_norm: empty training segment");
  NormStats stats;
  stats.kind = kind;
  stats.nodes = train.nodes;
  stats.modes = train.modes;
  if (kind == NormKind::kZScore) {
    stats.mean.resize(train.nodes * train.modes);
    stats.sd.resize(train.nodes * train.modes);
    const double n = static_cast<double>(train.length);
    for (std::size_t i = 0; i < train.nodes; ++i) {
      for (std::size_t j = 0; j < train.modes; ++j) {
        double total = 0.0;
        for (std::size_t t = 0; t < train.length; ++t) total += train.at(t, i, j);
        const double mu = total / n;
        double sq = 0.0;
        for (std::size_t t = 0; t < train.length; ++t) {
          const double d = train.at(t, i, j) - mu;
          sq += d * d;
        }
        const double sigma = std::sqrt(sq / n);
        if (!(sigma > 0)) {
          fail(ErrorCode::kConstantSeries, "training series of node " + std::to_string(train.node_ids[i]) +
                                               ", mode " + train.mode_names[j] + " is constant");
        }
        stats.mean[i * train.modes + j] = mu;
        stats.sd[i * train.modes + j] = sigma;
      }
    }
  } else {
    for (std::size_t j = 0; j < train.modes; ++j) {
      auto range = documented_range(train.mode_names[j]);
      double lo, hi;
      if (range) {
        lo = (*range)[0];
        hi = (*range)[1];
      } else {
        lo = INFINITY;
        hi = -INFINITY;
        for (std::size_t t = 0; t < train.length; ++t)
          for (std::size_t i = 0; i < train.nodes; ++i) {
            lo = std::min(lo, train.at(t, i, j));
            hi = std::max(hi, train.at(t, i, j));
          }
      }
      if (!(lo < hi)) {
        fail(ErrorCode::kConstantSeries, "max-min bounds for mode " + train.mode_names[j] + " are empty");
      }
      stats.lo.push_back(lo);
      stats.hi.push_back(hi);
    }
  }
  return stats;
}

namespace {

FlowTensor transform(const FlowTensor& flow, const NormStats& stats, bool forward) {
  if (flow.nodes != stats.nodes || flow.modes != stats.modes) {
    fail(ErrorCode::kDimension, "normalisation stats cover " + std::to_string(stats.nodes) + "x" +
                                    std::to_string(stats.modes) + " series, flow has " +
                                    std::to_string(flow.nodes) + "x" + std::to_string(flow.modes));
  }
  FlowTensor out = flow;
  for (std::size_t t = 0; t < flow.length; ++t)
    for (std::size_t i = 0; i < flow.nodes; ++i)
      for (std::size_t j = 0; j < flow.modes; ++j) {
        const double x = flow.at(t, i, j);
        out.at(t, i, j) = forward ? stats.apply(i, j, x) : stats.invert(i, j, x);
      }
  return out;
}

}  // namespace

FlowTensor apply_norm(const FlowTensor& flow, const NormStats& stats) {
  return transform(flow, stats, true);
}

FlowTensor invert_norm(const FlowTensor& flow, const NormStats& stats) {
  return transform(flow, stats, false);
}

nlohmann::json to_json(const NormStats& stats) {
  nlohmann::json doc{{"kind", to_string(stats.kind)}, {"nodes", stats.nodes}, {"modes", stats.modes}};
  if (stats.kind == NormKind::kZScore) {
    doc["mean"] = stats.mean;
    doc["sd"] = stats.sd;
  } else {
    doc["lo"] = stats.lo;
    doc["hi"] = stats.hi;
  }
  return doc;
}

NormStats norm_from_json(const nlohmann::json& doc) {
  NormStats stats;
  stats.kind = parse_norm_kind(doc.at("kind").get<std::string>());
  stats.nodes = doc.at("nodes").get<std::size_t>();
  stats.modes = doc.at("modes").get<std::size_t>();
  if (stats.kind == NormKind::kZScore) {
    stats.mean = doc.at("mean").get<std::vector<double>>();
    stats.sd = doc.at("sd").get<std::vector<double>>();
    if (stats.mean.size() != stats.nodes * stats.modes || stats.sd.size() != stats.mean.size()) {
      fail(ErrorCode::kDimension, "normalisation stats do not cover every (node, mode) pair");
    }
  } else {
    stats.lo = doc.at("lo").get<std::vector<double>>();
    stats.hi = doc.at("hi").get<std::vector<double>>();
    if (stats.lo.size() != stats.modes || stats.hi.size() != stats.modes) {
      fail(ErrorCode::kDimension, "max-min bounds do not cover every mode");
    }
  }
  return stats;
}

WindowView::WindowView(const FlowTensor& flow, std::size_t window) : flow_(&flow), window_(window) {
  if (window == 0) fail(ErrorCode::kContract, "window length must be positive");
  if (flow.length <= window) {
    fail(ErrorCode::kContract, "a flow of length " + std::to_string(flow.length) +
                                   " holds no target for a window of " + std::to_string(window));
  }
}

WindowBatch WindowView::at_target(std::size_t t) const {
  if (t < window_ || t >= flow_->length) {
    fail(ErrorCode::kContract, "target index " + std::to_string(t) + " outside [" +
                                   std::to_string(window_) + ", " + std::to_string(flow_->length - 1) + "]");
  }
  const FlowTensor& f = *flow_;
  WindowBatch batch;
  batch.target_index = t;
  batch.window = Tensor({f.nodes, f.modes, window_});
  batch.target = Tensor({f.nodes, f.modes});
  auto w = batch.window.data();
  for (std::size_t i = 0; i < f.nodes; ++i)
    for (std::size_t j = 0; j < f.modes; ++j) {
      for (std::size_t k = 0; k < window_; ++k) w[(i * f.modes + j) * window_ + k] = f.at(t - window_ + k, i, j);
      batch.target(i, j) = f.at(t, i, j);
    }
  return batch;
}

WindowView windows(const FlowTensor& flow, std::size_t window) { return WindowView(flow, window); }

void save_flow(const FlowTensor& flow, const std::filesystem::path& meta_path,
               const std::optional<NormStats>& stats) {
  flow.validate();
  std::filesystem::path payload = meta_path;
  payload.replace_extension(".bin");
  nlohmann::json meta{{"format", "wsnad-flow"},
                      {"version", 1},
                      {"nodes", flow.nodes},
                      {"modes", flow.modes},
                      {"timestamps", flow.length},
                      {"node_ids", flow.node_ids},
                      {"mode_names", flow.mode_names},
                      {"epoch_start", flow.epoch_start},
                      {"epoch_stride", flow.epoch_stride},
                      {"layout", "time-node-mode"},
                      {"payload", payload.filename().string()},
                      {"payload_dtype", "float32-le"},
                      {"provenance", flow.provenance}};
  if (stats) meta["norm"] = to_json(*stats);
  if (flow.coordinates) {
    nlohmann::json coords = nlohmann::json::array();
    for (std::size_t i = 0; i < flow.coordinates->size(); ++i) {
      coords.push_back({{"id", flow.coordinates->ids[i]},
                        {"x", flow.coordinates->x[i]},
                        {"y", flow.coordinates->y[i]}});
    }
    meta["coordinates"] = coords;
  }
  if (meta_path.has_parent_path()) std::filesystem::create_directories(meta_path.parent_path());
  std::ofstream out(meta_path, std::ios::trunc);
  if (!out) fail(ErrorCode::kInput, "cannot write " + meta_path.string());
  out << meta.dump(2) << '\n';
  binio::write_f32(payload, flow.values);
}

FlowTensor load_flow(const std::filesystem::path& meta_path, std::optional<NormStats>* stats) {
  std::ifstream in(meta_path);
  if (!in) fail(ErrorCode::kInput, "cannot open prepared flow " + meta_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInput, meta_path.string() + ": " + e.what());
  }
  if (meta.value("format", "") != "wsnad-flow") {
    fail(ErrorCode::kInput, meta_path.string() + " is not a prepared-flow document");
  }
  FlowTensor flow;
  try {
    flow.nodes = meta.at("nodes").get<std::size_t>();
    flow.modes = meta.at("modes").get<std::size_t>();
    flow.length = meta.at("timestamps").get<std::size_t>();
    flow.node_ids = meta.at("node_ids").get<std::vector<int>>();
    flow.mode_names = meta.at("mode_names").get<std::vector<std::string>>();
    flow.epoch_start = meta.at("epoch_start").get<double>();
    flow.epoch_stride = meta.at("epoch_stride").get<double>();
    flow.provenance = meta.value("provenance", nlohmann::json::object());
    if (meta.contains("coordinates")) {
      NodeCoordinates coords;
      for (const auto& c : meta["coordinates"]) {
        coords.ids.push_back(c.at("id").get<int>());
        coords.x.push_back(c.at("x").get<double>());
        coords.y.push_back(c.at("y").get<double>());
      }
      flow.coordinates = std::move(coords);
    }
    if (stats) {
      if (meta.contains("norm")) *stats = norm_from_json(meta["norm"]);
      else stats->reset();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInput, meta_path.string() + ": " + e.what());
  }
  const auto payload = meta_path.parent_path() / meta.at("payload").get<std::string>();
  flow.values = binio::read_f32(payload, flow.nodes * flow.modes * flow.length, ErrorCode::kInput);
  flow.validate();
  return flow;
}

}  // namespace wsnad
