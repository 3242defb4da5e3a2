#include "gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "detector.hpp"
#include "rng.hpp"

namespace wsnad {

GradcheckOptions gradcheck_options_from_json(const nlohmann::json& doc) {
  GradcheckOptions o;
  if (doc.is_null()) return o;
  if (!doc.is_object()) fail(ErrorCode::kConfig, "gradcheck options must be a JSON object");
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "nodes") o.nodes = value.get<std::size_t>();
      else if (key == "modes") o.modes = value.get<std::size_t>();
      else if (key == "window") o.window = value.get<std::size_t>();
      else if (key == "hidden") o.hidden = value.get<std::size_t>();
      else if (key == "gru_layers") o.gru_layers = value.get<std::size_t>();
      else if (key == "epsilon") o.epsilon = value.get<double>();
      else if (key == "tolerance") o.tolerance = value.get<double>();
      else if (key == "seed") o.seed = value.get<std::uint64_t>();
      else if (key == "corrupt_factor") o.corrupt_factor = value.get<double>();
      else if (key == "corrupt_op") {
        OpKind kind;
        const auto name = value.get<std::string>();
        if (!parse_op_name(name, kind)) fail(ErrorCode::kConfig, "unknown op '" + name + "'");
        o.corrupt_op = kind;
      } else {
        fail(ErrorCode::kConfig, "unknown gradcheck option '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("gradcheck options: ") + e.what());
  }
  if (o.nodes < 2 || o.modes < 1 || o.window < 2 || o.hidden < 1 || o.gru_layers < 1) {
    fail(ErrorCode::kConfig, "gradcheck toy model needs nodes >= 2, window >= 2 and positive sizes");
  }
  if (!(o.epsilon > 0) || !(o.tolerance > 0)) fail(ErrorCode::kConfig, "epsilon and tolerance must be positive");
  return o;
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t m = options.nodes, n = options.modes, w = options.window;

  DetectorConfig config;
  config.window = w;
  config.hidden = options.hidden;
  config.gru_layers = options.gru_layers;
  config.epochs = 1;
  config.seed = options.seed;

  // A weighted mode graph exercises the logit scaling path as well.
  Rng rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  DetectorGraphs graphs;
  Tensor mode_entries({n, n}, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) mode_entries(i, j) = rng.uniform(-0.9, 0.9);
  graphs.mode = make_adjacency(AdjacencyKind::kMode, mode_entries);
  graphs.time = time_adjacency(w);
  graphs.node = node_adjacency_full(m);
  config.mode_graph = ModeGraph::kFull;

  NormStats norm;
  norm.nodes = m;
  norm.modes = n;
  norm.mean.assign(m * n, 0.0);
  norm.sd.assign(m * n, 1.0);
  DetectorModel model = create_detector(config, m, n, graphs, norm);

  WindowBatch batch{Tensor({m, n, w}), Tensor({m, n}), w};
  for (std::size_t e = 0; e < batch.window.size(); ++e) batch.window[e] = rng.normal();
  for (std::size_t e = 0; e < batch.target.size(); ++e) batch.target[e] = rng.normal();

  auto loss_value = [&] {
    Tape tape(false);
    return batch_loss(forward(tape, model, batch), batch.target).value().item();
  };

  {
    std::optional<ScopedBackwardFault> fault;
    if (options.corrupt_op) fault.emplace(*options.corrupt_op, options.corrupt_factor);
    Tape tape;
    Var loss = batch_loss(forward(tape, model, batch), batch.target);
    tape.backward(loss);
    collect_gradients(model, tape);
  }

  GradcheckReport report;
  report.options = options;
  for (Parameter* p : model.parameters()) {
    ParameterCheck check;
    check.name = p->name;
    check.entries = p->value.size();
    for (std::size_t e = 0; e < p->value.size(); ++e) {
      const double saved = p->value[e];
      p->value[e] = saved + options.epsilon;
      const double up = loss_value();
      p->value[e] = saved - options.epsilon;
      const double down = loss_value();
      p->value[e] = saved;
      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double err = relative_error(p->grad[e], numeric);
      if (e == 0 || err > check.worst_error) {
        check.worst_error = err;
        check.worst_index = e;
        check.analytic = p->grad[e];
        check.numeric = numeric;
      }
    }
    report.max_error = std::max(report.max_error, check.worst_error);
    report.parameters.push_back(check);
  }
  report.passed = report.max_error < options.tolerance;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

nlohmann::json to_json(const GradcheckReport& r) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : r.parameters) {
    params.push_back({{"name", p.name},
                      {"entries", p.entries},
                      {"worst_relative_error", p.worst_error},
                      {"worst_index", p.worst_index},
                      {"analytic", p.analytic},
                      {"numeric", p.numeric}});
  }
  const auto& o = r.options;
  nlohmann::json config{{"nodes", o.nodes},         {"modes", o.modes},     {"window", o.window},
                        {"hidden", o.hidden},       {"gru_layers", o.gru_layers},
                        {"epsilon", o.epsilon},     {"tolerance", o.tolerance},
                        {"seed", o.seed}};
  if (o.corrupt_op) {
    config["corrupt_op"] = op_name(*o.corrupt_op);
    config["corrupt_factor"] = o.corrupt_factor;
  }
  return {{"config", config},
          {"max_relative_error", r.max_error},
          {"passed", r.passed},
          {"seconds", r.seconds},
          {"parameters", params}};
}

}  // namespace wsnad
