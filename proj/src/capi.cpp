#include "wsnad/wsnad.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>
#include <string>

#include "evaluator.hpp"
#include "gradcheck.hpp"
#include "ingest.hpp"

struct wsnad_flow {
  wsnad::FlowTensor flow;
};

struct wsnad_model {
  wsnad::DetectorModel model;
};

namespace {

using nlohmann::json;
using wsnad::ErrorCode;
using wsnad::fail;

thread_local std::string g_last_error;

wsnad_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return WSNAD_ERR_INVALID_ARGUMENT;
    case ErrorCode::kInput: return WSNAD_ERR_IO;
    case ErrorCode::kDimension: return WSNAD_ERR_DIMENSION;
    case ErrorCode::kContract: return WSNAD_ERR_CONTRACT;
    case ErrorCode::kDegenerateRow: return WSNAD_ERR_DEGENERATE;
    case ErrorCode::kNonFinite: return WSNAD_ERR_NON_FINITE;
    case ErrorCode::kConstantSeries: return WSNAD_ERR_CONSTANT_SERIES;
    case ErrorCode::kMissingNode: return WSNAD_ERR_MISSING_NODE;
    case ErrorCode::kCheckpoint: return WSNAD_ERR_CHECKPOINT;
    case ErrorCode::kConfig: return WSNAD_ERR_CONFIG;
  }
  return WSNAD_ERR_INTERNAL;
}

template <typename F>
wsnad_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return WSNAD_OK;
  } catch (const wsnad::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return WSNAD_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return WSNAD_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return WSNAD_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return WSNAD_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) fail(ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

json parse_options(const char* text) {
  if (!text || !*text) return json::object();
  json doc = json::parse(text);
  if (!doc.is_object()) fail(ErrorCode::kConfig, "options must be a JSON object");
  return doc;
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const std::string& s) {
  if (out) *out = copy_string(s);
}

double parse_when(const std::string& text) {
  const auto sep = text.find_first_of("T ");
  const std::string date = text.substr(0, sep);
  const std::string time = sep == std::string::npos ? "00:00:00" : text.substr(sep + 1);
  const auto t = wsnad::parse_timestamp(date, time);
  if (!t) fail(ErrorCode::kConfig, "cannot parse date-time '" + text + "'");
  return *t;
}

void check_same_nodes(const wsnad::DetectorModel& model, const wsnad::FlowTensor& flow) {
  wsnad::check_compatible(model, flow);
  if (model.node_ids != flow.node_ids) fail(ErrorCode::kDimension, "flow node ids differ from the model's");
}

wsnad::PreparedData prepared_for(const wsnad::DetectorModel& model, const wsnad::FlowTensor& flow) {
  check_same_nodes(model, flow);
  return wsnad::prepare_data(flow, model.config, &model.norm);
}

}  // namespace

extern "C" {

const char* wsnad_version(void) { return "0.1.0"; }

const char* wsnad_last_error(void) { return g_last_error.c_str(); }

const char* wsnad_status_name(wsnad_status status) {
  switch (status) {
    case WSNAD_OK: return "ok";
    case WSNAD_ERR_INVALID_ARGUMENT: return "invalid argument";
    case WSNAD_ERR_IO: return "input/output error";
    case WSNAD_ERR_DIMENSION: return "dimension mismatch";
    case WSNAD_ERR_CONTRACT: return "contract violation";
    case WSNAD_ERR_DEGENERATE: return "degenerate graph row";
    case WSNAD_ERR_NON_FINITE: return "non-finite value";
    case WSNAD_ERR_CONSTANT_SERIES: return "constant series";
    case WSNAD_ERR_MISSING_NODE: return "missing node";
    case WSNAD_ERR_CHECKPOINT: return "checkpoint error";
    case WSNAD_ERR_CONFIG: return "configuration error";
    case WSNAD_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void wsnad_string_free(char* s) { std::free(s); }

wsnad_status wsnad_flow_prepare(const char* raw_path, const char* coords_path, const char* options_json,
                                wsnad_flow** out) {
  return guarded([&] {
    require(raw_path, "raw_path");
    require(out, "out");
    *out = nullptr;
    const json opts = parse_options(options_json);
    wsnad::BuildOptions build;
    for (const auto& [key, value] : opts.items()) {
      if (key == "nodes") build.node_ids = value.get<std::vector<int>>();
      else if (key == "node_count") build.node_count = value.get<std::size_t>();
      else if (key == "modes") build.modes = value.get<std::vector<std::string>>();
      else if (key == "start") build.start = parse_when(value.get<std::string>());
      else if (key == "end") build.end = parse_when(value.get<std::string>());
      else if (key == "length") build.length = value.get<std::size_t>();
      else fail(ErrorCode::kConfig, "unknown prepare option '" + key + "'");
    }
    wsnad::ParseCounts counts;
    const auto readings = wsnad::parse_readings_file(raw_path, &counts);
    auto handle = std::make_unique<wsnad_flow>();
    handle->flow = wsnad::build_flow(readings, build);
    if (coords_path) handle->flow.coordinates = wsnad::parse_coordinates_file(coords_path);
    handle->flow.provenance["raw_file"] = std::filesystem::path(raw_path).filename().string();
    if (coords_path) handle->flow.provenance["coordinate_file"] = std::filesystem::path(coords_path).filename().string();
    handle->flow.provenance["lines"] = counts.lines;
    handle->flow.provenance["lines_parsed"] = counts.parsed;
    handle->flow.provenance["lines_skipped"] = counts.skipped;
    *out = handle.release();
  });
}

wsnad_status wsnad_flow_from_array(const double* values, size_t length, size_t nodes, size_t modes,
                                   wsnad_flow** out) {
  return guarded([&] {
    require(values, "values");
    require(out, "out");
    *out = nullptr;
    auto handle = std::make_unique<wsnad_flow>();
    handle->flow = wsnad::make_flow(nodes, modes, length, std::vector<double>(values, values + length * nodes * modes));
    handle->flow.validate();
    *out = handle.release();
  });
}

wsnad_status wsnad_flow_load(const char* path, wsnad_flow** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto handle = std::make_unique<wsnad_flow>();
    handle->flow = wsnad::load_flow(path);
    *out = handle.release();
  });
}

wsnad_status wsnad_flow_save(const wsnad_flow* flow, const char* path) {
  return guarded([&] {
    require(flow, "flow");
    require(path, "path");
    wsnad::save_flow(flow->flow, path);
  });
}

wsnad_status wsnad_flow_shape(const wsnad_flow* flow, size_t* length, size_t* nodes, size_t* modes) {
  return guarded([&] {
    require(flow, "flow");
    if (length) *length = flow->flow.length;
    if (nodes) *nodes = flow->flow.nodes;
    if (modes) *modes = flow->flow.modes;
  });
}

wsnad_status wsnad_flow_describe(const wsnad_flow* flow, char** json_out) {
  return guarded([&] {
    require(flow, "flow");
    require(json_out, "json_out");
    const wsnad::FlowTensor& f = flow->flow;
    json doc{{"length", f.length},
             {"nodes", f.nodes},
             {"modes", f.modes},
             {"node_ids", f.node_ids},
             {"mode_names", f.mode_names},
             {"epoch_start", f.epoch_start},
             {"epoch_stride", f.epoch_stride},
             {"has_coordinates", f.coordinates.has_value()},
             {"provenance", f.provenance}};
    emit(json_out, doc.dump(2));
  });
}

void wsnad_flow_free(wsnad_flow* flow) { delete flow; }

wsnad_status wsnad_config_validate(const char* config_json) {
  return guarded([&] { wsnad::config_from_json(parse_options(config_json)).validate(); });
}

wsnad_status wsnad_model_train(const wsnad_flow* flow, const char* config_json, wsnad_model** out,
                               char** history_json) {
  return guarded([&] {
    require(flow, "flow");
    require(out, "out");
    *out = nullptr;
    const wsnad::DetectorConfig config = wsnad::config_from_json(parse_options(config_json));
    config.validate();
    const wsnad::PreparedData data = wsnad::prepare_data(flow->flow, config);
    wsnad::TrainResult result =
        wsnad::train(config, data.normalized.train, data.normalized.validation, data.norm);
    json history = json::array();
    for (const auto& e : result.history) {
      history.push_back({{"epoch", e.epoch},
                         {"train_loss", e.train_loss},
                         {"train_rmse", e.train_rmse},
                         {"validation_loss", e.validation_loss ? json(*e.validation_loss) : json(nullptr)}});
    }
    auto handle = std::make_unique<wsnad_model>();
    handle->model = std::move(result.model);
    emit(history_json, json{{"config", wsnad::to_json(config)}, {"history", history}}.dump(2));
    *out = handle.release();
  });
}

wsnad_status wsnad_model_load(const char* path, wsnad_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto handle = std::make_unique<wsnad_model>();
    handle->model = wsnad::load_checkpoint(path);
    *out = handle.release();
  });
}

wsnad_status wsnad_model_save(const wsnad_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    wsnad::save_checkpoint(model->model, path);
  });
}

wsnad_status wsnad_model_describe(const wsnad_model* model, char** json_out) {
  return guarded([&] {
    require(model, "model");
    require(json_out, "json_out");
    const wsnad::DetectorModel& m = model->model;
    json params = json::array();
    for (const wsnad::Parameter* p : m.parameters()) params.push_back({{"name", p->name}, {"shape", p->value.shape()}});
    json doc{{"config", wsnad::to_json(m.config)},
             {"nodes", m.nodes},
             {"modes", m.modes},
             {"node_ids", m.node_ids},
             {"mode_names", m.mode_names},
             {"parameter_count", m.parameter_count()},
             {"parameters", params}};
    emit(json_out, doc.dump(2));
  });
}

void wsnad_model_free(wsnad_model* model) { delete model; }

wsnad_status wsnad_calibrate(const wsnad_model* model, const wsnad_flow* flow, double* threshold) {
  return guarded([&] {
    require(model, "model");
    require(flow, "flow");
    require(threshold, "threshold");
    const wsnad::PreparedData data = prepared_for(model->model, flow->flow);
    *threshold = wsnad::calibrate_threshold(model->model, data.normalized.validation);
  });
}

wsnad_status wsnad_score(const wsnad_model* model, const wsnad_flow* flow, const char* options_json,
                         char** csv_out) {
  return guarded([&] {
    require(model, "model");
    require(flow, "flow");
    require(csv_out, "csv_out");
    const wsnad::DetectorModel& m = model->model;
    const json opts = parse_options(options_json);
    for (const auto& [key, value] : opts.items()) {
      if (key != "segment" && key != "threshold" && key != "inject" && key != "header") {
        fail(ErrorCode::kConfig, "unknown score option '" + key + "'");
      }
    }
    const wsnad::PreparedData data = prepared_for(m, flow->flow);
    const std::string segment = opts.value("segment", "test");
    wsnad::FlowTensor target;
    if (segment == "train") target = data.normalized.train;
    else if (segment == "validation") target = data.normalized.validation;
    else if (segment == "test") target = data.normalized.test;
    else if (segment == "all") target = wsnad::apply_norm(flow->flow, m.norm);
    else fail(ErrorCode::kConfig, "segment must be train, validation, test or all");

    std::optional<double> threshold;
    if (opts.contains("threshold") && !opts["threshold"].is_null()) threshold = opts["threshold"].get<double>();

    json header = opts.value("header", json::object());
    header["model"] = wsnad::to_json(m.config);
    header["segment"] = segment;
    header["threshold"] = threshold ? json(*threshold) : json(nullptr);
    if (opts.contains("inject")) {
      const json& inj = opts["inject"];
      wsnad::AnomalySpec spec;
      for (const auto& [key, value] : inj.items()) {
        if (key != "type" && key != "node" && key != "mode" && key != "t" && key != "sign" && key != "p" &&
            key != "q" && key != "duration") {
          fail(ErrorCode::kConfig, "unknown inject field '" + key + "'");
        }
      }
      spec.type = wsnad::anomaly_type_from_int(inj.at("type").get<int>());
      const int node_id = inj.at("node").get<int>();
      const auto node = target.node_index(node_id);
      if (!node) fail(ErrorCode::kMissingNode, "node " + std::to_string(node_id) + " is not in the flow");
      spec.node = *node;
      const json& mode = inj.at("mode");
      if (mode.is_string()) {
        const auto j = target.mode_index(mode.get<std::string>());
        if (!j) fail(ErrorCode::kConfig, "mode '" + mode.get<std::string>() + "' is not in the flow");
        spec.mode = *j;
      } else {
        spec.mode = mode.get<std::size_t>();
      }
      spec.start = inj.at("t").get<std::size_t>();
      spec.sign = inj.value("sign", 1);
      spec.p = inj.value("p", 14.0);
      spec.q = inj.value("q", 9.0);
      spec.duration = inj.value("duration", wsnad::default_duration(spec.type));
      target = wsnad::inject_normalized(target, spec, data.ranges, m.norm);
      header["inject"] = inj;
    }
    const wsnad::ScoreSeries series = wsnad::score_curve(m, target, threshold);
    std::ostringstream csv;
    wsnad::write_score_csv(csv, series, target.node_ids, header);
    emit(csv_out, csv.str());
  });
}

wsnad_status wsnad_evaluate(const wsnad_model* model, const wsnad_flow* flow, double threshold,
                            const char* options_json, char** report_json, char** summary) {
  return guarded([&] {
    require(model, "model");
    require(flow, "flow");
    require(report_json, "report_json");
    const wsnad::ProtocolOptions options = wsnad::protocol_options_from_json(parse_options(options_json));
    const wsnad::PreparedData data = prepared_for(model->model, flow->flow);
    wsnad::TrialProtocol protocol;
    const wsnad::DetectionReport report = wsnad::evaluate(model->model, threshold, data, options, &protocol);
    json doc = wsnad::to_json(report);
    doc["config"] = {{"model", wsnad::to_json(model->model.config)},
                     {"protocol", wsnad::to_json(options)},
                     {"threshold", threshold}};
    doc["protocol"] = wsnad::to_json(protocol);
    emit(report_json, doc.dump(2));
    emit(summary, wsnad::summary_table(report));
  });
}

wsnad_status wsnad_sensitivity_sweep(const wsnad_model* model, const wsnad_flow* flow, double threshold,
                                     const char* parameter, const double* grid, size_t grid_size,
                                     const char* options_json, char** table_json) {
  return guarded([&] {
    require(model, "model");
    require(flow, "flow");
    require(parameter, "parameter");
    require(grid, "grid");
    require(table_json, "table_json");
    const std::string which = parameter;
    if (which != "p" && which != "q") fail(ErrorCode::kConfig, "sensitivity parameter must be p or q");
    const wsnad::ProtocolOptions options = wsnad::protocol_options_from_json(parse_options(options_json));
    const wsnad::PreparedData data = prepared_for(model->model, flow->flow);
    const auto type = which == "p" ? wsnad::AnomalyType::kSlowChange : wsnad::AnomalyType::kFastChange;
    const auto points = wsnad::sensitivity_sweep(model->model, threshold, data, type,
                                                 std::span<const double>(grid, grid_size), options);
    json doc{{"config",
              {{"model", wsnad::to_json(model->model.config)},
               {"protocol", wsnad::to_json(options)},
               {"threshold", threshold},
               {"parameter", which}}},
             {"rows", wsnad::to_json(points)}};
    emit(table_json, doc.dump(2));
  });
}

wsnad_status wsnad_hyper_sweep(const wsnad_flow* flow, const char* config_json, const char* parameter,
                               const double* grid, size_t grid_size, const char* options_json, char** table_json) {
  return guarded([&] {
    require(flow, "flow");
    require(parameter, "parameter");
    require(grid, "grid");
    require(table_json, "table_json");
    const wsnad::DetectorConfig config = wsnad::config_from_json(parse_options(config_json));
    const wsnad::ProtocolOptions options = wsnad::protocol_options_from_json(parse_options(options_json));
    const auto points = wsnad::hyperparameter_sweep(flow->flow, config, parameter,
                                                    std::span<const double>(grid, grid_size), options);
    json doc{{"config",
              {{"model", wsnad::to_json(config)}, {"protocol", wsnad::to_json(options)}, {"parameter", parameter}}},
             {"rows", wsnad::to_json(points)}};
    emit(table_json, doc.dump(2));
  });
}

wsnad_status wsnad_gradcheck(const char* options_json, int* passed, char** report_json) {
  return guarded([&] {
    require(passed, "passed");
    const wsnad::GradcheckOptions options = wsnad::gradcheck_options_from_json(parse_options(options_json));
    const wsnad::GradcheckReport report = wsnad::run_gradcheck(options);
    *passed = report.passed ? 1 : 0;
    emit(report_json, wsnad::to_json(report).dump(2));
  });
}

}  // extern "C"
