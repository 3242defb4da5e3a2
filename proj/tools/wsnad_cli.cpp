// wsnad: command-line driver over the C interface.
//
// Exit status: 0 success, 1 failure (including a failed gradient check),
// 2 unreadable or missing input, 3 invalid configuration or flags.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "wsnad/wsnad.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitInput = 2;
constexpr int kExitConfig = 3;

struct CommandError {
  int exit_code;
  std::string message;
};

int exit_code_for(wsnad_status status) {
  switch (status) {
    case WSNAD_OK: return 0;
    case WSNAD_ERR_IO: return kExitInput;
    case WSNAD_ERR_CONFIG:
    case WSNAD_ERR_INVALID_ARGUMENT: return kExitConfig;
    default: return kExitFailure;
  }
}

void check(wsnad_status status, const std::string& what) {
  if (status != WSNAD_OK) {
    throw CommandError{exit_code_for(status),
                       what + ": " + wsnad_status_name(status) + ": " + wsnad_last_error()};
  }
}

// Owns a string allocated by the library.
struct LibString {
  char* p = nullptr;
  ~LibString() { wsnad_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

struct FlowDeleter {
  void operator()(wsnad_flow* f) const { wsnad_flow_free(f); }
};
struct ModelDeleter {
  void operator()(wsnad_model* m) const { wsnad_model_free(m); }
};
using FlowPtr = std::unique_ptr<wsnad_flow, FlowDeleter>;
using ModelPtr = std::unique_ptr<wsnad_model, ModelDeleter>;

fs::path output_dir() {
  const char* env = std::getenv("WSNAD_OUTPUT_DIR");
  return env && *env ? fs::path(env) : fs::path(".");
}

fs::path resolve_out(const std::string& given, const std::string& fallback) {
  return given.empty() ? output_dir() / fallback : fs::path(given);
}

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw CommandError{kExitInput, std::string(what) + " not found: " + path};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw CommandError{kExitInput, "cannot write " + path.string()};
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

json read_json_file(const std::string& path) {
  require_file(path, "config file");
  std::ifstream in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw CommandError{kExitConfig, path + ": " + e.what()};
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw CommandError{kExitConfig, what + ": '" + s + "' is not a number"};
  }
}

std::vector<double> number_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(to_number(item, what));
  if (out.empty()) throw CommandError{kExitConfig, what + " needs at least one value"};
  return out;
}

// Configuration file sections overridden by flags.
struct Settings {
  json prepare = json::object();
  json detector = json::object();
  json protocol = json::object();
  json gradcheck = json::object();
};

Settings load_settings(const std::string& path) {
  Settings s;
  if (path.empty()) return s;
  const json doc = read_json_file(path);
  if (!doc.is_object()) throw CommandError{kExitConfig, path + ": expected a JSON object"};
  for (const auto& [key, value] : doc.items()) {
    if (key == "prepare") s.prepare = value;
    else if (key == "detector") s.detector = value;
    else if (key == "protocol") s.protocol = value;
    else if (key == "gradcheck") s.gradcheck = value;
    else throw CommandError{kExitConfig, path + ": unknown section '" + key + "'"};
  }
  return s;
}

// Flags shared by commands that train.
struct DetectorFlags {
  std::optional<std::size_t> window, hidden, gru_layers, epochs, topk;
  std::optional<double> learning_rate;
  std::optional<std::uint64_t> seed;
  std::string node_graph, norm, disable, split;

  void attach(CLI::App* cmd) {
    cmd->add_option("--window,-W", window, "sliding window length");
    cmd->add_option("--hidden,-D", hidden, "GRU hidden size");
    cmd->add_option("--gru-layers", gru_layers, "stacked GRU layers");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--lr", learning_rate, "Adam learning rate");
    cmd->add_option("--seed", seed, "initialisation seed");
    cmd->add_option("--node-graph", node_graph, "full | topk");
    cmd->add_option("--topk", topk, "neighbours per node for the topk graph");
    cmd->add_option("--norm", norm, "zscore | maxmin");
    cmd->add_option("--disable", disable, "comma list of blocks to ablate: mode,time,node");
    cmd->add_option("--split", split, "train,validation,test ratios");
  }

  json merge(json base) const {
    if (window) base["window"] = *window;
    if (hidden) base["hidden"] = *hidden;
    if (gru_layers) base["gru_layers"] = *gru_layers;
    if (epochs) base["epochs"] = *epochs;
    if (learning_rate) base["learning_rate"] = *learning_rate;
    if (seed) base["seed"] = *seed;
    if (topk) base["topk"] = *topk;
    if (!node_graph.empty()) base["node_graph"] = node_graph;
    if (!norm.empty()) base["norm"] = norm;
    if (!split.empty()) base["split"] = number_list(split, "--split");
    if (!disable.empty()) {
      json ablation = base.value("ablation", json::object());
      for (const auto& block : split_list(disable)) {
        if (block != "mode" && block != "time" && block != "node") {
          throw CommandError{kExitConfig, "--disable accepts mode, time, node; got '" + block + "'"};
        }
        ablation[block] = true;
      }
      base["ablation"] = ablation;
    }
    return base;
  }
};

struct ProtocolFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> delaystep;
  std::optional<double> p, q;
  std::string types;

  void attach(CLI::App* cmd) {
    cmd->add_option("--protocol-seed", seed, "trial protocol seed");
    cmd->add_option("--delaystep", delaystep, "allowed detection delay (default 8)");
    cmd->add_option("--p", p, "slow-change divisor (default 14)");
    cmd->add_option("--q", q, "fast-change divisor (default 9)");
    cmd->add_option("--types", types, "comma list of anomaly types 1-4");
  }

  json merge(json base) const {
    if (seed) base["seed"] = *seed;
    if (delaystep) base["delaystep"] = *delaystep;
    if (p) base["p"] = *p;
    if (q) base["q"] = *q;
    if (!types.empty()) {
      json list = json::array();
      for (double t : number_list(types, "--types")) list.push_back(static_cast<int>(t));
      base["types"] = list;
    }
    return base;
  }
};

FlowPtr load_flow(const std::string& path) {
  require_file(path, "flow file");
  wsnad_flow* f = nullptr;
  check(wsnad_flow_load(path.c_str(), &f), "loading " + path);
  return FlowPtr(f);
}

ModelPtr load_model(const std::string& path) {
  require_file(path, "checkpoint");
  wsnad_model* m = nullptr;
  check(wsnad_model_load(path.c_str(), &m), "loading " + path);
  return ModelPtr(m);
}

// A number, or a threshold file written by `calibrate`.
double read_threshold(const std::string& arg) {
  if (fs::is_regular_file(arg)) {
    const json doc = read_json_file(arg);
    if (!doc.contains("threshold") || !doc["threshold"].is_number()) {
      throw CommandError{kExitConfig, arg + ": no numeric 'threshold' field"};
    }
    return doc["threshold"].get<double>();
  }
  return to_number(arg, "--threshold");
}

json parse_inject(const std::string& text) {
  json inj = json::object();
  for (const auto& field : split_list(text)) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw CommandError{kExitConfig, "--inject fields look like key=value"};
    const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "mode") {
      const bool numeric = !value.empty() && value.find_first_not_of("0123456789") == std::string::npos;
      inj[key] = numeric ? json(std::stoul(value)) : json(value);
    } else if (key == "p" || key == "q") {
      inj[key] = to_number(value, "--inject " + key);
    } else if (key == "type" || key == "node" || key == "t" || key == "sign" || key == "duration") {
      inj[key] = static_cast<long long>(to_number(value, "--inject " + key));
    } else {
      throw CommandError{kExitConfig, "unknown --inject field '" + key + "'"};
    }
  }
  return inj;
}

// --- commands --------------------------------------------------------------

struct PrepareArgs {
  std::string raw, coords, out, nodes, modes, start, end;
  std::optional<std::size_t> node_count, length;
};

json prepare_options(const PrepareArgs& a, json base) {
  if (!a.nodes.empty()) {
    json ids = json::array();
    for (double v : number_list(a.nodes, "--nodes")) ids.push_back(static_cast<int>(v));
    base["nodes"] = ids;
  }
  if (!a.modes.empty()) base["modes"] = split_list(a.modes);
  if (!a.start.empty()) base["start"] = a.start;
  if (!a.end.empty()) base["end"] = a.end;
  if (a.node_count) base["node_count"] = *a.node_count;
  if (a.length) base["length"] = *a.length;
  return base;
}

fs::path run_prepare(const PrepareArgs& a, const Settings& s) {
  require_file(a.raw, "raw data file");
  if (!a.coords.empty()) require_file(a.coords, "coordinate file");
  const std::string options = prepare_options(a, s.prepare).dump();
  wsnad_flow* raw = nullptr;
  check(wsnad_flow_prepare(a.raw.c_str(), a.coords.empty() ? nullptr : a.coords.c_str(), options.c_str(), &raw),
        "prepare");
  FlowPtr flow(raw);
  const fs::path out = resolve_out(a.out, "flow.json");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  check(wsnad_flow_save(flow.get(), out.string().c_str()), "writing " + out.string());

  LibString desc;
  check(wsnad_flow_describe(flow.get(), &desc.p), "describe");
  const json d = json::parse(desc.str());
  std::cout << "flow " << d["nodes"] << " nodes x " << d["modes"] << " modes x " << d["length"]
            << " timestamps -> " << out.string() << '\n'
            << "nodes " << d["node_ids"].dump() << '\n'
            << "stride " << d["epoch_stride"] << " s, skipped lines " << d["provenance"].value("lines_skipped", 0)
            << '\n';
  return out;
}

struct TrainArgs {
  std::string flow, out, history;
  DetectorFlags detector;
};

fs::path run_train(const TrainArgs& a, const Settings& s) {
  const std::string config = a.detector.merge(s.detector).dump();
  check(wsnad_config_validate(config.c_str()), "config");
  FlowPtr flow = load_flow(a.flow);
  wsnad_model* raw = nullptr;
  LibString history;
  check(wsnad_model_train(flow.get(), config.c_str(), &raw, &history.p), "train");
  ModelPtr model(raw);
  const fs::path out = resolve_out(a.out, "model.json");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  check(wsnad_model_save(model.get(), out.string().c_str()), "writing " + out.string());
  fs::path hist = a.history.empty() ? fs::path(out).replace_extension(".history.json") : fs::path(a.history);
  write_text(hist, history.str());
  const json h = json::parse(history.str());
  if (!h["history"].empty()) {
    const json& last = h["history"].back();
    std::cout << "epoch " << last["epoch"] << " train loss " << last["train_loss"] << " validation loss "
              << last["validation_loss"] << '\n';
  }
  std::cout << "checkpoint -> " << out.string() << "\nhistory -> " << hist.string() << '\n';
  return out;
}

struct CalibrateArgs {
  std::string checkpoint, flow, out;
};

fs::path run_calibrate(const CalibrateArgs& a) {
  ModelPtr model = load_model(a.checkpoint);
  FlowPtr flow = load_flow(a.flow);
  double threshold = 0.0;
  check(wsnad_calibrate(model.get(), flow.get(), &threshold), "calibrate");
  LibString desc;
  check(wsnad_model_describe(model.get(), &desc.p), "describe");
  const json doc{{"threshold", threshold},
                 {"source", "validation maximum"},
                 {"checkpoint", a.checkpoint},
                 {"flow", a.flow},
                 {"config", json::parse(desc.str())["config"]}};
  const fs::path out = resolve_out(a.out, "threshold.json");
  write_text(out, doc.dump(2));
  std::cout.precision(17);
  std::cout << "threshold " << threshold << " -> " << out.string() << '\n';
  return out;
}

struct ScoreArgs {
  std::string checkpoint, flow, out, threshold, inject, segment = "test";
};

void run_score(const ScoreArgs& a) {
  ModelPtr model = load_model(a.checkpoint);
  FlowPtr flow = load_flow(a.flow);
  json opts{{"segment", a.segment}, {"header", {{"checkpoint", a.checkpoint}, {"flow", a.flow}}}};
  if (!a.threshold.empty()) opts["threshold"] = read_threshold(a.threshold);
  if (!a.inject.empty()) opts["inject"] = parse_inject(a.inject);
  LibString csv;
  check(wsnad_score(model.get(), flow.get(), opts.dump().c_str(), &csv.p), "score");
  const fs::path out = resolve_out(a.out, "scores.csv");
  write_text(out, csv.str());
  std::cout << "score curve -> " << out.string() << '\n';
}

struct EvaluateArgs {
  std::string checkpoint, flow, out, threshold, sweep;
  ProtocolFlags protocol;
};

void run_evaluate(const EvaluateArgs& a, const Settings& s) {
  ModelPtr model = load_model(a.checkpoint);
  FlowPtr flow = load_flow(a.flow);
  const double threshold = read_threshold(a.threshold);
  const std::string options = a.protocol.merge(s.protocol).dump();
  const fs::path out = resolve_out(a.out, a.sweep.empty() ? "report.json" : "sweep.json");
  if (!a.sweep.empty()) {
    const auto eq = a.sweep.find('=');
    if (eq == std::string::npos) throw CommandError{kExitConfig, "--sweep looks like p=10,14,18,22"};
    const std::string param = a.sweep.substr(0, eq);
    const std::vector<double> grid = number_list(a.sweep.substr(eq + 1), "--sweep");
    LibString table;
    check(wsnad_sensitivity_sweep(model.get(), flow.get(), threshold, param.c_str(), grid.data(), grid.size(),
                                  options.c_str(), &table.p),
          "sweep");
    write_text(out, table.str());
    const json t = json::parse(table.str());
    std::cout << param << ",precision\n";
    for (const auto& row : t["rows"]) std::cout << row["value"] << ',' << row["precision"] << '\n';
  } else {
    LibString report, summary;
    check(wsnad_evaluate(model.get(), flow.get(), threshold, options.c_str(), &report.p, &summary.p), "evaluate");
    write_text(out, report.str());
    std::cout << summary.str();
  }
  std::cout << "report -> " << out.string() << '\n';
}

struct GradcheckArgs {
  std::string out, corrupt;
  double corrupt_factor = 1.5;
};

int run_gradcheck(const GradcheckArgs& a, const Settings& s) {
  json options = s.gradcheck;
  if (!a.corrupt.empty()) {
    options["corrupt_op"] = a.corrupt;
    options["corrupt_factor"] = a.corrupt_factor;
  }
  int passed = 0;
  LibString report;
  check(wsnad_gradcheck(options.dump().c_str(), &passed, &report.p), "gradcheck");
  const json r = json::parse(report.str());
  for (const auto& p : r["parameters"]) {
    std::printf("  %-22s %4d entries  worst rel. error %.3e\n", p["name"].get<std::string>().c_str(),
                p["entries"].get<int>(), p["worst_relative_error"].get<double>());
  }
  std::printf("max relative error %.3e (tolerance %.1e): %s\n", r["max_relative_error"].get<double>(),
              r["config"]["tolerance"].get<double>(), passed ? "PASS" : "FAIL");
  if (!a.out.empty()) write_text(a.out, report.str());
  return passed ? 0 : kExitFailure;
}

struct SweepArgs {
  std::string flow, out, param, values;
  DetectorFlags detector;
  ProtocolFlags protocol;
};

void run_sweep(const SweepArgs& a, const Settings& s) {
  FlowPtr flow = load_flow(a.flow);
  const std::vector<double> grid = number_list(a.values, "--values");
  const std::string config = a.detector.merge(s.detector).dump();
  const std::string options = a.protocol.merge(s.protocol).dump();
  LibString table;
  check(wsnad_hyper_sweep(flow.get(), config.c_str(), a.param.c_str(), grid.data(), grid.size(), options.c_str(),
                          &table.p),
        "sweep");
  const fs::path out = resolve_out(a.out, "hyper_sweep.json");
  write_text(out, table.str());
  const json t = json::parse(table.str());
  std::cout << a.param << ",precision,recall,f1\n";
  for (const auto& row : t["rows"]) {
    std::cout << row["value"] << ',' << row["precision"] << ',' << row["recall"] << ',' << row["f1"] << '\n';
  }
  std::cout << "table -> " << out.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal sensor-network anomaly detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(wsnad_version()));
  std::string config_path;
  app.add_option("--config", config_path, "JSON file with prepare/detector/protocol/gradcheck sections");

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "Parse the lab dump into a prepared flow");
  prepare->add_option("--raw", prep.raw, "lab dump (plain or gzip)")->required();
  prepare->add_option("--coords", prep.coords, "mote coordinate table");
  prepare->add_option("--out,-o", prep.out, "flow metadata path (default $WSNAD_OUTPUT_DIR/flow.json)");
  prepare->add_option("--nodes", prep.nodes, "comma list of mote ids");
  prepare->add_option("--node-count", prep.node_count, "motes to select when --nodes is absent");
  prepare->add_option("--modes", prep.modes, "comma list of modes");
  prepare->add_option("--start", prep.start, "range start, YYYY-MM-DD[THH:MM:SS]");
  prepare->add_option("--end", prep.end, "range end (exclusive)");
  prepare->add_option("--length", prep.length, "timestamps in the flow");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a detector on a prepared flow");
  train->add_option("--flow", tr.flow, "prepared flow")->required();
  train->add_option("--out,-o", tr.out, "checkpoint path (default $WSNAD_OUTPUT_DIR/model.json)");
  train->add_option("--history", tr.history, "loss history path");
  tr.detector.attach(train);

  CalibrateArgs cal;
  auto* calibrate = app.add_subcommand("calibrate", "Threshold from the validation split");
  calibrate->add_option("--checkpoint,-m", cal.checkpoint)->required();
  calibrate->add_option("--flow", cal.flow)->required();
  calibrate->add_option("--out,-o", cal.out, "threshold file (default $WSNAD_OUTPUT_DIR/threshold.json)");

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "Write an inference-score curve");
  score->add_option("--checkpoint,-m", sc.checkpoint)->required();
  score->add_option("--flow", sc.flow)->required();
  score->add_option("--threshold", sc.threshold, "number or threshold file");
  score->add_option("--segment", sc.segment, "train | validation | test | all");
  score->add_option("--inject", sc.inject, "type=4,node=29,mode=voltage,t=70");
  score->add_option("--out,-o", sc.out, "CSV path (default $WSNAD_OUTPUT_DIR/scores.csv)");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Run the injection protocol and report Prec/Rec/F1");
  evaluate->add_option("--checkpoint,-m", ev.checkpoint)->required();
  evaluate->add_option("--flow", ev.flow)->required();
  evaluate->add_option("--threshold", ev.threshold, "number or threshold file")->required();
  evaluate->add_option("--sweep", ev.sweep, "p=10,14,18,22 or q=6,9,12,15");
  evaluate->add_option("--out,-o", ev.out, "report path");
  ev.protocol.attach(evaluate);

  GradcheckArgs gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the detector gradient");
  gradcheck->add_option("--out,-o", gc.out, "JSON report path");
  gradcheck->add_option("--corrupt-backward", gc.corrupt)->group("");
  gradcheck->add_option("--corrupt-factor", gc.corrupt_factor)->group("");

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate one model per window or hidden size");
  sweep->add_option("--flow", sw.flow)->required();
  sweep->add_option("--param", sw.param, "window | hidden")->required();
  sweep->add_option("--values", sw.values, "comma list, e.g. 30,40,50,60,70")->required();
  sweep->add_option("--out,-o", sw.out, "table path");
  sw.detector.attach(sweep);
  sw.protocol.attach(sweep);

  PrepareArgs all_prep;
  TrainArgs all_train;
  ProtocolFlags all_protocol;
  std::string all_dir;
  auto* run_all = app.add_subcommand("run-all", "prepare, train, calibrate and evaluate with the defaults");
  run_all->add_option("--raw", all_prep.raw)->required();
  run_all->add_option("--coords", all_prep.coords);
  run_all->add_option("--nodes", all_prep.nodes);
  run_all->add_option("--modes", all_prep.modes);
  run_all->add_option("--out-dir", all_dir, "directory for every artefact (default $WSNAD_OUTPUT_DIR)");
  all_train.detector.attach(run_all);
  all_protocol.attach(run_all);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    const Settings settings = load_settings(config_path);
    if (*prepare) run_prepare(prep, settings);
    else if (*train) run_train(tr, settings);
    else if (*calibrate) run_calibrate(cal);
    else if (*score) run_score(sc);
    else if (*evaluate) run_evaluate(ev, settings);
    else if (*gradcheck) return run_gradcheck(gc, settings);
    else if (*sweep) run_sweep(sw, settings);
    else if (*run_all) {
      const fs::path dir = all_dir.empty() ? output_dir() : fs::path(all_dir);
      all_prep.out = (dir / "flow.json").string();
      const fs::path flow = run_prepare(all_prep, settings);
      all_train.flow = flow.string();
      all_train.out = (dir / "model.json").string();
      const fs::path model = run_train(all_train, settings);
      const fs::path threshold = run_calibrate({model.string(), flow.string(), (dir / "threshold.json").string()});
      EvaluateArgs e{model.string(), flow.string(), (dir / "report.json").string(), threshold.string(), "",
                     all_protocol};
      run_evaluate(e, settings);
    }
  } catch (const CommandError& e) {
    std::cerr << "wsnad: " << e.message << '\n';
    return e.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "wsnad: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
