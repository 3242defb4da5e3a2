#include "anomaly.hpp"

#include <algorithm>
#include <cmath>

#include "rng.hpp"

namespace wsnad {

const char* to_string(AnomalyType type) {
  switch (type) {
    case AnomalyType::kSlowChange: return "slow-change";
    case AnomalyType::kFastChange: return "fast-change";
    case AnomalyType::kSudden: return "sudden";
    case AnomalyType::kZeroTurn: return "zero-turn";
  }
  return "?";
}

AnomalyType anomaly_type_from_int(int code) {
  if (code < 1 || code > 4) fail(ErrorCode::kConfig, "anomaly type must be 1..4, got " + std::to_string(code));
  return static_cast<AnomalyType>(code);
}

std::size_t default_duration(AnomalyType type) {
  switch (type) {
    case AnomalyType::kSlowChange: return 8;
    case AnomalyType::kFastChange: return 4;
    default: return 1;
  }
}

double AnomalySpec::offset(double mode_range) const {
  switch (type) {
    case AnomalyType::kSlowChange: return sign * mode_range / p;
    case AnomalyType::kFastChange: return sign * mode_range / q;
    case AnomalyType::kSudden: return sign * mode_range;
    case AnomalyType::kZeroTurn: return 0.0;
  }
  return 0.0;
}

double AnomalySpec::apply(double raw, double mode_range) const {
  return type == AnomalyType::kZeroTurn ? 0.0 : raw + offset(mode_range);
}

void AnomalySpec::validate() const {
  if (duration < 1) fail(ErrorCode::kContract, "anomaly duration must be at least 1");
  if (sign != 1 && sign != -1) fail(ErrorCode::kContract, "anomaly sign must be +1 or -1");
  if (!(p > 0) || !(q > 0)) fail(ErrorCode::kContract, "anomaly divisors p and q must be positive");
}

ModeRanges mode_ranges(const FlowTensor& train) {
  if (train.length == 0 || train.nodes == 0) fail(ErrorCode::kContract, "mode ranges of an empty training split");
  ModeRanges r;
  r.lo.assign(train.modes, INFINITY);
  r.hi.assign(train.modes, -INFINITY);
  for (std::size_t t = 0; t < train.length; ++t) {
    for (std::size_t i = 0; i < train.nodes; ++i) {
      for (std::size_t j = 0; j < train.modes; ++j) {
        r.lo[j] = std::min(r.lo[j], train.at(t, i, j));
        r.hi[j] = std::max(r.hi[j], train.at(t, i, j));
      }
    }
  }
  return r;
}

nlohmann::json to_json(const ModeRanges& r) { return {{"min", r.lo}, {"max", r.hi}}; }

ModeRanges mode_ranges_from_json(const nlohmann::json& doc) {
  ModeRanges r{doc.at("min").get<std::vector<double>>(), doc.at("max").get<std::vector<double>>()};
  if (r.lo.size() != r.hi.size()) fail(ErrorCode::kDimension, "mode range min/max lengths differ");
  return r;
}

namespace {

void check_spec(const FlowTensor& flow, const AnomalySpec& spec, const ModeRanges& ranges) {
  spec.validate();
  if (spec.node >= flow.nodes || spec.mode >= flow.modes) {
    fail(ErrorCode::kContract, "anomaly at node index " + std::to_string(spec.node) + ", mode index " +
                                   std::to_string(spec.mode) + " outside a " + std::to_string(flow.nodes) +
                                   "x" + std::to_string(flow.modes) + " flow");
  }
  if (spec.start + spec.duration > flow.length) {
    fail(ErrorCode::kContract, "anomaly [" + std::to_string(spec.start) + ", " +
                                   std::to_string(spec.start + spec.duration - 1) + "] escapes a segment of " +
                                   std::to_string(flow.length) + " timestamps");
  }
  if (ranges.lo.size() != flow.modes || ranges.hi.size() != flow.modes) {
    fail(ErrorCode::kDimension, "mode ranges cover " + std::to_string(ranges.lo.size()) + " modes, flow has " +
                                    std::to_string(flow.modes));
  }
}

}  // namespace

FlowTensor inject(const FlowTensor& raw, const AnomalySpec& spec, const ModeRanges& ranges) {
  check_spec(raw, spec, ranges);
  FlowTensor out = raw;
  const double range = ranges.range(spec.mode);
  for (std::size_t t = spec.start; t < spec.start + spec.duration; ++t) {
    double& x = out.at(t, spec.node, spec.mode);
    x = spec.apply(x, range);
  }
  return out;
}

FlowTensor inject_normalized(const FlowTensor& normalized, const AnomalySpec& spec, const ModeRanges& ranges,
                             const NormStats& norm) {
  check_spec(normalized, spec, ranges);
  FlowTensor out = normalized;
  const double range = ranges.range(spec.mode);
  for (std::size_t t = spec.start; t < spec.start + spec.duration; ++t) {
    double& x = out.at(t, spec.node, spec.mode);
    x = norm.apply(spec.node, spec.mode, spec.apply(norm.invert(spec.node, spec.mode, x), range));
  }
  return out;
}

nlohmann::json to_json(const ProtocolOptions& o) {
  std::vector<int> types;
  for (AnomalyType t : o.types) types.push_back(static_cast<int>(t));
  return {{"seed", o.seed}, {"types", types}, {"p", o.p}, {"q", o.q}, {"delaystep", o.delaystep}};
}

ProtocolOptions protocol_options_from_json(const nlohmann::json& doc, ProtocolOptions o) {
  if (!doc.is_object()) fail(ErrorCode::kConfig, "protocol options must be a JSON object");
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "seed") o.seed = value.get<std::uint64_t>();
      else if (key == "p") o.p = value.get<double>();
      else if (key == "q") o.q = value.get<double>();
      else if (key == "delaystep") o.delaystep = value.get<std::size_t>();
      else if (key == "types") {
        o.types.clear();
        for (int code : value.get<std::vector<int>>()) o.types.push_back(anomaly_type_from_int(code));
      } else {
        fail(ErrorCode::kConfig, "unknown protocol option '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("protocol options: ") + e.what());
  }
  if (o.types.empty()) fail(ErrorCode::kConfig, "protocol needs at least one anomaly type");
  if (!(o.p > 0) || !(o.q > 0)) fail(ErrorCode::kConfig, "p and q must be positive");
  return o;
}

std::size_t TrialProtocol::injected_count() const {
  return static_cast<std::size_t>(
      std::count_if(trials.begin(), trials.end(), [](const Trial& t) { return t.anomaly.has_value(); }));
}

TrialProtocol build_protocol(std::size_t length, std::size_t nodes, std::size_t modes, std::size_t window,
                             const ProtocolOptions& options) {
  if (options.types.empty()) fail(ErrorCode::kConfig, "protocol needs at least one anomaly type");
  if (nodes == 0 || modes == 0) fail(ErrorCode::kContract, "protocol over an empty flow");
  std::size_t longest = 0;
  for (AnomalyType t : options.types) longest = std::max(longest, default_duration(t));
  if (length <= window + longest + options.delaystep) {
    fail(ErrorCode::kContract, "test segment of " + std::to_string(length) + " timestamps is too short for window " +
                                   std::to_string(window) + ", duration " + std::to_string(longest) +
                                   " and delaystep " + std::to_string(options.delaystep));
  }
  const std::size_t last = length - 1 - longest - options.delaystep;

  std::vector<std::size_t> eligible;
  for (std::size_t t = window; t <= last; ++t) eligible.push_back(t);
  Rng rng(options.seed);
  rng.shuffle(eligible);

  TrialProtocol protocol;
  protocol.options = options;
  protocol.window = window;
  protocol.segment_length = length;
  const std::size_t injected = eligible.size() / 2;
  for (std::size_t k = 0; k < eligible.size(); ++k) {
    Trial trial{eligible[k], std::nullopt};
    if (k < injected) {
      AnomalySpec spec;
      spec.type = options.types[rng.index(options.types.size())];
      spec.node = rng.index(nodes);
      spec.mode = rng.index(modes);
      spec.sign = rng.uniform() < 0.5 ? -1 : 1;
      spec.start = trial.t;
      spec.duration = default_duration(spec.type);
      spec.p = options.p;
      spec.q = options.q;
      trial.anomaly = spec;
    }
    protocol.trials.push_back(trial);
  }
  std::sort(protocol.trials.begin(), protocol.trials.end(),
            [](const Trial& a, const Trial& b) { return a.t < b.t; });
  return protocol;
}

nlohmann::json to_json(const TrialProtocol& protocol) {
  nlohmann::json trials = nlohmann::json::array();
  for (const Trial& t : protocol.trials) {
    nlohmann::json row{{"t", t.t}, {"injected", t.anomaly.has_value()}};
    if (t.anomaly) {
      const AnomalySpec& a = *t.anomaly;
      row["anomaly"] = {{"type", static_cast<int>(a.type)}, {"node", a.node},     {"mode", a.mode},
                        {"start", a.start},                  {"duration", a.duration}, {"sign", a.sign},
                        {"p", a.p},                          {"q", a.q}};
    }
    trials.push_back(row);
  }
  return {{"format", "wsnad-protocol"},
          {"version", 1},
          {"options", to_json(protocol.options)},
          {"window", protocol.window},
          {"segment_length", protocol.segment_length},
          {"trials", trials}};
}

TrialProtocol protocol_from_json(const nlohmann::json& doc) {
  TrialProtocol p;
  try {
    if (doc.value("format", "") != "wsnad-protocol") fail(ErrorCode::kInput, "not a trial protocol document");
    p.options = protocol_options_from_json(doc.at("options"));
    p.window = doc.at("window").get<std::size_t>();
    p.segment_length = doc.at("segment_length").get<std::size_t>();
    for (const auto& row : doc.at("trials")) {
      Trial t{row.at("t").get<std::size_t>(), std::nullopt};
      if (row.at("injected").get<bool>()) {
        const auto& a = row.at("anomaly");
        AnomalySpec s;
        s.type = anomaly_type_from_int(a.at("type").get<int>());
        s.node = a.at("node").get<std::size_t>();
        s.mode = a.at("mode").get<std::size_t>();
        s.start = a.at("start").get<std::size_t>();
        s.duration = a.at("duration").get<std::size_t>();
        s.sign = a.at("sign").get<int>();
        s.p = a.at("p").get<double>();
        s.q = a.at("q").get<double>();
        s.validate();
        t.anomaly = s;
      }
      p.trials.push_back(t);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInput, std::string("trial protocol: ") + e.what());
  }
  return p;
}

std::vector<TrialOutcome> run_trials(const DetectorModel& model, const FlowTensor& test, const TrialProtocol& protocol,
                                     const ModeRanges& ranges) {
  check_compatible(model, test);
  if (protocol.window != model.config.window || protocol.segment_length != test.length) {
    fail(ErrorCode::kContract, "protocol was built for window " + std::to_string(protocol.window) + " and " +
                                   std::to_string(protocol.segment_length) + " timestamps, not window " +
                                   std::to_string(model.config.window) + " and " + std::to_string(test.length));
  }
  const std::size_t span = protocol.options.delaystep + 1;
  const ScoreSeries clean = score_curve(model, test);

  std::vector<TrialOutcome> outcomes;
  outcomes.reserve(protocol.trials.size());
  for (const Trial& trial : protocol.trials) {
    if (trial.t < clean.first_index || trial.t + span > test.length) {
      fail(ErrorCode::kContract, "trial at " + std::to_string(trial.t) + " has no complete delay window");
    }
    TrialOutcome outcome{trial, {}, {}};
    if (!trial.anomaly) {
      for (std::size_t k = 0; k < span; ++k) {
        outcome.scores.push_back(clean.at_target(trial.t + k));
        outcome.argmax.push_back(clean.argmax[trial.t + k - clean.first_index]);
      }
    } else {
      const FlowTensor injected = inject_normalized(test, *trial.anomaly, ranges, model.norm);
      for (std::size_t k = 0; k < span; ++k) {
        const InferenceScore s = score_target(model, injected, trial.t + k);
        outcome.scores.push_back(s.score);
        outcome.argmax.push_back(s.node);
      }
    }
    outcomes.push_back(std::move(outcome));
  }
  return outcomes;
}

}  // namespace wsnad
