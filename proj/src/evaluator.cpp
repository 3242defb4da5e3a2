#include "evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace wsnad {

const char* to_string(TrialClass c) {
  switch (c) {
    case TrialClass::kTruePositive: return "TP";
    case TrialClass::kFalsePositive: return "FP";
    case TrialClass::kFalseNegative: return "FN";
    case TrialClass::kTrueNegative: return "TN";
  }
  return "?";
}

std::optional<double> f1_score(std::optional<double> precision, std::optional<double> recall) {
  if (!precision || !recall || *precision + *recall <= 0.0) return std::nullopt;
  return 2.0 * *precision * *recall / (*precision + *recall);
}

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  Metrics m;
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.f1 = f1_score(m.precision, m.recall);
  return m;
}

DetectionReport score_trials(std::span<const TrialOutcome> outcomes, std::size_t delaystep, double threshold) {
  DetectionReport report;
  report.delaystep = delaystep;
  report.threshold = threshold;
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    const TrialOutcome& o = outcomes[k];
    if (o.scores.size() < delaystep + 1) {
      fail(ErrorCode::kContract, "trial at " + std::to_string(o.trial.t) + " recorded " +
                                     std::to_string(o.scores.size()) + " scores, delaystep " +
                                     std::to_string(delaystep) + " needs " + std::to_string(delaystep + 1));
    }
    LedgerRow row;
    row.trial = k;
    row.t = o.trial.t;
    row.anomaly = o.trial.anomaly;
    for (std::size_t d = 0; d <= delaystep; ++d) {
      row.peak_score = std::max(row.peak_score, o.scores[d]);
      if (!row.first_exceedance && o.scores[d] > threshold) row.first_exceedance = d;
    }
    const bool alarm = row.first_exceedance.has_value();
    if (o.trial.anomaly) {
      row.outcome = alarm ? TrialClass::kTruePositive : TrialClass::kFalseNegative;
      ++(alarm ? report.tp : report.fn);
    } else {
      row.outcome = alarm ? TrialClass::kFalsePositive : TrialClass::kTrueNegative;
      ++(alarm ? report.fp : report.tn);
    }
    report.ledger.push_back(std::move(row));
  }
  report.metrics = metrics_from_counts(report.tp, report.fp, report.fn);
  return report;
}

namespace {

nlohmann::json optional_json(std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string percent(std::optional<double> v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * *v);
  return buf;
}

}  // namespace

nlohmann::json to_json(const DetectionReport& r, bool include_ledger) {
  nlohmann::json doc{{"delaystep", r.delaystep},
                     {"threshold", r.threshold},
                     {"counts", {{"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn}, {"tn", r.tn}}},
                     {"precision", optional_json(r.metrics.precision)},
                     {"recall", optional_json(r.metrics.recall)},
                     {"f1", optional_json(r.metrics.f1)}};
  if (include_ledger) {
    nlohmann::json ledger = nlohmann::json::array();
    for (const LedgerRow& row : r.ledger) {
      nlohmann::json e{{"trial", row.trial},
                       {"t", row.t},
                       {"injected", row.anomaly.has_value()},
                       {"outcome", to_string(row.outcome)},
                       {"peak_score", row.peak_score}};
      e["first_exceedance"] = row.first_exceedance ? nlohmann::json(*row.first_exceedance) : nlohmann::json(nullptr);
      if (row.anomaly) {
        e["type"] = static_cast<int>(row.anomaly->type);
        e["node"] = row.anomaly->node;
        e["mode"] = row.anomaly->mode;
        e["sign"] = row.anomaly->sign;
      }
      ledger.push_back(std::move(e));
    }
    doc["ledger"] = std::move(ledger);
  }
  return doc;
}

std::string summary_table(const DetectionReport& r) {
  std::ostringstream out;
  out << "threshold  " << r.threshold << "  (delaystep " << r.delaystep << ")\n"
      << "TP " << r.tp << "  FP " << r.fp << "  FN " << r.fn << "  TN " << r.tn << '\n'
      << "Prec " << percent(r.metrics.precision) << "  Rec " << percent(r.metrics.recall) << "  F1 "
      << percent(r.metrics.f1) << '\n';
  return out.str();
}

PreparedData prepare_data(const FlowTensor& raw, const DetectorConfig& config, const NormStats* frozen) {
  config.validate();
  raw.validate();
  PreparedData d;
  d.raw = split(raw, config.split, config.window + 1);
  if (frozen && (frozen->nodes != raw.nodes || frozen->modes != raw.modes)) {
    fail(ErrorCode::kDimension, "normalisation statistics cover " + std::to_string(frozen->nodes) + " x " +
                                    std::to_string(frozen->modes) + ", flow is " + std::to_string(raw.nodes) +
                                    " x " + std::to_string(raw.modes));
  }
  d.norm = frozen ? *frozen : fit_norm(d.raw.train, config.norm);
  d.normalized = {apply_norm(d.raw.train, d.norm), apply_norm(d.raw.validation, d.norm),
                  apply_norm(d.raw.test, d.norm)};
  d.ranges = mode_ranges(d.raw.train);
  return d;
}

DetectionReport evaluate(const DetectorModel& model, double threshold, const PreparedData& data,
                         const ProtocolOptions& options, TrialProtocol* protocol_out,
                         std::vector<TrialOutcome>* outcomes_out) {
  const FlowTensor& test = data.normalized.test;
  TrialProtocol protocol = build_protocol(test.length, test.nodes, test.modes, model.config.window, options);
  std::vector<TrialOutcome> outcomes = run_trials(model, test, protocol, data.ranges);
  DetectionReport report = score_trials(outcomes, options.delaystep, threshold);
  if (protocol_out) *protocol_out = std::move(protocol);
  if (outcomes_out) *outcomes_out = std::move(outcomes);
  return report;
}

Experiment run_experiment(const PreparedData& data, const DetectorConfig& config, const ProtocolOptions& options,
                          const EpochCallback& on_epoch) {
  TrainResult trained = train(config, data.normalized.train, data.normalized.validation, data.norm, on_epoch);
  Experiment e;
  e.model = std::move(trained.model);
  e.history = std::move(trained.history);
  e.threshold = calibrate_threshold(e.model, data.normalized.validation);
  e.report = evaluate(e.model, e.threshold, data, options, &e.protocol, &e.outcomes);
  return e;
}

std::vector<SweepPoint> sensitivity_sweep(const DetectorModel& model, double threshold, const PreparedData& data,
                                          AnomalyType type, std::span<const double> grid,
                                          const ProtocolOptions& base) {
  if (type != AnomalyType::kSlowChange && type != AnomalyType::kFastChange) {
    fail(ErrorCode::kConfig, "sensitivity sweeps vary p (type 1) or q (type 2)");
  }
  std::vector<SweepPoint> points;
  for (double value : grid) {
    if (!(value > 0)) fail(ErrorCode::kConfig, "sweep values must be positive");
    ProtocolOptions options = base;
    options.types = {type};
    (type == AnomalyType::kSlowChange ? options.p : options.q) = value;
    points.push_back({type == AnomalyType::kSlowChange ? "p" : "q", value, threshold,
                      evaluate(model, threshold, data, options)});
  }
  return points;
}

std::vector<SweepPoint> hyperparameter_sweep(const FlowTensor& raw, const DetectorConfig& base,
                                             const std::string& parameter, std::span<const double> grid,
                                             const ProtocolOptions& options, const EpochCallback& on_epoch) {
  if (parameter != "window" && parameter != "hidden") {
    fail(ErrorCode::kConfig, "hyperparameter sweep supports window or hidden, got '" + parameter + "'");
  }
  std::vector<SweepPoint> points;
  for (double value : grid) {
    if (!(value >= 1) || value != std::floor(value)) {
      fail(ErrorCode::kConfig, parameter + " grid values must be positive integers");
    }
    DetectorConfig config = base;
    (parameter == "window" ? config.window : config.hidden) = static_cast<std::size_t>(value);
    const PreparedData data = prepare_data(raw, config);
    Experiment e = run_experiment(data, config, options, on_epoch);
    points.push_back({parameter, value, e.threshold, std::move(e.report)});
  }
  return points;
}

nlohmann::json to_json(std::span<const SweepPoint> points) {
  nlohmann::json rows = nlohmann::json::array();
  for (const SweepPoint& p : points) {
    nlohmann::json row = to_json(p.report, false);
    row["parameter"] = p.parameter;
    row["value"] = p.value;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_table(std::span<const SweepPoint> points) {
  std::ostringstream out;
  out << "parameter,value,precision,recall,f1\n";
  for (const SweepPoint& p : points) {
    auto cell = [](std::optional<double> v) { return v ? std::to_string(*v) : std::string{}; };
    out << p.parameter << ',' << p.value << ',' << cell(p.report.metrics.precision) << ','
        << cell(p.report.metrics.recall) << ',' << cell(p.report.metrics.f1) << '\n';
  }
  return out.str();
}

}  // namespace wsnad
