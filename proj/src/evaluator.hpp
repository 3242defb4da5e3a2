#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anomaly.hpp"

namespace wsnad {

enum class TrialClass { kTruePositive, kFalsePositive, kFalseNegative, kTrueNegative };
const char* to_string(TrialClass c);

struct LedgerRow {
  std::size_t trial = 0;
  std::size_t t = 0;
  std::optional<AnomalySpec> anomaly;
  TrialClass outcome = TrialClass::kTrueNegative;
  std::optional<std::size_t> first_exceedance;  // offset from t
  double peak_score = 0.0;
};

struct Metrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

/// Ratios are absent, not zero, when their denominator is zero.
Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);
std::optional<double> f1_score(std::optional<double> precision, std::optional<double> recall);

struct DetectionReport {
  std::size_t delaystep = 8;
  double threshold = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  Metrics metrics;
  std::vector<LedgerRow> ledger;
};

/// An injected trial with any score above the threshold at offsets
/// 0..delaystep is a TP, otherwise a FN; a clean trial with such an
/// exceedance is a FP, otherwise a TN.
DetectionReport score_trials(std::span<const TrialOutcome> outcomes, std::size_t delaystep, double threshold);

nlohmann::json to_json(const DetectionReport& report, bool include_ledger = true);
std::string summary_table(const DetectionReport& report);

/// Raw splits of one flow with their training-split statistics.
struct PreparedData {
  SplitFlows raw;
  SplitFlows normalized;
  NormStats norm;
  ModeRanges ranges;
};

/// Splits with the config's ratios; fits the statistics on the training split
/// unless `frozen` supplies them (as a trained model does).
PreparedData prepare_data(const FlowTensor& raw, const DetectorConfig& config, const NormStats* frozen = nullptr);

struct Experiment {
  DetectorModel model;
  std::vector<EpochStats> history;
  double threshold = 0.0;
  TrialProtocol protocol;
  std::vector<TrialOutcome> outcomes;
  DetectionReport report;
};

DetectionReport evaluate(const DetectorModel& model, double threshold, const PreparedData& data,
                         const ProtocolOptions& options, TrialProtocol* protocol_out = nullptr,
                         std::vector<TrialOutcome>* outcomes_out = nullptr);

/// Train, calibrate on the validation split, and evaluate on the test split.
Experiment run_experiment(const PreparedData& data, const DetectorConfig& config, const ProtocolOptions& options,
                          const EpochCallback& on_epoch = {});

struct SweepPoint {
  std::string parameter;
  double value = 0.0;
  double threshold = 0.0;
  DetectionReport report;
};

/// One protocol per grid value, restricted to `type` (slow- or fast-change),
/// with p or q set to the grid value.
std::vector<SweepPoint> sensitivity_sweep(const DetectorModel& model, double threshold, const PreparedData& data,
                                          AnomalyType type, std::span<const double> grid,
                                          const ProtocolOptions& base);

/// A fresh model per grid value of "window" or "hidden", same seed and protocol
/// options otherwise.
std::vector<SweepPoint> hyperparameter_sweep(const FlowTensor& raw, const DetectorConfig& base,
                                             const std::string& parameter, std::span<const double> grid,
                                             const ProtocolOptions& options, const EpochCallback& on_epoch = {});

nlohmann::json to_json(std::span<const SweepPoint> points);
std::string sweep_table(std::span<const SweepPoint> points);

}  // namespace wsnad
