#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scoring.hpp"

namespace wsnad {

enum class AnomalyType { kSlowChange = 1, kFastChange = 2, kSudden = 3, kZeroTurn = 4 };

const char* to_string(AnomalyType type);
AnomalyType anomaly_type_from_int(int code);
std::size_t default_duration(AnomalyType type);

/// One injected fault on a single (node, mode) series.
struct AnomalySpec {
  AnomalyType type = AnomalyType::kSudden;
  std::size_t node = 0;  // index into the flow's node order
  std::size_t mode = 0;
  std::size_t start = 0;
  std::size_t duration = 1;
  int sign = 1;
  double p = 14.0;  // slow-change divisor
  double q = 9.0;   // fast-change divisor

  /// Raw-space offset added per timestamp; zero for the zero-turn type.
  double offset(double mode_range) const;
  double apply(double raw, double mode_range) const;
  void validate() const;
};

/// Per-mode extremes of the raw training split, pooled over all nodes.
struct ModeRanges {
  std::vector<double> lo;
  std::vector<double> hi;

  double range(std::size_t mode) const { return hi.at(mode) - lo.at(mode); }
};

ModeRanges mode_ranges(const FlowTensor& train_raw);
nlohmann::json to_json(const ModeRanges& ranges);
ModeRanges mode_ranges_from_json(const nlohmann::json& doc);

/// Copy of a raw flow with the anomaly applied.
FlowTensor inject(const FlowTensor& raw, const AnomalySpec& spec, const ModeRanges& ranges);
/// Same injection on a normalised flow: each touched entry is mapped back to
/// raw units, modified, and renormalised with `norm`. Untouched entries are
/// copied bit for bit.
FlowTensor inject_normalized(const FlowTensor& normalized, const AnomalySpec& spec, const ModeRanges& ranges,
                             const NormStats& norm);

struct Trial {
  std::size_t t = 0;
  std::optional<AnomalySpec> anomaly;  // empty for a clean trial
};

struct ProtocolOptions {
  std::uint64_t seed = 1;
  std::vector<AnomalyType> types{AnomalyType::kSlowChange, AnomalyType::kFastChange, AnomalyType::kSudden,
                                 AnomalyType::kZeroTurn};
  double p = 14.0;
  double q = 9.0;
  std::size_t delaystep = 8;
};

nlohmann::json to_json(const ProtocolOptions& options);
ProtocolOptions protocol_options_from_json(const nlohmann::json& doc, ProtocolOptions base = {});

struct TrialProtocol {
  ProtocolOptions options;
  std::size_t window = 0;
  std::size_t segment_length = 0;
  std::vector<Trial> trials;  // ascending timestamp

  std::size_t injected_count() const;
};

/// Eligible targets are [W, length - 1 - max duration - delaystep]; a seeded
/// shuffle sends floor(n/2) of them to the injected set.
TrialProtocol build_protocol(std::size_t segment_length, std::size_t nodes, std::size_t modes, std::size_t window,
                             const ProtocolOptions& options);

nlohmann::json to_json(const TrialProtocol& protocol);
TrialProtocol protocol_from_json(const nlohmann::json& doc);

/// Scores at targets t .. t + delaystep for one trial.
struct TrialOutcome {
  Trial trial;
  std::vector<double> scores;
  std::vector<std::size_t> argmax;
};

/// Each trial runs on its own copy of the test flow. Clean trials read from a
/// single clean score curve; injected trials rescore only the affected targets.
std::vector<TrialOutcome> run_trials(const DetectorModel& model, const FlowTensor& test_normalized,
                                     const TrialProtocol& protocol, const ModeRanges& ranges);

}  // namespace wsnad
