#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "detector.hpp"

namespace wsnad {

/// Per-node sum of squared per-mode deviations between observed and
/// predicted M x N matrices.
std::vector<double> node_scores(const Tensor& observed, const Tensor& predicted);

struct InferenceScore {
  double score = 0.0;
  std::size_t node = 0;  // index into the flow's node order
};

/// Largest node score; ties go to the lowest index.
InferenceScore inference_score(std::span<const double> node_scores);

struct ScoreSeries {
  std::size_t first_index = 0;  // target index of scores[0], equal to the window length
  std::vector<double> scores;
  std::vector<std::size_t> argmax;
  std::optional<double> threshold;

  std::size_t size() const { return scores.size(); }
  double at_target(std::size_t t) const;
  /// Strict exceedance; false when no threshold is set.
  bool exceeds(std::size_t k) const { return threshold && scores[k] > *threshold; }
};

InferenceScore score_target(const DetectorModel& model, const FlowTensor& normalized, std::size_t target);

/// Inference score at every target index of a normalised segment.
ScoreSeries score_curve(const DetectorModel& model, const FlowTensor& normalized,
                        std::optional<double> threshold = std::nullopt);

/// Maximum inference score over the validation segment.
double calibrate_threshold(const DetectorModel& model, const FlowTensor& validation_normalized);

/// `#`-prefixed lines carrying `header` (pretty JSON), then
/// `t,score,argmax_node,exceeds` rows; the exceeds column is only present with
/// a threshold. argmax_node is written as the node id.
void write_score_csv(std::ostream& out, const ScoreSeries& series, std::span<const int> node_ids,
                     const nlohmann::json& header);

}  // namespace wsnad
