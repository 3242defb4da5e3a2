#include "scoring.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace wsnad {

std::vector<double> node_scores(const Tensor& observed, const Tensor& predicted) {
  if (observed.rank() != 2 || !observed.same_shape(predicted)) {
    fail(ErrorCode::kDimension, "node_scores: observed " + to_string(observed.shape()) + " vs predicted " +
                                    to_string(predicted.shape()));
  }
  std::vector<double> out(observed.rows(), 0.0);
  for (std::size_t i = 0; i < observed.rows(); ++i) {
    for (std::size_t j = 0; j < observed.cols(); ++j) {
      const double d = observed(i, j) - predicted(i, j);
      out[i] += d * d;
    }
  }
  return out;
}

InferenceScore inference_score(std::span<const double> scores) {
  if (scores.empty()) fail(ErrorCode::kContract, "inference score over zero nodes");
  InferenceScore best{scores[0], 0};
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > best.score) best = {scores[i], i};
  }
  return best;
}

double ScoreSeries::at_target(std::size_t t) const {
  if (t < first_index || t - first_index >= scores.size()) {
    fail(ErrorCode::kContract, "no score for target index " + std::to_string(t));
  }
  return scores[t - first_index];
}

InferenceScore score_target(const DetectorModel& model, const FlowTensor& normalized, std::size_t target) {
  WindowView view(normalized, model.config.window);
  if (target < view.first_target() || target >= normalized.length) {
    fail(ErrorCode::kContract, "target index " + std::to_string(target) + " outside [" +
                                   std::to_string(view.first_target()) + ", " +
                                   std::to_string(normalized.length - 1) + "]");
  }
  const WindowBatch batch = view.at_target(target);
  const auto scores = node_scores(batch.target, predict(model, batch));
  return inference_score(scores);
}

ScoreSeries score_curve(const DetectorModel& model, const FlowTensor& normalized, std::optional<double> threshold) {
  check_compatible(model, normalized);
  WindowView view(normalized, model.config.window);
  ScoreSeries series;
  series.first_index = view.first_target();
  series.threshold = threshold;
  series.scores.reserve(view.size());
  series.argmax.reserve(view.size());
  for (std::size_t k = 0; k < view.size(); ++k) {
    const WindowBatch batch = view[k];
    const auto s = inference_score(node_scores(batch.target, predict(model, batch)));
    series.scores.push_back(s.score);
    series.argmax.push_back(s.node);
  }
  return series;
}

double calibrate_threshold(const DetectorModel& model, const FlowTensor& validation) {
  if (validation.length <= model.config.window) {
    fail(ErrorCode::kContract, "validation segment has " + std::to_string(validation.length) +
                                   " timestamps, needs more than the window of " +
                                   std::to_string(model.config.window));
  }
  const ScoreSeries curve = score_curve(model, validation);
  double best = curve.scores.front();
  for (double s : curve.scores) best = std::max(best, s);
  return best;
}

void write_score_csv(std::ostream& out, const ScoreSeries& series, std::span<const int> node_ids,
                     const nlohmann::json& header) {
  std::istringstream lines(header.dump(2));
  for (std::string line; std::getline(lines, line);) out << "# " << line << '\n';
  out << (series.threshold ? "t,score,argmax_node,exceeds\n" : "t,score,argmax_node\n");
  out << std::setprecision(17);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const std::size_t node = series.argmax[k];
    out << series.first_index + k << ',' << series.scores[k] << ','
        << (node < node_ids.size() ? node_ids[node] : static_cast<int>(node));
    if (series.threshold) out << ',' << (series.exceeds(k) ? 1 : 0);
    out << '\n';
  }
}

}  // namespace wsnad
