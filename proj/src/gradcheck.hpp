#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autodiff.hpp"

namespace wsnad {

struct GradcheckOptions {
  std::size_t nodes = 3;
  std::size_t modes = 2;
  std::size_t window = 4;
  std::size_t hidden = 3;
  std::size_t gru_layers = 1;
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 11;
  /// Test fixture: scale the incoming gradient of one op's backward rule.
  std::optional<OpKind> corrupt_op;
  double corrupt_factor = 1.5;
};

GradcheckOptions gradcheck_options_from_json(const nlohmann::json& doc);

struct ParameterCheck {
  std::string name;
  std::size_t entries = 0;
  double worst_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckReport {
  GradcheckOptions options;
  std::vector<ParameterCheck> parameters;
  double max_error = 0.0;
  bool passed = false;
  double seconds = 0.0;
};

/// |a - n| / max(|a|, |n|, 1e-6).
double relative_error(double analytic, double numeric);

/// Compares the full detector's loss gradient on one random window against
/// central differences, parameter by parameter.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

nlohmann::json to_json(const GradcheckReport& report);

}  // namespace wsnad
