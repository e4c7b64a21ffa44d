#pragma once

#include <string>
#include <vector>

#include "modelavg/common.hpp"
#include "modelavg/metrics.hpp"

namespace modelavg {

enum class EnsembleMode { kBma, kOma, kOutputAvg };

EnsembleMode ensemble_mode_from_string(const std::string& name);
std::string to_string(EnsembleMode mode);

/// How to combine member predictions: evidence weights (bma), fitted weights
/// (oma), or a plain uniform average (output_avg, which ignores weights).
struct EnsembleSpec {
  EnsembleMode mode = EnsembleMode::kOutputAvg;
  Vector weights;
  std::vector<std::string> member_ids;
};

/// Mixed predictive distribution under the spec's effective weights.
Matrix ensemble_predict(const EnsembleSpec& spec, const std::vector<Matrix>& probs);

/// Ensemble metric next to each member's solo metric, with deltas in
/// absolute percentage points against output averaging and against the best
/// single member.
struct EvalReport {
  EnsembleMode mode = EnsembleMode::kOutputAvg;
  Vector weights;
  std::vector<std::string> member_ids;
  std::vector<double> member_metrics;
  MetricKind metric_kind = MetricKind::kAccuracy;
  double ensemble_metric = 0.0;
  double delta_vs_output_avg = 0.0;
  double delta_vs_best_member = 0.0;
};

EvalReport evaluate(const EnsembleSpec& spec, const std::vector<Matrix>& probs,
                    const LabelVector& labels, MetricKind kind);

/// Report as a single JSON document with fixed key order:
/// {mode, weights, members, ensemble_metric, delta_vs_output_avg,
///  delta_vs_best_member}.
std::string to_json(const EvalReport& report);

}  // namespace modelavg
