#include "modelavg/ensemble.hpp"

#include <algorithm>

#include "modelavg/io.hpp"
#include "modelavg/prob.hpp"

namespace modelavg {

EnsembleMode ensemble_mode_from_string(const std::string& name) {
  if (name == "bma") return EnsembleMode::kBma;
  if (name == "oma") return EnsembleMode::kOma;
  if (name == "avg" || name == "output_avg") return EnsembleMode::kOutputAvg;
  throw InvalidInput("unknown ensemble mode: " + name);
}

std::string to_string(EnsembleMode mode) {
  switch (mode) {
    case EnsembleMode::kBma: return "bma";
    case EnsembleMode::kOma: return "oma";
    case EnsembleMode::kOutputAvg: return "output_avg";
  }
  throw InvalidInput("unknown ensemble mode");
}

namespace {

Vector effective_weights(const EnsembleSpec& spec, std::size_t n_models) {
  if (spec.mode == EnsembleMode::kOutputAvg) {
    return Vector::Constant(static_cast<Index>(n_models),
                            1.0 / static_cast<double>(n_models));
  }
  if (spec.weights.size() != static_cast<Index>(n_models)) {
    throw InvalidInput("ensemble: weights length does not match member count");
  }
  return spec.weights;
}

}  // namespace

Matrix ensemble_predict(const EnsembleSpec& spec, const std::vector<Matrix>& probs) {
  if (probs.empty()) throw InvalidInput("ensemble_predict: no members");
  return mix(probs, effective_weights(spec, probs.size()));
}

EvalReport evaluate(const EnsembleSpec& spec, const std::vector<Matrix>& probs,
                    const LabelVector& labels, MetricKind kind) {
  if (probs.empty()) throw InvalidInput("evaluate: no members");
  EvalReport report;
  report.mode = spec.mode;
  report.weights = effective_weights(spec, probs.size());
  report.metric_kind = kind;
  report.member_ids = spec.member_ids;
  if (report.member_ids.empty()) {
    for (std::size_t l = 0; l < probs.size(); ++l) {
      report.member_ids.push_back("model" + std::to_string(l));
    }
  }
  if (report.member_ids.size() != probs.size()) {
    throw InvalidInput("evaluate: member id count does not match member count");
  }

  report.ensemble_metric = metric(ensemble_predict(spec, probs), labels, kind);
  for (const Matrix& p : probs) {
    report.member_metrics.push_back(metric(p, labels, kind));
  }
  EnsembleSpec avg = spec;
  avg.mode = EnsembleMode::kOutputAvg;
  const double avg_metric = metric(ensemble_predict(avg, probs), labels, kind);
  const double best_member =
      *std::max_element(report.member_metrics.begin(), report.member_metrics.end());
  // Deltas in absolute percentage points.
  report.delta_vs_output_avg = 100.0 * (report.ensemble_metric - avg_metric);
  report.delta_vs_best_member = 100.0 * (report.ensemble_metric - best_member);
  return report;
}

std::string to_json(const EvalReport& report) {
  std::string out = "{";
  out += "\"mode\":\"" + to_string(report.mode) + "\"";
  out += ",\"weights\":[";
  for (Index i = 0; i < report.weights.size(); ++i) {
    if (i > 0) out += ',';
    out += format_double(report.weights(i));
  }
  out += "],\"members\":[";
  for (std::size_t i = 0; i < report.member_ids.size(); ++i) {
    if (i > 0) out += ',';
    out += "{\"id\":\"" + report.member_ids[i] + "\",\"metric\":" +
           format_double(report.member_metrics[i]) + "}";
  }
  out += "],\"ensemble_metric\":" + format_double(report.ensemble_metric);
  out += ",\"delta_vs_output_avg\":" + format_double(report.delta_vs_output_avg);
  out += ",\"delta_vs_best_member\":" + format_double(report.delta_vs_best_member);
  out += "}";
  return out;
}

}  // namespace modelavg
