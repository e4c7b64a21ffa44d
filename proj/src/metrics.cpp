#include "modelavg/metrics.hpp"

#include <cmath>

namespace modelavg {

MetricKind metric_kind_from_string(const std::string& name) {
  if (name == "accuracy") return MetricKind::kAccuracy;
  if (name == "f1_binary") return MetricKind::kF1Binary;
  if (name == "mcc") return MetricKind::kMcc;
  if (name == "acc_f1_avg") return MetricKind::kAccF1Avg;
  throw InvalidInput("unknown metric kind: " + name);
}

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::kAccuracy: return "accuracy";
    case MetricKind::kF1Binary: return "f1_binary";
    case MetricKind::kMcc: return "mcc";
    case MetricKind::kAccF1Avg: return "acc_f1_avg";
  }
  throw InvalidInput("unknown metric kind");
}

IntVector argmax_rows(const Matrix& probs) {
  IntVector out(probs.rows());
  for (Index r = 0; r < probs.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < probs.cols(); ++c) {
      if (probs(r, c) > probs(r, best)) best = c;
    }
    out(r) = static_cast<int>(best);
  }
  return out;
}

namespace {

struct BinaryCounts {
  double tp = 0, fp = 0, fn = 0, tn = 0;
};

BinaryCounts binary_counts(const IntVector& pred, const IntVector& truth) {
  BinaryCounts c;
  for (Index i = 0; i < pred.size(); ++i) {
    if (truth(i) == 1) {
      (pred(i) == 1 ? c.tp : c.fn) += 1.0;
    } else {
      (pred(i) == 1 ? c.fp : c.tn) += 1.0;
    }
  }
  return c;
}

double accuracy_of(const IntVector& pred, const IntVector& truth) {
  double correct = 0.0;
  for (Index i = 0; i < pred.size(); ++i) correct += pred(i) == truth(i) ? 1.0 : 0.0;
  return correct / static_cast<double>(pred.size());
}

double f1_of(const BinaryCounts& c) {
  const double denom = 2.0 * c.tp + c.fp + c.fn;
  return denom == 0.0 ? 0.0 : 2.0 * c.tp / denom;
}

double mcc_of(const BinaryCounts& c) {
  const double pp = c.tp + c.fp;
  const double pn = c.fn + c.tn;
  const double ap = c.tp + c.fn;
  const double an = c.fp + c.tn;
  if (pp == 0.0 || pn == 0.0 || ap == 0.0 || an == 0.0) return 0.0;
  return (c.tp * c.tn - c.fp * c.fn) / std::sqrt(pp * pn * ap * an);
}

}  // namespace

double metric(const IntVector& pred, const LabelVector& labels, MetricKind kind) {
  validate_labels(labels);
  if (pred.size() != labels.size()) {
    throw InvalidInput("metric: prediction and label counts differ");
  }
  if (pred.size() == 0) throw InvalidInput("metric: empty input");
  for (Index i = 0; i < pred.size(); ++i) {
    if (pred(i) < 0 || pred(i) >= labels.n_classes) {
      throw InvalidInput("metric: predicted class outside [0, n_classes)");
    }
  }
  const bool binary_only = kind != MetricKind::kAccuracy;
  if (binary_only && labels.n_classes != 2) {
    throw InvalidInput("metric: " + to_string(kind) + " requires exactly 2 classes");
  }
  switch (kind) {
    case MetricKind::kAccuracy:
      return accuracy_of(pred, labels.y);
    case MetricKind::kF1Binary:
      return f1_of(binary_counts(pred, labels.y));
    case MetricKind::kMcc:
      return mcc_of(binary_counts(pred, labels.y));
    case MetricKind::kAccF1Avg:
      return 0.5 * (accuracy_of(pred, labels.y) + f1_of(binary_counts(pred, labels.y)));
  }
  throw InvalidInput("unknown metric kind");
}

double metric(const Matrix& probs, const LabelVector& labels, MetricKind kind) {
  return metric(argmax_rows(probs), labels, kind);
}

}  // namespace modelavg
