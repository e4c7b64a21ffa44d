#pragma once

#include <string>

#include "modelavg/common.hpp"

namespace modelavg {

enum class MetricKind { kAccuracy, kF1Binary, kMcc, kAccF1Avg };

MetricKind metric_kind_from_string(const std::string& name);
std::string to_string(MetricKind kind);

/// Hard labels from a probability matrix; ties broken by the lowest class
/// index for determinism across runs and platforms.
IntVector argmax_rows(const Matrix& probs);

/// Classification metric over hard predictions. f1_binary, mcc and
/// acc_f1_avg require exactly two classes with positive class 1.
double metric(const IntVector& pred, const LabelVector& labels, MetricKind kind);

/// Same, applying the argmax rule to a probability matrix first.
double metric(const Matrix& probs, const LabelVector& labels, MetricKind kind);

}  // namespace modelavg
