#include "doctest.h"
#include "modelavg/metrics.hpp"

using namespace modelavg;

namespace {

LabelVector labels_of(std::initializer_list<int> ys, Index n_classes) {
  LabelVector out;
  out.n_classes = n_classes;
  out.y.resize(static_cast<Index>(ys.size()));
  Index i = 0;
  for (int y : ys) out.y(i++) = y;
  return out;
}

IntVector preds_of(std::initializer_list<int> ys) {
  IntVector out(static_cast<Index>(ys.size()));
  Index i = 0;
  for (int y : ys) out(i++) = y;
  return out;
}

}  // namespace

TEST_CASE("perfect predictions score 1 on every metric") {
  const LabelVector labels = labels_of({1, 0, 1, 0}, 2);
  const IntVector pred = preds_of({1, 0, 1, 0});
  CHECK(metric(pred, labels, MetricKind::kAccuracy) == 1.0);
  CHECK(metric(pred, labels, MetricKind::kF1Binary) == 1.0);
  CHECK(metric(pred, labels, MetricKind::kMcc) == 1.0);
  CHECK(metric(pred, labels, MetricKind::kAccF1Avg) == 1.0);
}

TEST_CASE("all-wrong balanced binary predictions") {
  const LabelVector labels = labels_of({1, 1, 0, 0}, 2);
  const IntVector pred = preds_of({0, 0, 1, 1});
  CHECK(metric(pred, labels, MetricKind::kAccuracy) == 0.0);
  CHECK(metric(pred, labels, MetricKind::kMcc) == -1.0);
}

TEST_CASE("confusion TP=2 FP=1 FN=1 TN=2") {
  const LabelVector labels = labels_of({1, 1, 1, 0, 0, 0}, 2);
  const IntVector pred = preds_of({1, 1, 0, 1, 0, 0});
  CHECK(metric(pred, labels, MetricKind::kF1Binary) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(metric(pred, labels, MetricKind::kMcc) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  const double acc = 4.0 / 6.0;
  CHECK(metric(pred, labels, MetricKind::kAccF1Avg) ==
        doctest::Approx(0.5 * (acc + 2.0 / 3.0)).epsilon(1e-14));
}

TEST_CASE("degenerate marginals fall back to zero") {
  const LabelVector labels = labels_of({0, 0, 0}, 2);
  const IntVector pred = preds_of({0, 0, 0});
  CHECK(metric(pred, labels, MetricKind::kF1Binary) == 0.0);
  CHECK(metric(pred, labels, MetricKind::kMcc) == 0.0);
}

TEST_CASE("binary metrics reject multiclass inputs") {
  const LabelVector labels = labels_of({0, 1, 2}, 3);
  const IntVector pred = preds_of({0, 1, 2});
  CHECK(metric(pred, labels, MetricKind::kAccuracy) == 1.0);
  CHECK_THROWS_AS(metric(pred, labels, MetricKind::kF1Binary), InvalidInput);
  CHECK_THROWS_AS(metric(pred, labels, MetricKind::kMcc), InvalidInput);
  CHECK_THROWS_AS(metric(pred, labels, MetricKind::kAccF1Avg), InvalidInput);
}

TEST_CASE("argmax breaks ties by the lowest class index") {
  Matrix probs(2, 3);
  probs << 0.4, 0.4, 0.2,
           0.1, 0.45, 0.45;
  const IntVector pred = argmax_rows(probs);
  CHECK(pred(0) == 0);
  CHECK(pred(1) == 1);
}

TEST_CASE("probability input goes through the argmax rule") {
  const LabelVector labels = labels_of({0, 1}, 2);
  Matrix probs(2, 2);
  probs << 0.9, 0.1,
           0.2, 0.8;
  CHECK(metric(probs, labels, MetricKind::kAccuracy) == 1.0);
}

TEST_CASE("metric kind parsing round-trips") {
  for (const auto kind : {MetricKind::kAccuracy, MetricKind::kF1Binary, MetricKind::kMcc,
                          MetricKind::kAccF1Avg}) {
    CHECK(metric_kind_from_string(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(metric_kind_from_string("auc"), InvalidInput);
}

TEST_CASE("shape validation") {
  const LabelVector labels = labels_of({0, 1}, 2);
  const IntVector pred = preds_of({0});
  CHECK_THROWS_AS(metric(pred, labels, MetricKind::kAccuracy), InvalidInput);
  const IntVector out_of_range = preds_of({0, 2});
  CHECK_THROWS_AS(metric(out_of_range, labels, MetricKind::kAccuracy), InvalidInput);
}
