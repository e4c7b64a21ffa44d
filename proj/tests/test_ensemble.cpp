#include "doctest.h"
#include "modelavg/ensemble.hpp"
#include "modelavg/prob.hpp"
#include "test_support.hpp"

using namespace modelavg;
using testsupport::random_prob_matrix;

namespace {

LabelVector labels_of(std::initializer_list<int> ys, Index n_classes) {
  LabelVector out;
  out.n_classes = n_classes;
  out.y.resize(static_cast<Index>(ys.size()));
  Index i = 0;
  for (int y : ys) out.y(i++) = y;
  return out;
}

}  // namespace

TEST_CASE("ensemble_predict modes") {
  std::vector<Matrix> probs(2);
  probs[0].resize(1, 2);
  probs[0] << 1.0, 0.0;
  probs[1].resize(1, 2);
  probs[1] << 0.0, 1.0;

  SUBCASE("output averaging is the uniform mixture") {
    EnsembleSpec spec;
    spec.mode = EnsembleMode::kOutputAvg;
    const Matrix out = ensemble_predict(spec, probs);
    CHECK(out(0, 0) == 0.5);
    CHECK(out(0, 1) == 0.5);
  }
  SUBCASE("one-hot bma weights pass a member through unchanged") {
    testsupport::Rng rng(81);
    std::vector<Matrix> ps = {random_prob_matrix(4, 3, rng), random_prob_matrix(4, 3, rng)};
    EnsembleSpec spec;
    spec.mode = EnsembleMode::kBma;
    spec.weights = Vector::Zero(2);
    spec.weights(1) = 1.0;
    const Matrix out = ensemble_predict(spec, ps);
    CHECK((out.array() == ps[1].array()).all());
  }
  SUBCASE("oma weights mix linearly") {
    std::vector<Matrix> ps(2);
    ps[0].resize(1, 2);
    ps[0] << 0.8, 0.2;
    ps[1].resize(1, 2);
    ps[1] << 0.4, 0.6;
    EnsembleSpec spec;
    spec.mode = EnsembleMode::kOma;
    spec.weights.resize(2);
    spec.weights << 0.25, 0.75;
    const Matrix out = ensemble_predict(spec, ps);
    CHECK(out(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(out(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("uniform explicit weights equal output averaging bit for bit") {
    testsupport::Rng rng(82);
    std::vector<Matrix> ps = {random_prob_matrix(5, 4, rng), random_prob_matrix(5, 4, rng),
                              random_prob_matrix(5, 4, rng)};
    EnsembleSpec uniform;
    uniform.mode = EnsembleMode::kBma;
    uniform.weights = Vector::Constant(3, 1.0 / 3.0);
    EnsembleSpec avg;
    avg.mode = EnsembleMode::kOutputAvg;
    const Matrix a = ensemble_predict(uniform, ps);
    const Matrix b = ensemble_predict(avg, ps);
    CHECK((a.array() == b.array()).all());
  }
  SUBCASE("weight length validation") {
    EnsembleSpec spec;
    spec.mode = EnsembleMode::kBma;
    spec.weights = Vector::Constant(3, 1.0 / 3.0);
    CHECK_THROWS_AS(ensemble_predict(spec, probs), InvalidInput);
  }
}

TEST_CASE("argmax is invariant to uniform positive weight rescaling") {
  testsupport::Rng rng(83);
  std::vector<Matrix> ps = {random_prob_matrix(20, 4, rng), random_prob_matrix(20, 4, rng)};
  const Vector base = testsupport::random_simplex(2, rng);
  EnsembleSpec spec;
  spec.mode = EnsembleMode::kBma;
  spec.weights = base;
  const IntVector before = argmax_rows(ensemble_predict(spec, ps));
  // Rescale then renormalize: identical direction, so identical argmax.
  const Vector rescaled = (7.5 * base) / (7.5 * base).sum();
  spec.weights = rescaled;
  const IntVector after = argmax_rows(ensemble_predict(spec, ps));
  CHECK((before.array() == after.array()).all());
}

TEST_CASE("evaluate report") {
  SUBCASE("single member has zero deltas") {
    std::vector<Matrix> ps(1);
    ps[0].resize(2, 2);
    ps[0] << 0.9, 0.1, 0.2, 0.8;
    const LabelVector labels = labels_of({0, 1}, 2);
    EnsembleSpec spec;
    spec.mode = EnsembleMode::kBma;
    spec.weights = Vector::Ones(1);
    const EvalReport report = evaluate(spec, ps, labels, MetricKind::kAccuracy);
    CHECK(report.ensemble_metric == report.member_metrics[0]);
    CHECK(report.delta_vs_output_avg == 0.0);
    CHECK(report.delta_vs_best_member == 0.0);
  }

  SUBCASE("one-hot weights reproduce the member's solo metric exactly") {
    Matrix perfect(4, 2);
    perfect << 0.9, 0.1, 0.8, 0.2, 0.1, 0.9, 0.3, 0.7;
    Matrix inverted = perfect;
    inverted.col(0).swap(inverted.col(1));
    std::vector<Matrix> ps = {perfect, inverted};
    const LabelVector labels = labels_of({0, 0, 1, 1}, 2);
    EnsembleSpec spec;
    spec.mode = EnsembleMode::kBma;
    spec.weights = Vector::Zero(2);
    spec.weights(0) = 1.0;
    const EvalReport report = evaluate(spec, ps, labels, MetricKind::kAccuracy);
    CHECK(report.ensemble_metric == 1.0);
    CHECK(report.ensemble_metric == report.member_metrics[0]);
    CHECK(report.member_metrics[1] == 0.0);
    CHECK(report.delta_vs_best_member == 0.0);
  }

  SUBCASE("json layout is stable") {
    std::vector<Matrix> ps(2);
    ps[0].resize(1, 2);
    ps[0] << 0.75, 0.25;
    ps[1].resize(1, 2);
    ps[1] << 0.25, 0.75;
    const LabelVector labels = labels_of({0}, 2);
    EnsembleSpec spec;
    spec.mode = EnsembleMode::kBma;
    spec.weights.resize(2);
    spec.weights << 0.5, 0.5;
    spec.member_ids = {"a", "b"};
    const std::string json = to_json(evaluate(spec, ps, labels, MetricKind::kAccuracy));
    CHECK(json ==
          "{\"mode\":\"bma\",\"weights\":[0.5,0.5],"
          "\"members\":[{\"id\":\"a\",\"metric\":1},{\"id\":\"b\",\"metric\":0}],"
          "\"ensemble_metric\":1,\"delta_vs_output_avg\":0,\"delta_vs_best_member\":0}");
  }
}

TEST_CASE("ensemble mode parsing") {
  CHECK(ensemble_mode_from_string("bma") == EnsembleMode::kBma);
  CHECK(ensemble_mode_from_string("oma") == EnsembleMode::kOma);
  CHECK(ensemble_mode_from_string("avg") == EnsembleMode::kOutputAvg);
  CHECK(ensemble_mode_from_string("output_avg") == EnsembleMode::kOutputAvg);
  CHECK_THROWS_AS(ensemble_mode_from_string("mean"), InvalidInput);
}
