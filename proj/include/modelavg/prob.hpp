#pragma once

#include <Eigen/Core>

#include <cmath>
#include <vector>

#include "modelavg/common.hpp"

// Numerically stable probability primitives shared by every other module.
// All functions are pure over immutable inputs and safe to call concurrently.

namespace modelavg {

/// log(sum(exp(v))) via the max-shift trick; never overflows for finite input.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) throw InvalidInput("log_sum_exp: empty input");
  const Scalar m = v.maxCoeff();
  if (!std::isfinite(m)) throw InvalidInput("log_sum_exp: non-finite input");
  return m + std::log((v.array() - m).exp().sum());
}

/// softmax(v); entries positive, sum 1, invariant to adding a constant.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& v) {
  const auto lse = log_sum_exp(v);
  return (v.array() - lse).exp().matrix();
}

/// Row-wise softmax of a logit matrix.
inline Matrix softmax_rows(const Matrix& logits) {
  const Vector m = logits.rowwise().maxCoeff();
  Matrix shifted = logits;
  shifted.colwise() -= m;
  Matrix p = shifted.array().exp().matrix();
  const Vector z = p.rowwise().sum();
  p.array().colwise() /= z.array();
  return p;
}

/// Shannon entropy in nats, with 0*log 0 := 0. Input must lie on the
/// probability simplex within kRowSumTol.
template <typename Derived>
typename Derived::Scalar entropy(const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  Scalar sum = 0;
  Scalar h = 0;
  for (Index i = 0; i < p.size(); ++i) {
    const Scalar pi = p(i);
    if (pi < Scalar(0)) throw InvalidInput("entropy: negative probability");
    sum += pi;
    if (pi > Scalar(0)) {
      h -= pi * std::log(std::max(pi, Scalar(kProbFloor)));
    }
  }
  if (std::abs(sum - Scalar(1)) > Scalar(kRowSumTol)) {
    throw InvalidInput("entropy: input not on the simplex");
  }
  return h;
}

/// Cross entropy -sum p log q in nats; q is floored at kProbFloor inside the
/// log so one-hot q stays finite. Satisfies cross_entropy(p, q) >= entropy(p).
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar cross_entropy(const Eigen::MatrixBase<DerivedP>& p,
                                        const Eigen::MatrixBase<DerivedQ>& q) {
  using Scalar = typename DerivedP::Scalar;
  if (p.size() != q.size()) throw InvalidInput("cross_entropy: length mismatch");
  Scalar ce = 0;
  for (Index i = 0; i < p.size(); ++i) {
    const Scalar pi = p(i);
    if (pi > Scalar(0)) {
      ce -= pi * std::log(std::max(q(i), Scalar(kProbFloor)));
    }
  }
  return ce;
}

/// Checks an ensemble weight vector: non-negative entries summing to 1
/// within kWeightSumTol.
inline void validate_weight_vector(const Vector& w) {
  if (w.size() == 0) throw InvalidInput("weights: empty vector");
  double sum = 0.0;
  for (Index i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w(i)) || w(i) < 0.0) {
      throw InvalidInput("weights: entries must be finite and non-negative");
    }
    sum += w(i);
  }
  if (std::abs(sum - 1.0) > kWeightSumTol) {
    throw InvalidInput("weights: must sum to 1 within 1e-9");
  }
}

/// Validates a row-stochastic matrix. Rows whose sums are within kRowSumTol
/// of 1 are renormalized; anything worse throws.
inline Matrix as_prob_matrix(Matrix m) {
  for (Index r = 0; r < m.rows(); ++r) {
    double sum = 0.0;
    for (Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0 + kRowSumTol) {
        throw InvalidInput("probability matrix: entry outside [0, 1] at row " +
                           std::to_string(r));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowSumTol) {
      throw InvalidInput("probability matrix: row " + std::to_string(r) +
                         " sums to " + std::to_string(sum));
    }
    m.row(r) /= sum;
  }
  return m;
}

/// Weighted mixture of L probability matrices of identical shape.
/// Entry (m, c) of the result is sum_l weights(l) * probs[l](m, c).
inline Matrix mix(const std::vector<Matrix>& probs, const Vector& weights) {
  if (probs.empty()) throw InvalidInput("mix: need at least one model");
  if (weights.size() != static_cast<Index>(probs.size())) {
    throw InvalidInput("mix: weights length does not match model count");
  }
  validate_weight_vector(weights);
  const Index rows = probs[0].rows();
  const Index cols = probs[0].cols();
  for (const Matrix& p : probs) {
    if (p.rows() != rows || p.cols() != cols) {
      throw InvalidInput("mix: probability matrices must share one shape");
    }
  }
  Matrix out = weights(0) * probs[0];
  for (std::size_t l = 1; l < probs.size(); ++l) {
    out.noalias() += weights(static_cast<Index>(l)) * probs[l];
  }
  return out;
}

}  // namespace modelavg
