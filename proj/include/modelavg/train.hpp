#pragma once

#include <cstdint>
#include <vector>

#include "modelavg/common.hpp"

namespace modelavg {

/// A multi-class linear head trained under a zero-mean Gaussian prior with
/// variance alpha, plus training diagnostics.
struct LinearHead {
  Matrix weights;  // n_classes x n_dims, class-major
  double alpha = 1.0;
  Index n_train = 0;
  bool converged = false;
  double grad_inf_norm = 0.0;  // full-batch gradient at the returned weights
  double objective = 0.0;      // penalized objective at the returned weights
  std::vector<double> epoch_objectives;
};

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 200;
  Index batch_size = 1000;  // clamped to N when larger
  std::uint64_t seed = 0;
  double grad_tol = 1e-4;      // per-coordinate, on the full-batch gradient
  int polish_step_cap = 20000;
};

/// Penalized negative log posterior of a head: the multi-class logistic
/// negative log likelihood plus |W|^2 / (2 alpha), omitting the constant
/// normalization of the prior. Strictly convex in the weights.
double neg_log_posterior(const LinearHead& head, const Matrix& feats,
                         const LabelVector& labels);

/// Gradient of neg_log_posterior with respect to the weights (same shape).
Matrix neg_log_posterior_gradient(const LinearHead& head, const Matrix& feats,
                                  const LabelVector& labels);

/// Data log likelihood sum_n log p(y_n | x_n) at the head's weights.
double data_log_likelihood(const LinearHead& head, const Matrix& feats,
                           const LabelVector& labels);

/// Trains a head by minibatch gradient descent at a fixed learning rate with
/// per-epoch Fisher-Yates shuffling, followed by a full-batch line-search
/// polish until the gradient infinity norm drops below cfg.grad_tol or the
/// step cap is hit. Deterministic given cfg.seed; weights start at zero.
/// Non-convergence sets converged = false; non-finite values throw
/// NumericalFailure.
LinearHead train_map(const Matrix& feats, const LabelVector& labels, double alpha,
                     const TrainConfig& cfg);

/// Per-row class probabilities softmax(W x_n).
Matrix predict_probs(const LinearHead& head, const Matrix& feats);

}  // namespace modelavg
