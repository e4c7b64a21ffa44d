#pragma once

#include <cstdint>
#include <vector>

#include "modelavg/common.hpp"

namespace modelavg {

/// Settings for entropy-minimizing ensemble weight fitting: the quadratic
/// regularization constant toward prior_weights, and the gradient descent
/// schedule. Empty prior_weights means uniform.
struct OmaConfig {
  double lambda = 0.0;
  double learning_rate = 0.001;
  int epochs = 400;
  std::uint64_t seed = 0;
  Vector prior_weights;
};

/// Simplex weights from unconstrained parameters:
/// beta_l = softplus(tau_l) / sum_l' softplus(tau_l'), evaluated stably for
/// large |tau|. Throws NumericalFailure if every softplus underflows to zero.
Vector beta_from_tau(const Vector& tau);

/// Average entropy of the mixed predictive distribution over the given
/// probability matrices, plus lambda * |beta - beta0|^2. Non-negative; the
/// entropy term lies in [0, log C].
double oma_objective(const Vector& beta, const std::vector<Matrix>& probs,
                     const OmaConfig& cfg);

/// Analytic gradient of oma_objective(beta_from_tau(tau)) with respect to
/// tau, via the normalized-softplus Jacobian.
Vector oma_gradient(const Vector& tau, const std::vector<Matrix>& probs,
                    const OmaConfig& cfg);

struct OmaFitResult {
  Vector beta;
  Vector tau;
  std::vector<double> objective_trace;  // initial value plus one per epoch
};

/// Gradient descent on tau at the configured learning rate, with step
/// halving whenever a full step would fail to decrease the objective, so the
/// recorded trace is non-increasing. tau starts at the softplus inverse of
/// the prior weights (zero entries floored at 1e-6), so the first iterate
/// reproduces beta0.
OmaFitResult fit_oma(const std::vector<Matrix>& probs, const OmaConfig& cfg);

/// Prior ensemble weights from a labeled split: softmax over models of the
/// per-datapoint mean log likelihood sum_n log p_l(y_n | x_n) / N.
Vector zeroshot_prior_weights(const std::vector<Matrix>& probs_train,
                              const LabelVector& labels);

}  // namespace modelavg
