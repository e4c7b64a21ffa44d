#pragma once

#include <functional>
#include <vector>

#include "modelavg/common.hpp"

// Brute-force reference implementations used to validate every
// approximation in the main library: dense-grid model evidence,
// central-difference derivatives, an exact second-order MAP solve, and an
// exhaustive simplex search for ensemble weights. Everything here is written
// as plain scalar loops, independent of the vectorized production paths.

namespace modelavg::oracle {

struct QuadratureSpec {
  double bound_sigmas = 8.0;   // integration bounds at +- k * sqrt(alpha)
  int points_per_axis = 41;    // minimum 41
};

/// Log model evidence by trapezoid-rule integration of
/// likelihood * prior over the full weight space. Guarded to at most 6
/// parameters (n_classes * n_dims).
double quadrature_evidence(const Matrix& feats, const LabelVector& labels,
                           double alpha, const QuadratureSpec& spec = {});

/// Central-difference gradient of f at x.
Vector finite_diff_gradient(const std::function<double(const Vector&)>& f,
                            const Vector& x, double step);

/// Central-difference Hessian of f at x; symmetric by construction.
Matrix finite_diff_hessian(const std::function<double(const Vector&)>& f,
                           const Vector& x, double step);

/// Exact MAP weights (n_classes x n_dims) by damped Newton iteration on the
/// full dense system, run to a gradient infinity norm of grad_tol.
Matrix exact_map(const Matrix& feats, const LabelVector& labels, double alpha,
                 double grad_tol = 1e-10, int max_iter = 500);

struct GridSearchResult {
  Vector beta;
  double objective = 0.0;
};

/// Exhaustive search over the weight simplex (up to 3 models) at the given
/// resolution, minimizing the average mixture entropy plus
/// lambda * |beta - beta0|^2.
GridSearchResult grid_search_beta(const std::vector<Matrix>& probs, double lambda,
                                  const Vector& beta0, double resolution);

}  // namespace modelavg::oracle
