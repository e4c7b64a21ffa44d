#include "modelavg/oracle.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "modelavg/prob.hpp"

namespace modelavg::oracle {

namespace {

// Scalar-loop evaluation of the penalized objective and its derivatives on
// the flattened class-major weight vector. Kept deliberately separate from
// the vectorized production path so the two routes share no code.

double flat_objective(const Vector& w, const Matrix& x, const IntVector& y,
                      Index n_classes, double alpha) {
  const Index d = x.cols();
  double value = 0.0;
  for (Index n = 0; n < x.rows(); ++n) {
    double zmax = -std::numeric_limits<double>::infinity();
    std::vector<double> z(static_cast<std::size_t>(n_classes), 0.0);
    for (Index c = 0; c < n_classes; ++c) {
      double dot = 0.0;
      for (Index j = 0; j < d; ++j) dot += w(c * d + j) * x(n, j);
      z[static_cast<std::size_t>(c)] = dot;
      zmax = std::max(zmax, dot);
    }
    double sum = 0.0;
    for (Index c = 0; c < n_classes; ++c) sum += std::exp(z[static_cast<std::size_t>(c)] - zmax);
    value += zmax + std::log(sum) - z[static_cast<std::size_t>(y(n))];
  }
  for (Index j = 0; j < w.size(); ++j) value += w(j) * w(j) / (2.0 * alpha);
  return value;
}

void flat_probs(const Vector& w, const Matrix& x, Index n_classes, Index row,
                std::vector<double>& p) {
  const Index d = x.cols();
  double zmax = -std::numeric_limits<double>::infinity();
  for (Index c = 0; c < n_classes; ++c) {
    double dot = 0.0;
    for (Index j = 0; j < d; ++j) dot += w(c * d + j) * x(row, j);
    p[static_cast<std::size_t>(c)] = dot;
    zmax = std::max(zmax, dot);
  }
  double sum = 0.0;
  for (Index c = 0; c < n_classes; ++c) {
    p[static_cast<std::size_t>(c)] = std::exp(p[static_cast<std::size_t>(c)] - zmax);
    sum += p[static_cast<std::size_t>(c)];
  }
  for (Index c = 0; c < n_classes; ++c) p[static_cast<std::size_t>(c)] /= sum;
}

Vector flat_gradient(const Vector& w, const Matrix& x, const IntVector& y,
                     Index n_classes, double alpha) {
  const Index d = x.cols();
  Vector g = w / alpha;
  std::vector<double> p(static_cast<std::size_t>(n_classes));
  for (Index n = 0; n < x.rows(); ++n) {
    flat_probs(w, x, n_classes, n, p);
    for (Index c = 0; c < n_classes; ++c) {
      const double coeff = p[static_cast<std::size_t>(c)] - (y(n) == c ? 1.0 : 0.0);
      for (Index j = 0; j < d; ++j) g(c * d + j) += coeff * x(n, j);
    }
  }
  return g;
}

Matrix flat_hessian(const Vector& w, const Matrix& x, Index n_classes, double alpha) {
  const Index d = x.cols();
  const Index size = n_classes * d;
  Matrix h = Matrix::Identity(size, size) / alpha;
  std::vector<double> p(static_cast<std::size_t>(n_classes));
  for (Index n = 0; n < x.rows(); ++n) {
    flat_probs(w, x, n_classes, n, p);
    for (Index a = 0; a < n_classes; ++a) {
      for (Index b = 0; b < n_classes; ++b) {
        const double coeff = p[static_cast<std::size_t>(a)] *
                             ((a == b ? 1.0 : 0.0) - p[static_cast<std::size_t>(b)]);
        for (Index i = 0; i < d; ++i) {
          for (Index j = 0; j < d; ++j) {
            h(a * d + i, b * d + j) += coeff * x(n, i) * x(n, j);
          }
        }
      }
    }
  }
  return h;
}

}  // namespace

double quadrature_evidence(const Matrix& feats, const LabelVector& labels,
                           double alpha, const QuadratureSpec& spec) {
  if (labels.n_classes < 2) throw InvalidInput("quadrature_evidence: need at least 2 classes");
  if (feats.rows() != labels.size()) {
    throw InvalidInput("quadrature_evidence: features and labels disagree on count");
  }
  if (alpha <= 0.0) throw InvalidInput("quadrature_evidence: alpha must be positive");
  const Index c = labels.n_classes;
  const Index d = feats.cols();
  const Index p = c * d;
  if (p > 6) throw InvalidInput("quadrature_evidence: more than 6 parameters");
  if (spec.points_per_axis < 41) {
    throw InvalidInput("quadrature_evidence: need at least 41 points per axis");
  }
  const Index n = feats.rows();
  const int pts = spec.points_per_axis;
  const double bound = spec.bound_sigmas * std::sqrt(alpha);
  const double h = 2.0 * bound / (pts - 1);

  std::vector<double> grid(static_cast<std::size_t>(pts));
  std::vector<double> log_prior(static_cast<std::size_t>(pts));
  std::vector<double> log_trap(static_cast<std::size_t>(pts));
  constexpr double kPi = 3.14159265358979323846;
  const double prior_norm = -0.5 * std::log(2.0 * kPi * alpha);
  for (int t = 0; t < pts; ++t) {
    grid[static_cast<std::size_t>(t)] = -bound + t * h;
    const double g = grid[static_cast<std::size_t>(t)];
    log_prior[static_cast<std::size_t>(t)] = -g * g / (2.0 * alpha) + prior_norm;
    log_trap[static_cast<std::size_t>(t)] = (t == 0 || t == pts - 1) ? std::log(0.5) : 0.0;
  }

  // Logits are updated incrementally as the odometer walks the grid; the
  // label-selected sum and per-column sums update in O(1) via precomputed
  // per-class feature sums.
  Matrix z = Matrix::Zero(n, c);
  Vector col_sum_x(d);
  Matrix sel_sum_x(c, d);  // sum of X(:, j) over rows with label a
  sel_sum_x.setZero();
  for (Index j = 0; j < d; ++j) {
    col_sum_x(j) = feats.col(j).sum();
    for (Index r = 0; r < n; ++r) sel_sum_x(labels.y(r), j) += feats(r, j);
  }

  std::vector<int> idx(static_cast<std::size_t>(p), 0);
  Vector w = Vector::Constant(p, grid[0]);
  for (Index axis = 0; axis < p; ++axis) {
    z.col(axis / d) += grid[0] * feats.col(axis % d);
  }
  double sel_sum = 0.0;
  Vector z_col_sum = Vector::Zero(c);
  for (Index axis = 0; axis < p; ++axis) {
    sel_sum += grid[0] * sel_sum_x(axis / d, axis % d);
    z_col_sum(axis / d) += grid[0] * col_sum_x(axis % d);
  }

  Vector buf_a(n), buf_b(n);
  const bool two_class = c == 2;

  double running_max = -std::numeric_limits<double>::infinity();
  double running_sum = 0.0;
  const auto accumulate = [&](double v) {
    if (v <= running_max) {
      running_sum += std::exp(v - running_max);
    } else {
      running_sum = running_sum * std::exp(running_max - v) + 1.0;
      running_max = v;
    }
  };

  // The log likelihood is never positive, so a grid point's value is at
  // most its prior-plus-weight part. Points sitting 80 nats below a known
  // grid value cannot move the integral and skip the likelihood evaluation.
  // The reference is the exact mid-grid point, whose value is computed up
  // front.
  double prune_ref;
  {
    const int mid = (pts - 1) / 2;
    const double wmid = grid[static_cast<std::size_t>(mid)];
    double ll_mid = 0.0;
    for (Index r = 0; r < n; ++r) {
      double zmax = -std::numeric_limits<double>::infinity();
      std::vector<double> zr(static_cast<std::size_t>(c), 0.0);
      for (Index a = 0; a < c; ++a) {
        double dot = 0.0;
        for (Index j = 0; j < d; ++j) dot += wmid * feats(r, j);
        zr[static_cast<std::size_t>(a)] = dot;
        zmax = std::max(zmax, dot);
      }
      double s = 0.0;
      for (Index a = 0; a < c; ++a) s += std::exp(zr[static_cast<std::size_t>(a)] - zmax);
      ll_mid += zr[static_cast<std::size_t>(labels.y(r))] - zmax - std::log(s);
    }
    prune_ref = ll_mid + static_cast<double>(p) *
                             (log_prior[static_cast<std::size_t>(mid)] +
                              log_trap[static_cast<std::size_t>(mid)]);
  }

  for (;;) {
    double lpw = 0.0;
    for (Index axis = 0; axis < p; ++axis) {
      lpw += log_prior[static_cast<std::size_t>(idx[static_cast<std::size_t>(axis)])] +
             log_trap[static_cast<std::size_t>(idx[static_cast<std::size_t>(axis)])];
    }
    if (lpw >= std::max(running_max, prune_ref) - 80.0) {
      double lse_sum;
      if (two_class) {
        buf_a = z.col(0) - z.col(1);
        buf_b = (-buf_a.cwiseAbs()).array().exp().matrix();
        lse_sum = z_col_sum(1) + buf_a.cwiseMax(0.0).sum() +
                  (1.0 + buf_b.array()).log().sum();
      } else {
        lse_sum = 0.0;
        for (Index r = 0; r < n; ++r) {
          double zmax = z(r, 0);
          for (Index a = 1; a < c; ++a) zmax = std::max(zmax, z(r, a));
          double s = 0.0;
          for (Index a = 0; a < c; ++a) s += std::exp(z(r, a) - zmax);
          lse_sum += zmax + std::log(s);
        }
      }
      accumulate(sel_sum - lse_sum + lpw);
    }

    Index axis = 0;
    for (; axis < p; ++axis) {
      auto& i = idx[static_cast<std::size_t>(axis)];
      const double old = grid[static_cast<std::size_t>(i)];
      if (i + 1 < pts) {
        ++i;
      } else {
        i = 0;
      }
      const double neww = grid[static_cast<std::size_t>(i)];
      const double delta = neww - old;
      const Index cls = axis / d;
      const Index dim = axis % d;
      z.col(cls) += delta * feats.col(dim);
      sel_sum += delta * sel_sum_x(cls, dim);
      z_col_sum(cls) += delta * col_sum_x(dim);
      if (i != 0) break;  // this axis advanced without wrapping
    }
    if (axis == p) break;  // every axis wrapped: grid exhausted
  }

  return running_max + std::log(running_sum) +
         static_cast<double>(p) * std::log(h);
}

Vector finite_diff_gradient(const std::function<double(const Vector&)>& f,
                            const Vector& x, double step) {
  if (step <= 0.0) throw InvalidInput("finite_diff_gradient: step must be positive");
  Vector g(x.size());
  Vector probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + step;
    const double fp = f(probe);
    probe(i) = x(i) - step;
    const double fm = f(probe);
    probe(i) = x(i);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalFailure("finite_diff_gradient: non-finite evaluation");
    }
    g(i) = (fp - fm) / (2.0 * step);
  }
  return g;
}

Matrix finite_diff_hessian(const std::function<double(const Vector&)>& f,
                           const Vector& x, double step) {
  if (step <= 0.0) throw InvalidInput("finite_diff_hessian: step must be positive");
  const Index p = x.size();
  Matrix h(p, p);
  const double f0 = f(x);
  if (!std::isfinite(f0)) throw NumericalFailure("finite_diff_hessian: non-finite evaluation");
  Vector probe = x;
  for (Index i = 0; i < p; ++i) {
    probe(i) = x(i) + step;
    const double fp = f(probe);
    probe(i) = x(i) - step;
    const double fm = f(probe);
    probe(i) = x(i);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalFailure("finite_diff_hessian: non-finite evaluation");
    }
    h(i, i) = (fp - 2.0 * f0 + fm) / (step * step);
  }
  for (Index i = 0; i < p; ++i) {
    for (Index j = i + 1; j < p; ++j) {
      probe(i) = x(i) + step;
      probe(j) = x(j) + step;
      const double fpp = f(probe);
      probe(j) = x(j) - step;
      const double fpm = f(probe);
      probe(i) = x(i) - step;
      probe(j) = x(j) + step;
      const double fmp = f(probe);
      probe(j) = x(j) - step;
      const double fmm = f(probe);
      probe(i) = x(i);
      probe(j) = x(j);
      if (!std::isfinite(fpp) || !std::isfinite(fpm) || !std::isfinite(fmp) ||
          !std::isfinite(fmm)) {
        throw NumericalFailure("finite_diff_hessian: non-finite evaluation");
      }
      const double v = (fpp - fpm - fmp + fmm) / (4.0 * step * step);
      h(i, j) = v;
      h(j, i) = v;
    }
  }
  return h;
}

Matrix exact_map(const Matrix& feats, const LabelVector& labels, double alpha,
                 double grad_tol, int max_iter) {
  if (labels.n_classes < 2) throw InvalidInput("exact_map: need at least 2 classes");
  if (feats.rows() != labels.size()) {
    throw InvalidInput("exact_map: features and labels disagree on count");
  }
  if (alpha <= 0.0) throw InvalidInput("exact_map: alpha must be positive");
  const Index c = labels.n_classes;
  const Index d = feats.cols();
  Vector w = Vector::Zero(c * d);
  double f = flat_objective(w, feats, labels.y, c, alpha);
  for (int it = 0; it < max_iter; ++it) {
    const Vector g = flat_gradient(w, feats, labels.y, c, alpha);
    if (g.cwiseAbs().maxCoeff() <= grad_tol) break;
    const Matrix h = flat_hessian(w, feats, c, alpha);
    const Vector delta = h.ldlt().solve(g);
    if (!delta.allFinite()) throw NumericalFailure("exact_map: singular Newton system");
    // Damp while far from the optimum; near it the objective decrease falls
    // below double resolution, so trust the undamped Newton step there.
    if (g.cwiseAbs().maxCoeff() <= 1e-4) {
      w -= delta;
      f = flat_objective(w, feats, labels.y, c, alpha);
      continue;
    }
    double t = 1.0;
    bool accepted = false;
    while (t >= 1e-16) {
      const Vector trial = w - t * delta;
      const double ftrial = flat_objective(trial, feats, labels.y, c, alpha);
      if (std::isfinite(ftrial) && ftrial <= f - 1e-4 * t * g.dot(delta)) {
        w = trial;
        f = ftrial;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      throw NumericalFailure("exact_map: line search failed to descend");
    }
  }
  Matrix out(c, d);
  for (Index a = 0; a < c; ++a) {
    for (Index j = 0; j < d; ++j) out(a, j) = w(a * d + j);
  }
  return out;
}

GridSearchResult grid_search_beta(const std::vector<Matrix>& probs, double lambda,
                                  const Vector& beta0, double resolution) {
  if (probs.empty() || probs.size() > 3) {
    throw InvalidInput("grid_search_beta: supports 1 to 3 models");
  }
  if (lambda < 0.0) throw InvalidInput("grid_search_beta: lambda must be non-negative");
  if (resolution <= 0.0 || resolution > 1.0) {
    throw InvalidInput("grid_search_beta: resolution outside (0, 1]");
  }
  const auto n_models = static_cast<Index>(probs.size());
  if (beta0.size() != n_models) {
    throw InvalidInput("grid_search_beta: beta0 length does not match model count");
  }
  const Index rows = probs[0].rows();
  const Index cols = probs[0].cols();
  for (const Matrix& p : probs) {
    if (p.rows() != rows || p.cols() != cols) {
      throw InvalidInput("grid_search_beta: probability matrices must share one shape");
    }
  }

  // Average mixture entropy evaluated through the shared ensemble-core
  // primitives, independent of the fused optimizer path.
  const auto objective_at = [&](const Vector& beta) {
    double ent = 0.0;
    Vector mixed(cols);
    for (Index r = 0; r < rows; ++r) {
      mixed.setZero();
      for (Index l = 0; l < n_models; ++l) {
        mixed += beta(l) * probs[static_cast<std::size_t>(l)].row(r).transpose();
      }
      ent += entropy(mixed);
    }
    return ent / static_cast<double>(rows) + lambda * (beta - beta0).squaredNorm();
  };

  const auto steps = static_cast<Index>(std::llround(1.0 / resolution));
  GridSearchResult best;
  best.objective = std::numeric_limits<double>::infinity();
  Vector beta(n_models);
  const auto consider = [&](const Vector& b) {
    const double obj = objective_at(b);
    if (obj < best.objective) {
      best.objective = obj;
      best.beta = b;
    }
  };
  if (n_models == 1) {
    beta(0) = 1.0;
    consider(beta);
  } else if (n_models == 2) {
    for (Index t = 0; t <= steps; ++t) {
      beta(0) = static_cast<double>(t) / static_cast<double>(steps);
      beta(1) = 1.0 - beta(0);
      consider(beta);
    }
  } else {
    for (Index t1 = 0; t1 <= steps; ++t1) {
      for (Index t2 = 0; t2 <= steps - t1; ++t2) {
        beta(0) = static_cast<double>(t1) / static_cast<double>(steps);
        beta(1) = static_cast<double>(t2) / static_cast<double>(steps);
        beta(2) = std::max(0.0, 1.0 - beta(0) - beta(1));
        consider(beta);
      }
    }
  }
  return best;
}

}  // namespace modelavg::oracle
