#include "modelavg/train.hpp"

#include <algorithm>
#include <cmath>

#include "modelavg/prob.hpp"
#include "modelavg/rng.hpp"

namespace modelavg {

namespace {

void check_shapes(const Matrix& weights, double alpha, const Matrix& feats,
                  const LabelVector& labels) {
  validate_labels(labels);
  if (weights.cols() != feats.cols()) {
    throw InvalidInput("head and features disagree on feature dimension");
  }
  if (weights.rows() != labels.n_classes) {
    throw InvalidInput("head and labels disagree on class count");
  }
  if (labels.size() != feats.rows()) {
    throw InvalidInput("features and labels disagree on datapoint count");
  }
  if (alpha <= 0.0) throw InvalidInput("alpha must be positive");
}

// Row-wise log-sum-exp of the logit matrix Z = X W^T.
Vector row_lse(const Matrix& z) {
  const Vector m = z.rowwise().maxCoeff();
  Matrix shifted = z;
  shifted.colwise() -= m;
  return m + shifted.array().exp().rowwise().sum().log().matrix();
}

double data_nll(const Matrix& weights, const Matrix& feats, const IntVector& y) {
  const Matrix z = feats * weights.transpose();
  const Vector lse = row_lse(z);
  double nll = lse.sum();
  for (Index n = 0; n < feats.rows(); ++n) nll -= z(n, y(n));
  return nll;
}

double penalized_nll(const Matrix& weights, double alpha, const Matrix& feats,
                     const IntVector& y) {
  return data_nll(weights, feats, y) + weights.squaredNorm() / (2.0 * alpha);
}

// Gradient of the penalized negative log posterior, summed over the data.
Matrix penalized_grad(const Matrix& weights, double alpha, const Matrix& feats,
                      const IntVector& y) {
  Matrix p = softmax_rows(feats * weights.transpose());
  for (Index n = 0; n < feats.rows(); ++n) p(n, y(n)) -= 1.0;
  Matrix g = p.transpose() * feats;
  g += weights / alpha;
  return g;
}

}  // namespace

double neg_log_posterior(const LinearHead& head, const Matrix& feats,
                         const LabelVector& labels) {
  check_shapes(head.weights, head.alpha, feats, labels);
  return penalized_nll(head.weights, head.alpha, feats, labels.y);
}

Matrix neg_log_posterior_gradient(const LinearHead& head, const Matrix& feats,
                                  const LabelVector& labels) {
  check_shapes(head.weights, head.alpha, feats, labels);
  return penalized_grad(head.weights, head.alpha, feats, labels.y);
}

double data_log_likelihood(const LinearHead& head, const Matrix& feats,
                           const LabelVector& labels) {
  check_shapes(head.weights, head.alpha, feats, labels);
  return -data_nll(head.weights, feats, labels.y);
}

LinearHead train_map(const Matrix& feats, const LabelVector& labels, double alpha,
                     const TrainConfig& cfg) {
  validate_labels(labels);
  if (labels.n_classes < 2) throw InvalidInput("train_map: need at least 2 classes");
  if (labels.size() != feats.rows()) {
    throw InvalidInput("train_map: features and labels disagree on datapoint count");
  }
  if (feats.rows() < 1 || feats.cols() < 1) {
    throw InvalidInput("train_map: features must be non-empty");
  }
  if (alpha <= 0.0) throw InvalidInput("train_map: alpha must be positive");
  if (cfg.learning_rate <= 0.0) throw InvalidInput("train_map: learning rate must be positive");
  if (cfg.epochs < 1) throw InvalidInput("train_map: epochs must be positive");
  if (cfg.batch_size < 1) throw InvalidInput("train_map: batch size must be positive");
  if (cfg.grad_tol <= 0.0) throw InvalidInput("train_map: grad_tol must be positive");

  const Index n = feats.rows();
  const Index d = feats.cols();
  const Index c = labels.n_classes;
  const Index batch = std::min(cfg.batch_size, n);

  Matrix w = Matrix::Zero(c, d);
  Rng rng(cfg.seed);

  std::vector<double> trace;
  trace.push_back(penalized_nll(w, alpha, feats, labels.y));

  Matrix xb(batch, d);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<Index> perm = rng.permutation(n);
    for (Index start = 0; start < n; start += batch) {
      const Index size = std::min(batch, n - start);
      IntVector yb(size);
      for (Index i = 0; i < size; ++i) {
        const Index src = perm[static_cast<std::size_t>(start + i)];
        xb.row(i) = feats.row(src);
        yb(i) = labels.y(src);
      }
      auto xview = xb.topRows(size);
      Matrix p = softmax_rows(xview * w.transpose());
      for (Index i = 0; i < size; ++i) p(i, yb(i)) -= 1.0;
      Matrix g = p.transpose() * xview / static_cast<double>(size);
      g += w / (alpha * static_cast<double>(n));
      w -= cfg.learning_rate * g;
    }
    const double obj = penalized_nll(w, alpha, feats, labels.y);
    if (!std::isfinite(obj) || !w.allFinite()) {
      throw NumericalFailure("train_map: non-finite objective during training");
    }
    trace.push_back(obj);
  }

  // Full-batch polish: backtracking line search with an adaptive trial step,
  // run until the summed gradient meets grad_tol or the step cap is hit.
  double f = penalized_nll(w, alpha, feats, labels.y);
  Matrix g = penalized_grad(w, alpha, feats, labels.y);
  double step = cfg.learning_rate / static_cast<double>(n);
  for (int it = 0; it < cfg.polish_step_cap; ++it) {
    if (g.cwiseAbs().maxCoeff() <= cfg.grad_tol) break;
    const double g2 = g.squaredNorm();
    double t = 2.0 * step;
    bool accepted = false;
    Matrix wtrial;
    double ftrial = 0.0;
    while (t >= 1e-20) {
      wtrial = w - t * g;
      ftrial = penalized_nll(wtrial, alpha, feats, labels.y);
      if (std::isfinite(ftrial) && ftrial <= f - 1e-4 * t * g2) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    w.swap(wtrial);
    f = ftrial;
    step = t;
    g = penalized_grad(w, alpha, feats, labels.y);
  }
  if (!std::isfinite(f) || !w.allFinite()) {
    throw NumericalFailure("train_map: non-finite values after polish");
  }
  trace.push_back(f);

  LinearHead head;
  head.weights = std::move(w);
  head.alpha = alpha;
  head.n_train = n;
  head.grad_inf_norm = g.cwiseAbs().maxCoeff();
  head.converged = head.grad_inf_norm <= cfg.grad_tol;
  head.objective = f;
  head.epoch_objectives = std::move(trace);
  return head;
}

Matrix predict_probs(const LinearHead& head, const Matrix& feats) {
  if (head.weights.cols() != feats.cols()) {
    throw InvalidInput("predict_probs: head and features disagree on feature dimension");
  }
  if (feats.rows() < 1) throw InvalidInput("predict_probs: empty feature matrix");
  return softmax_rows(feats * head.weights.transpose());
}

}  // namespace modelavg
