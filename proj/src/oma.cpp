#include "modelavg/oma.hpp"

#include <cmath>

#include "modelavg/prob.hpp"

namespace modelavg {

namespace {

double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// Inverse of softplus: log(exp(s) - 1). For large s the two agree.
double inv_softplus(double s) {
  return s > 40.0 ? s : std::log(std::expm1(s));
}

void check_probs(const std::vector<Matrix>& probs) {
  if (probs.empty()) throw InvalidInput("oma: need at least one model");
  const Index rows = probs[0].rows();
  const Index cols = probs[0].cols();
  if (rows < 1 || cols < 1) throw InvalidInput("oma: empty probability matrix");
  for (const Matrix& p : probs) {
    if (p.rows() != rows || p.cols() != cols) {
      throw InvalidInput("oma: probability matrices must share one shape");
    }
  }
}

Vector effective_prior(const OmaConfig& cfg, Index n_models) {
  if (cfg.prior_weights.size() == 0) {
    return Vector::Constant(n_models, 1.0 / static_cast<double>(n_models));
  }
  if (cfg.prior_weights.size() != n_models) {
    throw InvalidInput("oma: prior weights length does not match model count");
  }
  validate_weight_vector(cfg.prior_weights);
  return cfg.prior_weights;
}

}  // namespace

Vector beta_from_tau(const Vector& tau) {
  if (tau.size() == 0) throw InvalidInput("beta_from_tau: empty input");
  Vector s(tau.size());
  for (Index l = 0; l < tau.size(); ++l) {
    if (!std::isfinite(tau(l))) throw InvalidInput("beta_from_tau: non-finite tau");
    s(l) = softplus(tau(l));
  }
  const double total = s.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw NumericalFailure("beta_from_tau: softplus values underflowed to zero");
  }
  return s / total;
}

double oma_objective(const Vector& beta, const std::vector<Matrix>& probs,
                     const OmaConfig& cfg) {
  check_probs(probs);
  if (cfg.lambda < 0.0) throw InvalidInput("oma: lambda must be non-negative");
  validate_weight_vector(beta);
  if (beta.size() != static_cast<Index>(probs.size())) {
    throw InvalidInput("oma: beta length does not match model count");
  }
  const Vector beta0 = effective_prior(cfg, beta.size());
  const Matrix mixed = mix(probs, beta);
  const double m = static_cast<double>(mixed.rows());
  double ent = 0.0;
  for (Index r = 0; r < mixed.rows(); ++r) {
    for (Index c = 0; c < mixed.cols(); ++c) {
      const double p = mixed(r, c);
      if (p > 0.0) ent -= p * std::log(std::max(p, kProbFloor));
    }
  }
  return ent / m + cfg.lambda * (beta - beta0).squaredNorm();
}

Vector oma_gradient(const Vector& tau, const std::vector<Matrix>& probs,
                    const OmaConfig& cfg) {
  check_probs(probs);
  if (cfg.lambda < 0.0) throw InvalidInput("oma: lambda must be non-negative");
  const Index n_models = static_cast<Index>(probs.size());
  if (tau.size() != n_models) {
    throw InvalidInput("oma: tau length does not match model count");
  }
  const Vector beta0 = effective_prior(cfg, n_models);

  Vector s(n_models), sig(n_models);
  for (Index l = 0; l < n_models; ++l) {
    if (!std::isfinite(tau(l))) throw InvalidInput("oma_gradient: non-finite tau");
    s(l) = softplus(tau(l));
    sig(l) = sigmoid(tau(l));
  }
  const double total = s.sum();
  if (!(total > 0.0)) throw NumericalFailure("oma_gradient: softplus underflow");
  const Vector beta = s / total;

  const Matrix mixed = mix(probs, beta);
  const double m = static_cast<double>(mixed.rows());

  // d/dP of -P log P with the floor: -(1[P >= floor] + log max(P, floor)).
  Matrix dent(mixed.rows(), mixed.cols());
  for (Index r = 0; r < mixed.rows(); ++r) {
    for (Index c = 0; c < mixed.cols(); ++c) {
      const double p = mixed(r, c);
      dent(r, c) = -((p >= kProbFloor ? 1.0 : 0.0) + std::log(std::max(p, kProbFloor)));
    }
  }
  Vector grad_beta(n_models);
  for (Index l = 0; l < n_models; ++l) {
    grad_beta(l) = probs[static_cast<std::size_t>(l)].cwiseProduct(dent).sum() / m +
                   2.0 * cfg.lambda * (beta(l) - beta0(l));
  }
  const double pull = grad_beta.dot(beta);
  Vector grad_tau(n_models);
  for (Index l = 0; l < n_models; ++l) {
    grad_tau(l) = sig(l) / total * (grad_beta(l) - pull);
  }
  return grad_tau;
}

OmaFitResult fit_oma(const std::vector<Matrix>& probs, const OmaConfig& cfg) {
  check_probs(probs);
  if (cfg.learning_rate <= 0.0) throw InvalidInput("fit_oma: learning rate must be positive");
  if (cfg.epochs < 1) throw InvalidInput("fit_oma: epochs must be positive");
  const Index n_models = static_cast<Index>(probs.size());
  const Vector beta0 = effective_prior(cfg, n_models);

  // Scale so sum softplus(tau) = 1, making beta_from_tau(tau0) == beta0.
  Vector tau(n_models);
  for (Index l = 0; l < n_models; ++l) {
    tau(l) = inv_softplus(std::max(beta0(l), 1e-6));
  }

  OmaConfig inner = cfg;
  inner.prior_weights = beta0;

  std::vector<double> trace;
  double f = oma_objective(beta_from_tau(tau), probs, inner);
  trace.push_back(f);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Vector g = oma_gradient(tau, probs, inner);
    const double g2 = g.squaredNorm();
    if (g2 == 0.0) break;  // exactly stationary
    double t = cfg.learning_rate;
    bool accepted = false;
    Vector tau_trial;
    double f_trial = 0.0;
    while (t >= 1e-20) {
      tau_trial = tau - t * g;
      f_trial = oma_objective(beta_from_tau(tau_trial), probs, inner);
      if (std::isfinite(f_trial) && f_trial <= f - 1e-4 * t * g2) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;  // no descent step left at this scale
    tau.swap(tau_trial);
    f = f_trial;
    if (!std::isfinite(f)) throw NumericalFailure("fit_oma: non-finite objective");
    trace.push_back(f);
  }

  OmaFitResult result;
  result.beta = beta_from_tau(tau);
  result.tau = std::move(tau);
  result.objective_trace = std::move(trace);
  return result;
}

Vector zeroshot_prior_weights(const std::vector<Matrix>& probs_train,
                              const LabelVector& labels) {
  check_probs(probs_train);
  validate_labels(labels);
  const Index n = probs_train[0].rows();
  if (labels.size() != n) {
    throw InvalidInput("zeroshot_prior_weights: labels and probabilities disagree on count");
  }
  if (probs_train[0].cols() != labels.n_classes) {
    throw InvalidInput("zeroshot_prior_weights: class count mismatch");
  }
  Vector scores(static_cast<Index>(probs_train.size()));
  for (std::size_t l = 0; l < probs_train.size(); ++l) {
    double ll = 0.0;
    for (Index i = 0; i < n; ++i) {
      ll += std::log(std::max(probs_train[l](i, labels.y(i)), kProbFloor));
    }
    scores(static_cast<Index>(l)) = ll / static_cast<double>(n);
  }
  return softmax(scores);
}

}  // namespace modelavg
