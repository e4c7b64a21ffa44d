#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "modelavg/common.hpp"
#include "modelavg/train.hpp"

namespace modelavg {

/// Per-class curvature blocks of the negative data log likelihood at the
/// head's weights. Block k is sum_i p_k(x_i)(1 - p_k(x_i)) x_i x_i^T over a
/// uniform without-replacement subsample, scaled by n_total / subsample.
struct HessianBlocks {
  std::vector<Matrix> blocks;  // n_classes blocks of n_dims x n_dims
  Index subsample = 0;
  Index n_total = 0;
  std::uint64_t seed = 0;
};

/// One model's evidence decomposition: the data log likelihood at the MAP,
/// the prior quadratic penalty |W|^2 / (2 alpha), and the curvature penalty
/// 0.5 * sum_j log(lambda_j alpha + 1) over the block eigenvalues.
/// Total log evidence = log_lik_map - prior_quad - log_det_term.
struct EvidenceRecord {
  double log_lik_map = 0.0;
  double prior_quad = 0.0;
  double log_det_term = 0.0;
  Index n_train = 0;
  double alpha = 1.0;

  double total() const { return log_lik_map - prior_quad - log_det_term; }
};

struct EvidenceOptions {
  /// When set, estimates the likelihood term from the same subsample used
  /// for the Hessian, scaled by N/M. Default is the exact full-batch sum.
  bool minibatch_loglik = false;
  Index subsample = 0;
  std::uint64_t seed = 0;
};

/// Curvature blocks at the head's weights over a seeded subsample of
/// min(subsample, N) datapoints. subsample == N reproduces the full-data
/// blocks exactly; subsample == 0 is an error.
HessianBlocks hessian_blocks(const Matrix& feats, const LinearHead& head,
                             Index subsample, std::uint64_t seed, int threads = 1);

/// Concatenated per-block eigenvalues, clamped at zero and sorted descending
/// within each block.
Vector block_eigenvalues(const HessianBlocks& blocks);

/// Evidence record for one head given the eigenvalues of its curvature
/// blocks.
EvidenceRecord log_evidence(const Matrix& feats, const LabelVector& labels,
                            const LinearHead& head, const Vector& eigenvalues,
                            const EvidenceOptions& opts = {});

/// Posterior model weights: softmax over models of total log evidence
/// divided by the training set size, under a uniform model prior. The
/// per-datapoint scaling keeps scores comparable across dataset sizes.
Vector posterior_weights(const std::vector<EvidenceRecord>& records);

/// Dense curvature table over a sampled class/dimension subset, including
/// the off-class tiles sum_i p_k (delta_kk' - p_k') x_i x_i^T. Row/column
/// index (a * n_dims + b) addresses sampled class a, sampled dimension b.
struct HessianDump {
  Matrix table;
  std::vector<Index> classes;  // ascending sampled class indices
  std::vector<Index> dims;     // ascending sampled dimension indices
  Index subsample = 0;
  Index n_total = 0;
};

/// Builds the dump over the same seeded datapoint subsample as
/// hessian_blocks, so diagonal tiles match the blocks exactly.
HessianDump hessian_dump(const Matrix& feats, const LinearHead& head,
                         Index subsample, std::uint64_t data_seed, Index n_classes,
                         Index n_dims, std::uint64_t subset_seed);

/// Mean absolute entry within diagonal-class tiles divided by the mean
/// absolute entry elsewhere.
double diagonal_dominance_ratio(const HessianDump& dump);

/// CSV with header "i,j,value", row-major over the dump grid,
/// full-precision values.
void write_hessian_csv(const HessianDump& dump, const std::filesystem::path& path);

}  // namespace modelavg
