#include "modelavg/laplace.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>

#include "modelavg/prob.hpp"
#include "modelavg/rng.hpp"

namespace modelavg {

namespace {

std::vector<Index> hessian_sample(Index n, Index m, std::uint64_t seed) {
  if (m == n) {
    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    return all;
  }
  return Rng(seed).sample_without_replacement(n, m);
}

// Shared accumulation so dump tiles reproduce block entries bit for bit.
inline void rank_one_accumulate(Matrix& h, double coeff, const Vector& x) {
  h.noalias() += (coeff * x) * x.transpose();
}

Matrix gather_rows(const Matrix& feats, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), feats.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Index>(i)) = feats.row(rows[i]);
  }
  return out;
}

}  // namespace

HessianBlocks hessian_blocks(const Matrix& feats, const LinearHead& head,
                             Index subsample, std::uint64_t seed, int threads) {
  if (head.weights.cols() != feats.cols()) {
    throw InvalidInput("hessian_blocks: head and features disagree on feature dimension");
  }
  if (subsample < 1) throw InvalidInput("hessian_blocks: subsample must be at least 1");
  const Index n = feats.rows();
  const Index d = feats.cols();
  const Index c = head.weights.rows();
  const Index m = std::min(subsample, n);

  const std::vector<Index> rows = hessian_sample(n, m, seed);
  const Matrix xs = gather_rows(feats, rows);
  const Matrix p = softmax_rows(xs * head.weights.transpose());
  const double scale = static_cast<double>(n) / static_cast<double>(m);

  HessianBlocks out;
  out.blocks.assign(static_cast<std::size_t>(c), Matrix::Zero(d, d));
  out.subsample = m;
  out.n_total = n;
  out.seed = seed;

  const auto fill_class = [&](Index k) {
    Matrix& h = out.blocks[static_cast<std::size_t>(k)];
    Vector x(d);
    for (Index i = 0; i < m; ++i) {
      x = xs.row(i).transpose();
      const double pk = p(i, k);
      rank_one_accumulate(h, pk * (1.0 - pk), x);
    }
    h *= scale;
  };

  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(c)));
  if (workers == 1) {
    for (Index k = 0; k < c; ++k) fill_class(k);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (Index k = w; k < c; k += workers) fill_class(k);
      });
    }
    for (std::thread& t : pool) t.join();
  }
  return out;
}

Vector block_eigenvalues(const HessianBlocks& blocks) {
  if (blocks.blocks.empty()) throw InvalidInput("block_eigenvalues: no blocks");
  const Index d = blocks.blocks.front().rows();
  Vector out(static_cast<Index>(blocks.blocks.size()) * d);
  Eigen::SelfAdjointEigenSolver<Matrix> solver;
  for (std::size_t k = 0; k < blocks.blocks.size(); ++k) {
    solver.compute(blocks.blocks[k], Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
      throw NumericalFailure("block_eigenvalues: eigensolver did not converge");
    }
    const Vector ev = solver.eigenvalues();  // ascending
    for (Index j = 0; j < d; ++j) {
      out(static_cast<Index>(k) * d + j) = std::max(ev(d - 1 - j), 0.0);
    }
  }
  return out;
}

EvidenceRecord log_evidence(const Matrix& feats, const LabelVector& labels,
                            const LinearHead& head, const Vector& eigenvalues,
                            const EvidenceOptions& opts) {
  if (head.alpha <= 0.0) throw InvalidInput("log_evidence: alpha must be positive");
  validate_labels(labels);
  if (labels.size() != feats.rows()) {
    throw InvalidInput("log_evidence: features and labels disagree on datapoint count");
  }

  EvidenceRecord rec;
  rec.n_train = feats.rows();
  rec.alpha = head.alpha;
  if (opts.minibatch_loglik) {
    if (opts.subsample < 1) {
      throw InvalidInput("log_evidence: minibatch likelihood needs a positive subsample");
    }
    const Index m = std::min(opts.subsample, feats.rows());
    const std::vector<Index> rows = hessian_sample(feats.rows(), m, opts.seed);
    const Matrix xs = gather_rows(feats, rows);
    LabelVector sub;
    sub.n_classes = labels.n_classes;
    sub.y.resize(m);
    for (Index i = 0; i < m; ++i) sub.y(i) = labels.y(rows[static_cast<std::size_t>(i)]);
    rec.log_lik_map = data_log_likelihood(head, xs, sub) *
                      (static_cast<double>(feats.rows()) / static_cast<double>(m));
  } else {
    rec.log_lik_map = data_log_likelihood(head, feats, labels);
  }
  rec.prior_quad = head.weights.squaredNorm() / (2.0 * head.alpha);
  double log_det = 0.0;
  for (Index j = 0; j < eigenvalues.size(); ++j) {
    log_det += std::log1p(std::max(eigenvalues(j), 0.0) * head.alpha);
  }
  rec.log_det_term = 0.5 * log_det;
  return rec;
}

Vector posterior_weights(const std::vector<EvidenceRecord>& records) {
  if (records.empty()) throw InvalidInput("posterior_weights: no evidence records");
  Vector scores(static_cast<Index>(records.size()));
  for (std::size_t l = 0; l < records.size(); ++l) {
    if (records[l].n_train <= 0) {
      throw InvalidInput("posterior_weights: n_train must be positive");
    }
    scores(static_cast<Index>(l)) =
        records[l].total() / static_cast<double>(records[l].n_train);
  }
  return softmax(scores);
}

HessianDump hessian_dump(const Matrix& feats, const LinearHead& head,
                         Index subsample, std::uint64_t data_seed, Index n_classes,
                         Index n_dims, std::uint64_t subset_seed) {
  const Index c = head.weights.rows();
  const Index d = head.weights.cols();
  if (head.weights.cols() != feats.cols()) {
    throw InvalidInput("hessian_dump: head and features disagree on feature dimension");
  }
  if (n_classes < 1 || n_classes > c) {
    throw InvalidInput("hessian_dump: class subset outside [1, n_classes]");
  }
  if (n_dims < 1 || n_dims > d) {
    throw InvalidInput("hessian_dump: dimension subset outside [1, n_dims]");
  }
  if (subsample < 1) throw InvalidInput("hessian_dump: subsample must be at least 1");

  const Index n = feats.rows();
  const Index m = std::min(subsample, n);

  Rng subset_rng(subset_seed);
  HessianDump dump;
  dump.classes = subset_rng.sample_without_replacement(c, n_classes);
  dump.dims = subset_rng.sample_without_replacement(d, n_dims);
  dump.subsample = m;
  dump.n_total = n;

  const std::vector<Index> rows = hessian_sample(n, m, data_seed);
  const Matrix xs = gather_rows(feats, rows);
  const Matrix p = softmax_rows(xs * head.weights.transpose());

  const Index side = n_classes * n_dims;
  dump.table = Matrix::Zero(side, side);
  Vector xsub(n_dims);
  std::vector<Matrix> tiles(static_cast<std::size_t>(n_classes * n_classes),
                            Matrix::Zero(n_dims, n_dims));
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n_dims; ++j) xsub(j) = xs(i, dump.dims[static_cast<std::size_t>(j)]);
    for (Index a = 0; a < n_classes; ++a) {
      const double pa = p(i, dump.classes[static_cast<std::size_t>(a)]);
      for (Index b = 0; b < n_classes; ++b) {
        const double pb = p(i, dump.classes[static_cast<std::size_t>(b)]);
        const double coeff = pa * ((a == b ? 1.0 : 0.0) - pb);
        rank_one_accumulate(tiles[static_cast<std::size_t>(a * n_classes + b)], coeff, xsub);
      }
    }
  }
  const double scale = static_cast<double>(n) / static_cast<double>(m);
  for (Index a = 0; a < n_classes; ++a) {
    for (Index b = 0; b < n_classes; ++b) {
      Matrix& tile = tiles[static_cast<std::size_t>(a * n_classes + b)];
      tile *= scale;
      dump.table.block(a * n_dims, b * n_dims, n_dims, n_dims) = tile;
    }
  }
  return dump;
}

double diagonal_dominance_ratio(const HessianDump& dump) {
  const Index n_classes = static_cast<Index>(dump.classes.size());
  const Index n_dims = static_cast<Index>(dump.dims.size());
  if (n_classes < 2) {
    throw InvalidInput("diagonal_dominance_ratio: needs at least 2 sampled classes");
  }
  double diag_sum = 0.0, off_sum = 0.0;
  Index diag_n = 0, off_n = 0;
  for (Index a = 0; a < n_classes; ++a) {
    for (Index b = 0; b < n_classes; ++b) {
      const double s =
          dump.table.block(a * n_dims, b * n_dims, n_dims, n_dims).cwiseAbs().sum();
      if (a == b) {
        diag_sum += s;
        diag_n += n_dims * n_dims;
      } else {
        off_sum += s;
        off_n += n_dims * n_dims;
      }
    }
  }
  const double off_mean = off_sum / static_cast<double>(off_n);
  const double diag_mean = diag_sum / static_cast<double>(diag_n);
  if (off_mean == 0.0) return std::numeric_limits<double>::infinity();
  return diag_mean / off_mean;
}

void write_hessian_csv(const HessianDump& dump, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("write_hessian_csv: cannot open " + path.string());
  out << "i,j,value\n";
  char buf[64];
  for (Index i = 0; i < dump.table.rows(); ++i) {
    for (Index j = 0; j < dump.table.cols(); ++j) {
      const auto res = std::to_chars(buf, buf + sizeof(buf), dump.table(i, j),
                                     std::chars_format::general, 17);
      out << i << ',' << j << ',';
      out.write(buf, res.ptr - buf);
      out << '\n';
    }
  }
  if (!out) throw FormatError("write_hessian_csv: write failed for " + path.string());
}

}  // namespace modelavg
