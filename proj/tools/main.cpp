// Command-line surface for the model-averaging pipelines. Every command
// reads and writes files only, prints one machine-readable JSON summary line
// on stdout, and keeps human-readable logs on stderr. Exit codes: 0 success,
// 2 usage error, 3 data or format error, 4 numerical failure.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "modelavg/ensemble.hpp"
#include "modelavg/io.hpp"
#include "modelavg/laplace.hpp"
#include "modelavg/metrics.hpp"
#include "modelavg/oma.hpp"
#include "modelavg/prob.hpp"
#include "modelavg/train.hpp"

namespace {

using namespace modelavg;

std::string json_array(const Vector& v) {
  std::string out = "[";
  for (Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += format_double(v(i));
  }
  out += "]";
  return out;
}

std::vector<Matrix> load_prob_matrices(const std::vector<std::string>& paths) {
  std::vector<Matrix> probs;
  probs.reserve(paths.size());
  for (const std::string& p : paths) {
    try {
      probs.push_back(as_prob_matrix(read_fmat(p)));
    } catch (const InvalidInput& e) {
      throw DataError(p + ": " + e.what());
    }
  }
  return probs;
}

struct TrainMapArgs {
  std::string features, labels, out;
  double alpha = 0.0;
  TrainConfig cfg;
};

struct EvidenceArgs {
  std::string features, labels, head, out;
  std::int64_t subsample = -1;  // -1: default min(N, 50000)
  std::uint64_t seed = 0;
  bool minibatch_loglik = false;
  int threads = 0;
};

struct PredictArgs {
  std::string mode, weights, out;
  std::vector<std::string> probs;
};

struct OmaFitArgs {
  std::vector<std::string> probs;
  std::string prior_weights, out;
  OmaConfig cfg;
};

struct EvalArgs {
  std::string pred, labels, metric, mode = "avg", weights;
  std::vector<std::string> probs;
  std::vector<std::string> ids;
};

struct HessianDumpArgs {
  std::string features, head, out;
  std::int64_t subsample = -1;
  std::uint64_t seed = 0;
  std::int64_t classes = 0, dims = 0;
};

Index resolve_subsample(std::int64_t requested, Index n) {
  constexpr Index kDefaultCap = 50000;
  if (requested < 0) return std::min(n, kDefaultCap);
  if (requested == 0) throw InvalidInput("--subsample must be at least 1");
  if (requested > n) {
    std::cerr << "warning: --subsample " << requested << " exceeds N = " << n
              << ", clamping\n";
    return n;
  }
  return static_cast<Index>(requested);
}

int run(int argc, char** argv) {
  CLI::App app{"Ensembling of frozen-feature classifiers: evidence-weighted "
               "and entropy-optimized model averaging"};
  app.require_subcommand(1);
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  app.add_option("--threads", threads, "Cap on worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  // train-map
  TrainMapArgs tm;
  auto* train_cmd = app.add_subcommand("train-map", "Train a linear head on frozen features");
  train_cmd->add_option("--features", tm.features, "Feature matrix (FMAT)")->required();
  train_cmd->add_option("--labels", tm.labels, "Labels (LBL1)")->required();
  train_cmd->add_option("--alpha", tm.alpha, "Prior variance")->required()->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tm.cfg.learning_rate, "Learning rate")
      ->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--epochs", tm.cfg.epochs, "Training epochs")
      ->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--batch", tm.cfg.batch_size, "Minibatch size")
      ->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--seed", tm.cfg.seed, "Shuffle seed")->capture_default_str();
  train_cmd->add_option("--grad-tol", tm.cfg.grad_tol, "Full-batch gradient tolerance")
      ->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--out", tm.out, "Output head path")->required();
  train_cmd->callback([&] {
    const Matrix feats = read_fmat(tm.features);
    const LabelVector labels = read_lbl(tm.labels);
    const LinearHead head = train_map(feats, labels, tm.alpha, tm.cfg);
    write_head(head, tm.out);
    std::cout << "{\"command\":\"train-map\",\"converged\":"
              << (head.converged ? "true" : "false")
              << ",\"grad_inf_norm\":" << format_double(head.grad_inf_norm)
              << ",\"objective\":" << format_double(head.objective)
              << ",\"n_train\":" << head.n_train << ",\"out\":\"" << tm.out << "\"}\n";
  });

  // evidence
  EvidenceArgs ev;
  auto* evidence_cmd = app.add_subcommand("evidence", "Laplace log evidence of a trained head");
  evidence_cmd->add_option("--features", ev.features, "Feature matrix (FMAT)")->required();
  evidence_cmd->add_option("--labels", ev.labels, "Labels (LBL1)")->required();
  evidence_cmd->add_option("--head", ev.head, "Trained head (FMAT + sidecar)")->required();
  evidence_cmd->add_option("--subsample", ev.subsample,
                           "Datapoints for the curvature blocks (default min(N, 50000))");
  evidence_cmd->add_option("--seed", ev.seed, "Subsample seed")->capture_default_str();
  evidence_cmd->add_flag("--minibatch-loglik", ev.minibatch_loglik,
                         "Estimate the likelihood term from the subsample, scaled by N/M");
  evidence_cmd->add_option("--out", ev.out, "Output evidence JSON")->required();
  evidence_cmd->callback([&] {
    const Matrix feats = read_fmat(ev.features);
    const LabelVector labels = read_lbl(ev.labels);
    const LinearHead head = read_head(ev.head);
    const Index m = resolve_subsample(ev.subsample, feats.rows());
    const HessianBlocks blocks = hessian_blocks(feats, head, m, ev.seed, threads);
    const Vector eigs = block_eigenvalues(blocks);
    EvidenceOptions opts;
    opts.minibatch_loglik = ev.minibatch_loglik;
    opts.subsample = m;
    opts.seed = ev.seed;
    const EvidenceRecord rec = log_evidence(feats, labels, head, eigs, opts);
    write_evidence_json(rec, ev.out);
    std::cout << "{\"command\":\"evidence\",\"log_lik_map\":" << format_double(rec.log_lik_map)
              << ",\"prior_quad\":" << format_double(rec.prior_quad)
              << ",\"log_det_term\":" << format_double(rec.log_det_term)
              << ",\"total\":" << format_double(rec.total())
              << ",\"n_train\":" << rec.n_train << ",\"out\":\"" << ev.out << "\"}\n";
  });

  // bma-weights
  std::vector<std::string> evidence_files;
  std::string bma_out;
  auto* bma_cmd = app.add_subcommand("bma-weights", "Posterior model weights from evidence records");
  bma_cmd->add_option("--evidence", evidence_files, "Evidence JSON files")->required()->expected(-1);
  bma_cmd->add_option("--out", bma_out, "Output weights JSON")->required();
  bma_cmd->callback([&] {
    std::vector<EvidenceRecord> records;
    for (const std::string& f : evidence_files) records.push_back(read_evidence_json(f));
    const Vector w = posterior_weights(records);
    write_weights_json(w, bma_out);
    std::cout << "{\"command\":\"bma-weights\",\"weights\":" << json_array(w)
              << ",\"out\":\"" << bma_out << "\"}\n";
  });

  // probs
  std::string probs_features, probs_head, probs_out;
  auto* probs_cmd = app.add_subcommand("probs", "Class probabilities of a head on features");
  probs_cmd->add_option("--features", probs_features, "Feature matrix (FMAT)")->required();
  probs_cmd->add_option("--head", probs_head, "Trained head")->required();
  probs_cmd->add_option("--out", probs_out, "Output probability FMAT")->required();
  probs_cmd->callback([&] {
    const Matrix feats = read_fmat(probs_features);
    const LinearHead head = read_head(probs_head);
    const Matrix p = predict_probs(head, feats);
    write_fmat(p, probs_out);
    std::cout << "{\"command\":\"probs\",\"rows\":" << p.rows() << ",\"cols\":" << p.cols()
              << ",\"out\":\"" << probs_out << "\"}\n";
  });

  // predict
  PredictArgs pd;
  auto* predict_cmd = app.add_subcommand("predict", "Mixed predictive distribution");
  predict_cmd->add_option("--mode", pd.mode, "bma, oma or avg")
      ->required()->check(CLI::IsMember({"bma", "oma", "avg"}));
  predict_cmd->add_option("--probs", pd.probs, "Member probability FMATs")->required()->expected(-1);
  auto* predict_weights_opt =
      predict_cmd->add_option("--weights", pd.weights, "Weights JSON (bma/oma)");
  predict_cmd->add_option("--out", pd.out, "Output probability FMAT")->required();
  predict_cmd->callback([&] {
    EnsembleSpec spec;
    spec.mode = ensemble_mode_from_string(pd.mode);
    if (spec.mode == EnsembleMode::kOutputAvg) {
      if (predict_weights_opt->count() > 0) {
        std::cerr << "warning: --weights is ignored for --mode avg\n";
      }
    } else {
      if (predict_weights_opt->count() == 0) {
        throw InvalidInput("predict: --weights is required for --mode bma/oma");
      }
      spec.weights = read_weights_json(pd.weights);
    }
    const std::vector<Matrix> probs = load_prob_matrices(pd.probs);
    const Matrix mixed = ensemble_predict(spec, probs);
    write_fmat(mixed, pd.out);
    std::cout << "{\"command\":\"predict\",\"mode\":\"" << to_string(spec.mode)
              << "\",\"rows\":" << mixed.rows() << ",\"out\":\"" << pd.out << "\"}\n";
  });

  // oma-fit
  OmaFitArgs of;
  auto* oma_cmd = app.add_subcommand("oma-fit", "Fit ensemble weights by entropy minimization");
  oma_cmd->add_option("--probs", of.probs, "Member probability FMATs")->required()->expected(-1);
  oma_cmd->add_option("--prior-weights", of.prior_weights, "Prior weights JSON (default uniform)");
  oma_cmd->add_option("--lambda", of.cfg.lambda, "Regularization toward the prior weights")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  oma_cmd->add_option("--lr", of.cfg.learning_rate, "Learning rate")
      ->check(CLI::PositiveNumber)->capture_default_str();
  oma_cmd->add_option("--epochs", of.cfg.epochs, "Descent epochs")
      ->check(CLI::PositiveNumber)->capture_default_str();
  oma_cmd->add_option("--seed", of.cfg.seed, "Seed recorded with the run")->capture_default_str();
  oma_cmd->add_option("--out", of.out, "Output weights JSON")->required();
  oma_cmd->callback([&] {
    const std::vector<Matrix> probs = load_prob_matrices(of.probs);
    if (!of.prior_weights.empty()) of.cfg.prior_weights = read_weights_json(of.prior_weights);
    const OmaFitResult fit = fit_oma(probs, of.cfg);
    write_weights_json(fit.beta, of.out);
    std::cout << "{\"command\":\"oma-fit\",\"beta\":" << json_array(fit.beta)
              << ",\"objective\":" << format_double(fit.objective_trace.back())
              << ",\"epochs_run\":" << fit.objective_trace.size() - 1
              << ",\"out\":\"" << of.out << "\"}\n";
  });

  // eval
  EvalArgs el;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against labels");
  eval_cmd->add_option("--pred", el.pred, "Prediction FMAT (single-matrix mode)");
  eval_cmd->add_option("--labels", el.labels, "Labels (LBL1)")->required();
  eval_cmd->add_option("--metric", el.metric, "accuracy, f1_binary, mcc or acc_f1_avg")->required();
  eval_cmd->add_option("--probs", el.probs, "Member probability FMATs (report mode)")->expected(-1);
  eval_cmd->add_option("--weights", el.weights, "Weights JSON (report mode, bma/oma)");
  eval_cmd->add_option("--mode", el.mode, "Ensemble mode for report mode")
      ->check(CLI::IsMember({"bma", "oma", "avg"}))->capture_default_str();
  eval_cmd->add_option("--ids", el.ids, "Member ids for report mode")->expected(-1);
  eval_cmd->callback([&] {
    const LabelVector labels = read_lbl(el.labels);
    const MetricKind kind = metric_kind_from_string(el.metric);
    const bool report_mode = !el.probs.empty();
    if (report_mode == !el.pred.empty()) {
      throw InvalidInput("eval: pass exactly one of --pred or --probs");
    }
    if (!report_mode) {
      const Matrix pred = as_prob_matrix(read_fmat(el.pred));
      const double value = metric(pred, labels, kind);
      std::cout << "{\"command\":\"eval\",\"metric\":\"" << to_string(kind)
                << "\",\"value\":" << format_double(value) << "}\n";
      return;
    }
    EnsembleSpec spec;
    spec.mode = ensemble_mode_from_string(el.mode);
    spec.member_ids = el.ids;
    if (spec.mode != EnsembleMode::kOutputAvg) {
      if (el.weights.empty()) throw InvalidInput("eval: --weights is required for --mode bma/oma");
      spec.weights = read_weights_json(el.weights);
    }
    const std::vector<Matrix> probs = load_prob_matrices(el.probs);
    const EvalReport report = evaluate(spec, probs, labels, kind);
    std::cout << to_json(report) << "\n";
  });

  // hessian-dump
  HessianDumpArgs hd;
  auto* dump_cmd = app.add_subcommand("hessian-dump",
                                      "Dense curvature table over a sampled class/dimension subset");
  dump_cmd->add_option("--features", hd.features, "Feature matrix (FMAT)")->required();
  dump_cmd->add_option("--head", hd.head, "Trained head")->required();
  dump_cmd->add_option("--classes", hd.classes, "Number of sampled classes")
      ->required()->check(CLI::PositiveNumber);
  dump_cmd->add_option("--dims", hd.dims, "Number of sampled feature dimensions")
      ->required()->check(CLI::PositiveNumber);
  dump_cmd->add_option("--subsample", hd.subsample,
                       "Datapoints for the curvature sums (default min(N, 50000))");
  dump_cmd->add_option("--seed", hd.seed, "Seed for datapoint and subset sampling")
      ->capture_default_str();
  dump_cmd->add_option("--out", hd.out, "Output CSV")->required();
  dump_cmd->callback([&] {
    const Matrix feats = read_fmat(hd.features);
    const LinearHead head = read_head(hd.head);
    const Index m = resolve_subsample(hd.subsample, feats.rows());
    const HessianDump dump = hessian_dump(feats, head, m, hd.seed, hd.classes, hd.dims, hd.seed);
    write_hessian_csv(dump, hd.out);
    std::cout << "{\"command\":\"hessian-dump\",\"side\":" << dump.table.rows()
              << ",\"diag_dominance\":" << format_double(diagonal_dominance_ratio(dump))
              << ",\"out\":\"" << hd.out << "\"}\n";
  });

  // zeroshot-prior
  std::vector<std::string> zs_probs;
  std::string zs_labels, zs_out;
  auto* zs_cmd = app.add_subcommand("zeroshot-prior",
                                    "Prior weights from training log likelihoods");
  zs_cmd->add_option("--probs", zs_probs, "Member probability FMATs over a labeled split")
      ->required()->expected(-1);
  zs_cmd->add_option("--labels", zs_labels, "Labels (LBL1)")->required();
  zs_cmd->add_option("--out", zs_out, "Output weights JSON")->required();
  zs_cmd->callback([&] {
    const std::vector<Matrix> probs = load_prob_matrices(zs_probs);
    const LabelVector labels = read_lbl(zs_labels);
    const Vector w = zeroshot_prior_weights(probs, labels);
    write_weights_json(w, zs_out);
    std::cout << "{\"command\":\"zeroshot-prior\",\"weights\":" << json_array(w)
              << ",\"out\":\"" << zs_out << "\"}\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
