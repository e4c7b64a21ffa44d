#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "modelavg/common.hpp"
#include "modelavg/laplace.hpp"
#include "modelavg/train.hpp"

// Bit-exact binary and JSON formats. Binary layouts are little-endian
// regardless of platform:
//
//   FMAT: "FMAT" | u32 version=1 | u64 rows | u64 cols |
//         rows*cols IEEE-754 binary32, row-major
//   LBL1: "LBL1" | u32 version=1 | u64 count | u64 num_classes |
//         count i32 class indices
//
// Loading rejects rather than repairs: non-finite floats and out-of-range
// labels are errors. JSON numbers are written with 17 significant digits so
// parsing returns the identical double.

namespace modelavg {

/// A double rendered with 17 significant digits (locale-independent).
std::string format_double(double v);

Matrix read_fmat(const std::filesystem::path& path);
void write_fmat(const Matrix& m, const std::filesystem::path& path);

LabelVector read_lbl(const std::filesystem::path& path);
void write_lbl(const LabelVector& labels, const std::filesystem::path& path);

Vector read_weights_json(const std::filesystem::path& path);
void write_weights_json(const Vector& weights, const std::filesystem::path& path);

EvidenceRecord read_evidence_json(const std::filesystem::path& path);
void write_evidence_json(const EvidenceRecord& record,
                         const std::filesystem::path& path);

/// Head weights as an FMAT next to a "<path>.json" sidecar carrying
/// {alpha, n_train, converged}.
LinearHead read_head(const std::filesystem::path& path);
void write_head(const LinearHead& head, const std::filesystem::path& path);

/// One candidate model in a manifest. map_head entries carry feature and
/// head files; zeroshot_probs entries carry only per-split probability
/// files.
struct ManifestModel {
  std::string id;
  std::string kind;  // "map_head" or "zeroshot_probs"
  std::optional<std::string> feature_file;
  std::optional<std::string> head_file;
  std::map<std::string, std::string> probs_files;  // split name -> path
  std::optional<double> alpha;
};

struct Manifest {
  std::vector<ManifestModel> models;
  std::map<std::string, std::string> splits;  // split name -> label file
};

/// Parses and validates a manifest: unique ids, known kinds, and every
/// referenced file present relative to the manifest's directory.
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace modelavg
