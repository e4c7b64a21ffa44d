#include "modelavg/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace modelavg {

namespace {

using nlohmann::json;

void append_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  return out;
}

void expect_eof(std::ifstream& in, const std::filesystem::path& path) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path.string() + ": trailing bytes after payload");
  }
}

json parse_json_file(const std::filesystem::path& path) {
  std::ifstream in = open_for_read(path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw FormatError(path.string() + ": not valid JSON");
  return doc;
}

const json& require_field(const json& doc, const std::string& key,
                          const std::string& pointer,
                          const std::filesystem::path& path) {
  if (!doc.is_object() || !doc.contains(key)) {
    throw FormatError(path.string() + ": " + pointer + "/" + key + ": missing field");
  }
  return doc.at(key);
}

double require_number(const json& doc, const std::string& key,
                      const std::string& pointer, const std::filesystem::path& path) {
  const json& v = require_field(doc, key, pointer, path);
  if (!v.is_number()) {
    throw FormatError(path.string() + ": " + pointer + "/" + key + ": expected a number");
  }
  return v.get<double>();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out = open_for_write(path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

std::string weights_to_json_text(const Vector& weights) {
  std::string out = "{\"weights\":[";
  for (Index i = 0; i < weights.size(); ++i) {
    if (i > 0) out += ',';
    out += format_double(weights(i));
  }
  out += "]}\n";
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

Matrix read_fmat(const std::filesystem::path& path) {
  std::ifstream in = open_for_read(path);
  unsigned char header[24];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (in.gcount() != sizeof(header)) {
    throw FormatError(path.string() + ": truncated header");
  }
  if (std::memcmp(header, "FMAT", 4) != 0) {
    throw FormatError(path.string() + ": bad magic, expected FMAT");
  }
  const std::uint32_t version = get_u32le(header + 4);
  if (version != 1) {
    throw FormatError(path.string() + ": unsupported FMAT version " + std::to_string(version));
  }
  const std::uint64_t rows = get_u64le(header + 8);
  const std::uint64_t cols = get_u64le(header + 16);
  constexpr std::uint64_t kMaxElems = std::uint64_t{1} << 40;
  if (rows == 0 || cols == 0 || rows > kMaxElems || cols > kMaxElems / rows) {
    throw FormatError(path.string() + ": implausible dimensions");
  }
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  std::vector<unsigned char> buf(static_cast<std::size_t>(cols) * 4);
  for (std::uint64_t r = 0; r < rows; ++r) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
      throw FormatError(path.string() + ": truncated payload");
    }
    for (std::uint64_t c = 0; c < cols; ++c) {
      const float v = std::bit_cast<float>(get_u32le(buf.data() + c * 4));
      if (!std::isfinite(v)) {
        throw DataError(path.string() + ": non-finite value at (" + std::to_string(r) +
                        ", " + std::to_string(c) + ")");
      }
      m(static_cast<Index>(r), static_cast<Index>(c)) = static_cast<double>(v);
    }
  }
  expect_eof(in, path);
  return m;
}

void write_fmat(const Matrix& m, const std::filesystem::path& path) {
  if (m.rows() < 1 || m.cols() < 1) throw InvalidInput("write_fmat: empty matrix");
  std::string out;
  out.reserve(24 + static_cast<std::size_t>(m.size()) * 4);
  out += "FMAT";
  append_u32le(out, 1);
  append_u64le(out, static_cast<std::uint64_t>(m.rows()));
  append_u64le(out, static_cast<std::uint64_t>(m.cols()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      const float v = static_cast<float>(m(r, c));
      if (!std::isfinite(v)) {
        throw DataError("write_fmat: value at (" + std::to_string(r) + ", " +
                        std::to_string(c) + ") is not finite in float32");
      }
      append_u32le(out, std::bit_cast<std::uint32_t>(v));
    }
  }
  write_text(path, out);
}

LabelVector read_lbl(const std::filesystem::path& path) {
  std::ifstream in = open_for_read(path);
  unsigned char header[24];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (in.gcount() != sizeof(header)) {
    throw FormatError(path.string() + ": truncated header");
  }
  if (std::memcmp(header, "LBL1", 4) != 0) {
    throw FormatError(path.string() + ": bad magic, expected LBL1");
  }
  const std::uint32_t version = get_u32le(header + 4);
  if (version != 1) {
    throw FormatError(path.string() + ": unsupported LBL1 version " + std::to_string(version));
  }
  const std::uint64_t count = get_u64le(header + 8);
  const std::uint64_t num_classes = get_u64le(header + 16);
  if (count == 0 || count > (std::uint64_t{1} << 40)) {
    throw FormatError(path.string() + ": implausible label count");
  }
  if (num_classes == 0 || num_classes > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
    throw FormatError(path.string() + ": implausible class count");
  }
  LabelVector labels;
  labels.n_classes = static_cast<Index>(num_classes);
  labels.y.resize(static_cast<Index>(count));
  std::vector<unsigned char> buf(static_cast<std::size_t>(count) * 4);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw FormatError(path.string() + ": truncated payload");
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto v = static_cast<std::int32_t>(get_u32le(buf.data() + i * 4));
    if (v < 0 || static_cast<std::uint64_t>(v) >= num_classes) {
      throw DataError(path.string() + ": label " + std::to_string(v) + " at position " +
                      std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    labels.y(static_cast<Index>(i)) = v;
  }
  expect_eof(in, path);
  return labels;
}

void write_lbl(const LabelVector& labels, const std::filesystem::path& path) {
  validate_labels(labels);
  if (labels.size() < 1) throw InvalidInput("write_lbl: empty label vector");
  std::string out;
  out.reserve(24 + static_cast<std::size_t>(labels.size()) * 4);
  out += "LBL1";
  append_u32le(out, 1);
  append_u64le(out, static_cast<std::uint64_t>(labels.size()));
  append_u64le(out, static_cast<std::uint64_t>(labels.n_classes));
  for (Index i = 0; i < labels.size(); ++i) {
    append_u32le(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(labels.y(i))));
  }
  write_text(path, out);
}

Vector read_weights_json(const std::filesystem::path& path) {
  const json doc = parse_json_file(path);
  const json& arr = require_field(doc, "weights", "", path);
  if (!arr.is_array() || arr.empty()) {
    throw FormatError(path.string() + ": /weights: expected a non-empty array");
  }
  Vector w(static_cast<Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) {
      throw FormatError(path.string() + ": /weights/" + std::to_string(i) +
                        ": expected a number");
    }
    w(static_cast<Index>(i)) = arr[i].get<double>();
  }
  double sum = 0.0;
  for (Index i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w(i)) || w(i) < 0.0) {
      throw DataError(path.string() + ": /weights/" + std::to_string(i) +
                      ": negative or non-finite weight");
    }
    sum += w(i);
  }
  if (std::abs(sum - 1.0) > kWeightSumTol) {
    throw DataError(path.string() + ": /weights: entries sum to " + format_double(sum));
  }
  return w;
}

void write_weights_json(const Vector& weights, const std::filesystem::path& path) {
  if (weights.size() == 0) throw InvalidInput("write_weights_json: empty vector");
  write_text(path, weights_to_json_text(weights));
}

EvidenceRecord read_evidence_json(const std::filesystem::path& path) {
  const json doc = parse_json_file(path);
  EvidenceRecord rec;
  rec.log_lik_map = require_number(doc, "log_lik_map", "", path);
  rec.prior_quad = require_number(doc, "prior_quad", "", path);
  rec.log_det_term = require_number(doc, "log_det_term", "", path);
  const double n = require_number(doc, "n_train", "", path);
  if (n < 1 || n != std::floor(n)) {
    throw FormatError(path.string() + ": /n_train: expected a positive integer");
  }
  rec.n_train = static_cast<Index>(n);
  rec.alpha = require_number(doc, "alpha", "", path);
  if (!(rec.alpha > 0.0)) {
    throw DataError(path.string() + ": /alpha: must be positive");
  }
  return rec;
}

void write_evidence_json(const EvidenceRecord& record,
                         const std::filesystem::path& path) {
  std::string out = "{";
  out += "\"log_lik_map\":" + format_double(record.log_lik_map);
  out += ",\"prior_quad\":" + format_double(record.prior_quad);
  out += ",\"log_det_term\":" + format_double(record.log_det_term);
  out += ",\"n_train\":" + std::to_string(record.n_train);
  out += ",\"alpha\":" + format_double(record.alpha);
  out += "}\n";
  write_text(path, out);
}

LinearHead read_head(const std::filesystem::path& path) {
  LinearHead head;
  head.weights = read_fmat(path);
  const std::filesystem::path sidecar = path.string() + ".json";
  const json doc = parse_json_file(sidecar);
  head.alpha = require_number(doc, "alpha", "", sidecar);
  if (!(head.alpha > 0.0)) throw DataError(sidecar.string() + ": /alpha: must be positive");
  const double n = require_number(doc, "n_train", "", sidecar);
  if (n < 0 || n != std::floor(n)) {
    throw FormatError(sidecar.string() + ": /n_train: expected a non-negative integer");
  }
  head.n_train = static_cast<Index>(n);
  const json& conv = require_field(doc, "converged", "", sidecar);
  if (!conv.is_boolean()) {
    throw FormatError(sidecar.string() + ": /converged: expected a boolean");
  }
  head.converged = conv.get<bool>();
  return head;
}

void write_head(const LinearHead& head, const std::filesystem::path& path) {
  write_fmat(head.weights, path);
  std::string out = "{";
  out += "\"alpha\":" + format_double(head.alpha);
  out += ",\"n_train\":" + std::to_string(head.n_train);
  out += ",\"converged\":" + std::string(head.converged ? "true" : "false");
  out += "}\n";
  write_text(path.string() + ".json", out);
}

Manifest read_manifest(const std::filesystem::path& path) {
  const json doc = parse_json_file(path);
  const std::filesystem::path base = path.has_parent_path()
                                         ? path.parent_path()
                                         : std::filesystem::path(".");
  const auto check_exists = [&](const std::string& rel, const std::string& pointer) {
    if (!std::filesystem::exists(base / rel)) {
      throw FormatError(path.string() + ": " + pointer + ": referenced file " + rel +
                        " does not exist");
    }
  };

  Manifest manifest;
  const json& models = require_field(doc, "models", "", path);
  if (!models.is_array() || models.empty()) {
    throw FormatError(path.string() + ": /models: expected a non-empty array");
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    const std::string pointer = "/models/" + std::to_string(i);
    const json& jm = models[i];
    ManifestModel model;
    const json& id = require_field(jm, "id", pointer, path);
    if (!id.is_string()) throw FormatError(path.string() + ": " + pointer + "/id: expected a string");
    model.id = id.get<std::string>();
    const json& kind = require_field(jm, "kind", pointer, path);
    if (!kind.is_string()) {
      throw FormatError(path.string() + ": " + pointer + "/kind: expected a string");
    }
    model.kind = kind.get<std::string>();
    if (model.kind != "map_head" && model.kind != "zeroshot_probs") {
      throw FormatError(path.string() + ": " + pointer + "/kind: unknown kind " + model.kind);
    }
    if (jm.contains("feature_file")) {
      model.feature_file = jm.at("feature_file").get<std::string>();
      check_exists(*model.feature_file, pointer + "/feature_file");
    }
    if (jm.contains("head_file")) {
      model.head_file = jm.at("head_file").get<std::string>();
      check_exists(*model.head_file, pointer + "/head_file");
    }
    if (jm.contains("alpha")) {
      if (!jm.at("alpha").is_number()) {
        throw FormatError(path.string() + ": " + pointer + "/alpha: expected a number");
      }
      model.alpha = jm.at("alpha").get<double>();
    }
    if (jm.contains("probs_files")) {
      const json& pf = jm.at("probs_files");
      if (!pf.is_object()) {
        throw FormatError(path.string() + ": " + pointer + "/probs_files: expected an object");
      }
      for (const auto& [split, file] : pf.items()) {
        if (!file.is_string()) {
          throw FormatError(path.string() + ": " + pointer + "/probs_files/" + split +
                            ": expected a string");
        }
        model.probs_files[split] = file.get<std::string>();
        check_exists(model.probs_files[split], pointer + "/probs_files/" + split);
      }
    }
    for (const ManifestModel& seen : manifest.models) {
      if (seen.id == model.id) {
        throw FormatError(path.string() + ": " + pointer + "/id: duplicate id " + model.id);
      }
    }
    manifest.models.push_back(std::move(model));
  }
  if (doc.contains("splits")) {
    const json& splits = doc.at("splits");
    if (!splits.is_object()) {
      throw FormatError(path.string() + ": /splits: expected an object");
    }
    for (const auto& [split, file] : splits.items()) {
      if (!file.is_string()) {
        throw FormatError(path.string() + ": /splits/" + split + ": expected a string");
      }
      manifest.splits[split] = file.get<std::string>();
      check_exists(manifest.splits[split], "/splits/" + split);
    }
  }
  return manifest;
}

}  // namespace modelavg
