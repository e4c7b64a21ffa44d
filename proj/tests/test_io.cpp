#include <cstdint>
#include <fstream>
#include <string>

#include "doctest.h"
#include "modelavg/io.hpp"
#include "test_support.hpp"

using namespace modelavg;
using testsupport::TempDir;

namespace {

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  REQUIRE(out.good());
}

}  // namespace

TEST_CASE("FMAT 1x1 byte layout") {
  TempDir dir("fmat");
  Matrix m(1, 1);
  m << 3.5;
  write_fmat(m, dir.file("a.fmat"));
  const std::string bytes = read_bytes(dir.file("a.fmat"));
  REQUIRE(bytes.size() == 28);
  CHECK(bytes.substr(0, 4) == "FMAT");
  // version 1, little endian
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);
  CHECK(static_cast<unsigned char>(bytes[5]) == 0);
  // rows = cols = 1
  CHECK(static_cast<unsigned char>(bytes[8]) == 1);
  CHECK(static_cast<unsigned char>(bytes[16]) == 1);
  // payload: IEEE-754 binary32 of 3.5
  CHECK(static_cast<unsigned char>(bytes[24]) == 0x00);
  CHECK(static_cast<unsigned char>(bytes[25]) == 0x00);
  CHECK(static_cast<unsigned char>(bytes[26]) == 0x60);
  CHECK(static_cast<unsigned char>(bytes[27]) == 0x40);

  const Matrix back = read_fmat(dir.file("a.fmat"));
  CHECK(back(0, 0) == 3.5);
}

TEST_CASE("FMAT round trip is exact for float32 values") {
  TempDir dir("fmatrt");
  testsupport::Rng rng(31);
  Matrix m(7, 3);
  for (Index r = 0; r < 7; ++r) {
    for (Index c = 0; c < 3; ++c) {
      m(r, c) = static_cast<double>(static_cast<float>(10.0 * rng.normal()));
    }
  }
  write_fmat(m, dir.file("rt.fmat"));
  const Matrix back = read_fmat(dir.file("rt.fmat"));
  REQUIRE(back.rows() == 7);
  REQUIRE(back.cols() == 3);
  CHECK((back.array() == m.array()).all());

  // A second write of the identical matrix is byte-identical.
  write_fmat(back, dir.file("rt2.fmat"));
  CHECK(read_bytes(dir.file("rt.fmat")) == read_bytes(dir.file("rt2.fmat")));
}

TEST_CASE("FMAT read failures") {
  TempDir dir("fmatbad");
  CHECK_THROWS_WITH_AS(read_fmat(dir.file("missing.fmat")),
                       doctest::Contains("missing.fmat"), FormatError);

  Matrix m(2, 2);
  m << 1.0, 2.0, 3.0, 4.0;
  write_fmat(m, dir.file("good.fmat"));
  std::string bytes = read_bytes(dir.file("good.fmat"));

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  write_bytes(dir.file("badmagic.fmat"), bad_magic);
  CHECK_THROWS_AS(read_fmat(dir.file("badmagic.fmat")), FormatError);

  write_bytes(dir.file("trunc.fmat"), bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_fmat(dir.file("trunc.fmat")), FormatError);

  write_bytes(dir.file("trailing.fmat"), bytes + "x");
  CHECK_THROWS_AS(read_fmat(dir.file("trailing.fmat")), FormatError);

  // NaN payload (0x7fc00000) is structurally valid but rejected as data.
  std::string nan_bytes = bytes;
  nan_bytes[24] = '\x00';
  nan_bytes[25] = '\x00';
  nan_bytes[26] = '\xc0';
  nan_bytes[27] = '\x7f';
  write_bytes(dir.file("nan.fmat"), nan_bytes);
  CHECK_THROWS_AS(read_fmat(dir.file("nan.fmat")), DataError);
}

TEST_CASE("LBL1 round trip and validation") {
  TempDir dir("lbl");
  LabelVector labels;
  labels.n_classes = 2;
  labels.y.resize(3);
  labels.y << 0, 1, 0;
  write_lbl(labels, dir.file("y.lbl"));
  const LabelVector back = read_lbl(dir.file("y.lbl"));
  CHECK(back.n_classes == 2);
  CHECK((back.y.array() == labels.y.array()).all());

  // Corrupt one index beyond num_classes.
  std::string bytes = read_bytes(dir.file("y.lbl"));
  bytes[24] = '\x05';
  write_bytes(dir.file("bad.lbl"), bytes);
  CHECK_THROWS_AS(read_lbl(dir.file("bad.lbl")), DataError);

  std::string bad_magic = bytes;
  bad_magic[0] = 'F';
  write_bytes(dir.file("badmagic.lbl"), bad_magic);
  CHECK_THROWS_AS(read_lbl(dir.file("badmagic.lbl")), FormatError);
}

TEST_CASE("weights JSON round trip and validation") {
  TempDir dir("weights");
  Vector w(3);
  w << 0.2, 0.30000000000000004, 0.5;
  write_weights_json(w, dir.file("w.json"));
  const Vector back = read_weights_json(dir.file("w.json"));
  REQUIRE(back.size() == 3);
  CHECK((back.array() == w.array()).all());

  // 1/3 must be written with enough digits to parse back bit-identically.
  Vector thirds = Vector::Constant(3, 1.0 / 3.0);
  write_weights_json(thirds, dir.file("t.json"));
  const std::string text = read_bytes(dir.file("t.json"));
  CHECK(text.find("0.33333333333333331") != std::string::npos);
  const Vector tback = read_weights_json(dir.file("t.json"));
  CHECK((tback.array() == thirds.array()).all());

  write_bytes(dir.file("neg.json"), "{\"weights\":[-0.1,1.1]}");
  CHECK_THROWS_AS(read_weights_json(dir.file("neg.json")), DataError);
  write_bytes(dir.file("sum.json"), "{\"weights\":[0.5,0.6]}");
  CHECK_THROWS_AS(read_weights_json(dir.file("sum.json")), DataError);
  write_bytes(dir.file("schema.json"), "{\"w\":[1.0]}");
  CHECK_THROWS_WITH_AS(read_weights_json(dir.file("schema.json")),
                       doctest::Contains("/weights"), FormatError);
}

TEST_CASE("evidence JSON round trip preserves totals to the last bit") {
  TempDir dir("evidence");
  testsupport::Rng rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    EvidenceRecord rec;
    rec.log_lik_map = -1000.0 * rng.uniform() - rng.normal();
    rec.prior_quad = 10.0 * rng.uniform();
    rec.log_det_term = 100.0 * rng.uniform();
    rec.n_train = 1 + static_cast<Index>(rng.bounded(100000));
    rec.alpha = rng.uniform() + 0.01;
    write_evidence_json(rec, dir.file("e.json"));
    const EvidenceRecord back = read_evidence_json(dir.file("e.json"));
    CHECK(back.log_lik_map == rec.log_lik_map);
    CHECK(back.prior_quad == rec.prior_quad);
    CHECK(back.log_det_term == rec.log_det_term);
    CHECK(back.n_train == rec.n_train);
    CHECK(back.alpha == rec.alpha);
    CHECK(back.total() == rec.total());
  }

  write_bytes(dir.file("bad.json"), "{\"log_lik_map\":-1.0,\"prior_quad\":0.1}");
  CHECK_THROWS_WITH_AS(read_evidence_json(dir.file("bad.json")),
                       doctest::Contains("/log_det_term"), FormatError);
}

TEST_CASE("head round trip with sidecar") {
  TempDir dir("head");
  LinearHead head;
  head.weights.resize(2, 3);
  head.weights << 0.5, -1.25, 2.0, 0.0, 3.5, -0.75;
  head.alpha = 2.5;
  head.n_train = 42;
  head.converged = true;
  write_head(head, dir.file("h.fmat"));
  const LinearHead back = read_head(dir.file("h.fmat"));
  CHECK((back.weights.array() == head.weights.array()).all());
  CHECK(back.alpha == 2.5);
  CHECK(back.n_train == 42);
  CHECK(back.converged);

  std::filesystem::remove(dir.file("h.fmat.json"));
  CHECK_THROWS_AS(read_head(dir.file("h.fmat")), FormatError);
}

TEST_CASE("manifest parsing and validation") {
  TempDir dir("manifest");
  Matrix m(1, 1);
  m << 1.0;
  write_fmat(m, dir.file("feats.fmat"));
  write_fmat(m, dir.file("p_val.fmat"));
  LabelVector labels;
  labels.n_classes = 2;
  labels.y.resize(1);
  labels.y << 0;
  write_lbl(labels, dir.file("train.lbl"));

  const std::string good =
      "{\"models\":[{\"id\":\"m1\",\"kind\":\"map_head\",\"feature_file\":\"feats.fmat\","
      "\"alpha\":1.5},"
      "{\"id\":\"m2\",\"kind\":\"zeroshot_probs\",\"probs_files\":{\"val\":\"p_val.fmat\"}}],"
      "\"splits\":{\"train\":\"train.lbl\"}}";
  write_bytes(dir.file("manifest.json"), good);
  const Manifest manifest = read_manifest(dir.file("manifest.json"));
  REQUIRE(manifest.models.size() == 2);
  CHECK(manifest.models[0].id == "m1");
  CHECK(manifest.models[0].alpha.value() == 1.5);
  CHECK(manifest.models[1].probs_files.at("val") == "p_val.fmat");
  CHECK(manifest.splits.at("train") == "train.lbl");

  const std::string missing_file =
      "{\"models\":[{\"id\":\"m1\",\"kind\":\"map_head\",\"feature_file\":\"nope.fmat\"}]}";
  write_bytes(dir.file("bad1.json"), missing_file);
  CHECK_THROWS_WITH_AS(read_manifest(dir.file("bad1.json")),
                       doctest::Contains("nope.fmat"), FormatError);

  const std::string dup_ids =
      "{\"models\":[{\"id\":\"m1\",\"kind\":\"map_head\"},{\"id\":\"m1\",\"kind\":\"map_head\"}]}";
  write_bytes(dir.file("bad2.json"), dup_ids);
  CHECK_THROWS_WITH_AS(read_manifest(dir.file("bad2.json")),
                       doctest::Contains("duplicate"), FormatError);

  const std::string bad_kind = "{\"models\":[{\"id\":\"m1\",\"kind\":\"mlp\"}]}";
  write_bytes(dir.file("bad3.json"), bad_kind);
  CHECK_THROWS_WITH_AS(read_manifest(dir.file("bad3.json")),
                       doctest::Contains("/models/0/kind"), FormatError);
}
