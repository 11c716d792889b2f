#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "gcalib/dataset.hpp"
#include "gcalib/errors.hpp"
#include "gcalib/graph.hpp"
#include "gcalib/rng.hpp"

using namespace gcalib;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("gcalib_ds_" + std::to_string(Rng(std::random_device{}()).next_u64()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

void write_small_dataset(const TempDir& dir) {
  write(dir.file("edges.txt"), "0 1\n1 2\n");
  write(dir.file("labels.tsv"), "0\t0\n1\t1\n2\t0\n3\t1\n");
  write(dir.file("logits.txt"),
        "0 1.0 0.0\n"
        "1 0.0 2.0\n"
        "2 0.5 0.5\n"
        "3 -1.0 1.0\n");
  write(dir.file("split.json"), R"({"train": [0], "val": [1], "test": [2, 3]})");
  write(dir.file("manifest.json"), R"({
    "format_version": 1,
    "num_nodes": 4,
    "num_classes": 2,
    "seed": 7,
    "edges": "edges.txt",
    "labels": "labels.tsv",
    "logits": "logits.txt",
    "split": "split.json"
  })");
}

}  // namespace

TEST_CASE("manifest loads a complete dataset") {
  TempDir dir;
  write_small_dataset(dir);
  const Dataset data = io::load_manifest(dir.file("manifest.json"));
  CHECK(data.graph.num_nodes == 4);
  CHECK(data.num_classes == 2);
  CHECK(data.labels == std::vector<int>{0, 1, 0, 1});
  CHECK(data.logits(1, 1) == 2.0);
  CHECK(data.mask.train == std::vector<int>{0});
  CHECK(data.mask.val == std::vector<int>{1});
  CHECK(data.mask.test == std::vector<int>{2, 3});
}

TEST_CASE("manifest errors carry the offending path") {
  TempDir dir;
  write_small_dataset(dir);
  fs::remove(dir.file("logits.txt"));
  try {
    io::load_manifest(dir.file("manifest.json"));
    FAIL("expected BadManifest");
  } catch (const BadManifest& e) {
    CHECK(std::string(e.what()).find("logits.txt") != std::string::npos);
  }
}

TEST_CASE("label and logits files are validated") {
  TempDir dir;
  write_small_dataset(dir);

  SUBCASE("missing node label") {
    write(dir.file("labels.tsv"), "0\t0\n1\t1\n2\t0\n");
    CHECK_THROWS_AS(io::load_manifest(dir.file("manifest.json")), BadManifest);
  }
  SUBCASE("class id out of range") {
    write(dir.file("labels.tsv"), "0\t0\n1\t1\n2\t0\n3\t5\n");
    CHECK_THROWS_AS(io::load_manifest(dir.file("manifest.json")), BadManifest);
  }
  SUBCASE("short logits row") {
    write(dir.file("logits.txt"), "0 1.0 0.0\n1 0.0 2.0\n2 0.5 0.5\n3 -1.0\n");
    CHECK_THROWS_AS(io::load_manifest(dir.file("manifest.json")), BadManifest);
  }
  SUBCASE("duplicate logits row") {
    write(dir.file("logits.txt"), "0 1.0 0.0\n0 1.0 0.0\n2 0.5 0.5\n3 -1.0 1.0\n");
    CHECK_THROWS_AS(io::load_manifest(dir.file("manifest.json")), BadManifest);
  }
  SUBCASE("overlapping split sets") {
    write(dir.file("split.json"), R"({"train": [0, 2], "val": [1], "test": [2, 3]})");
    CHECK_THROWS_AS(io::load_manifest(dir.file("manifest.json")), BadManifest);
  }
}

TEST_CASE("exponent notation in logits parses") {
  TempDir dir;
  write_small_dataset(dir);
  write(dir.file("logits.txt"),
        "0 1e-3 0.0\n1 0.0 2.5E2\n2 0.5 0.5\n3 -1.0 1.0\n");
  const Dataset data = io::load_manifest(dir.file("manifest.json"));
  CHECK(data.logits(0, 0) == 1e-3);
  CHECK(data.logits(1, 1) == 250.0);
}

TEST_CASE("logits writer round-trips exact doubles") {
  TempDir dir;
  Matrix m(2, 3);
  Rng rng(5);
  for (double& v : m.data) v = 1e3 * (2.0 * rng.next_double() - 1.0) / 3.0;
  io::write_logits_file(dir.file("logits.txt"), m);
  const Matrix back = io::read_logits_file(dir.file("logits.txt"), 2, 3);
  CHECK(back.data == m.data);
}

TEST_CASE("hex float encoding round-trips bit-exactly") {
  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    const double v = (rng.next_double() - 0.5) * std::pow(10.0, static_cast<double>(rng.next_below(20)) - 10.0);
    CHECK(io::hex_to_double(io::double_to_hex(v)) == v);
  }
  CHECK(io::hex_to_double(io::double_to_hex(0.0)) == 0.0);
  CHECK(io::hex_to_double(io::double_to_hex(-1.5)) == -1.5);
}

TEST_CASE("atomic writes replace content completely") {
  TempDir dir;
  const std::string path = dir.file("out.txt");
  io::write_text_atomic(path, "first version, longer than the second\n");
  io::write_text_atomic(path, "second\n");
  CHECK(io::read_text(path) == "second\n");
  CHECK(!fs::exists(path + ".tmp"));
}
