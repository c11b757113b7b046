#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <fstream>

#include "lexicol/dataset_io.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace lexicol;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

/// Minimal valid directory: n nodes, d = 1, no edges, every node labeled 0.
void write_minimal(const fs::path& dir, std::size_t n) {
  fs::create_directories(dir / "splits");
  write_text(dir / "meta.json", R"({"name":"tiny","num_nodes":)" + std::to_string(n) +
                                    R"(,"num_features":1,"num_classes":1})");
  write_text(dir / "edges.tsv", "");
  std::string f = "GCNF";
  const auto put = [&](const void* p, std::size_t len) { f.append(static_cast<const char*>(p), len); };
  const std::uint32_t version = 1;
  const std::uint64_t nn = n, d = 1;
  put(&version, 4);
  put(&nn, 8);
  put(&d, 8);
  for (std::size_t i = 0; i < n; ++i) {
    const float v = static_cast<float>(i) + 0.5f;
    put(&v, 4);
  }
  write_text(dir / "features.bin", f);
  std::string labels;
  for (std::size_t i = 0; i < n; ++i) labels += std::to_string(i) + "\t0\n";
  write_text(dir / "labels.tsv", labels);
  write_text(dir / "splits/train.txt", "0\n");
  write_text(dir / "splits/val.txt", "");
  write_text(dir / "splits/test.txt", "");
}

std::string error_of(const fs::path& dir) {
  try {
    load_dataset(dir);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(DatasetIo, SingleNodeNoEdges) {
  oracle::TempDir tmp("io");
  write_minimal(tmp.path(), 1);
  const auto ds = load_dataset(tmp.path());
  EXPECT_EQ(ds.num_nodes(), 1u);
  EXPECT_EQ(ds.graph.num_edges(), 0u);
  EXPECT_EQ(ds.num_features(), 1u);
  EXPECT_EQ(ds.features(0, 0), 0.5);
}

TEST(DatasetIo, SelfLoopNamesLine) {
  oracle::TempDir tmp("io");
  write_minimal(tmp.path(), 5);
  write_text(tmp / "edges.tsv", "3\t3\n");
  EXPECT_THROW(load_dataset(tmp.path()), ValidationError);
  EXPECT_NE(error_of(tmp.path()).find("self-loop at line 1"), std::string::npos);
}

TEST(DatasetIo, DuplicateEdgeInEitherOrientation) {
  oracle::TempDir tmp("io");
  write_minimal(tmp.path(), 5);
  write_text(tmp / "edges.tsv", "0\t1\n2\t3\n1\t0\n");
  const auto msg = error_of(tmp.path());
  EXPECT_NE(msg.find("duplicate edge (0,1) at line 3"), std::string::npos) << msg;
}

TEST(DatasetIo, EdgesAreCanonicalizedOnLoad) {
  oracle::TempDir tmp("io");
  write_minimal(tmp.path(), 5);
  write_text(tmp / "edges.tsv", "4\t2\n0\t1");  // reversed pair, unsorted, no final newline
  const auto ds = load_dataset(tmp.path());
  ASSERT_EQ(ds.graph.num_edges(), 2u);
  EXPECT_EQ(ds.graph.edges()[0], (Edge{0, 1}));
  EXPECT_EQ(ds.graph.edges()[1], (Edge{2, 4}));
}

TEST(DatasetIo, MalformedFilesAreFormatErrors) {
  oracle::TempDir tmp("io");
  const auto expect_format = [&](const std::string& file, const std::string& content,
                                 const std::string& fragment) {
    write_minimal(tmp.path(), 4);
    write_text(tmp / file, content);
    try {
      load_dataset(tmp.path());
      ADD_FAILURE() << file << ": expected an error";
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };
  expect_format("edges.tsv", "0 1\n", "edges.tsv line 1");
  expect_format("edges.tsv", "0\t1\nx\t2\n", "edges.tsv line 2");
  expect_format("edges.tsv", "0\t1\t2\n", "edges.tsv line 1");
  expect_format("labels.tsv", "1\t0\n0\t0\n", "labels.tsv line 2");
  expect_format("meta.json", "{", "meta.json");
  expect_format("meta.json", R"({"name":"a","num_nodes":4,"num_features":1})", "num_classes");
  expect_format("features.bin", "GCNX", "features.bin");
  expect_format("splits/test.txt", "1\n-2\n", "test.txt line 2");
}

TEST(DatasetIo, FeatureShapeAndPayloadChecks) {
  oracle::TempDir tmp("io");
  write_minimal(tmp.path(), 4);
  const auto good = read_bytes(tmp / "features.bin");
  write_text(tmp / "features.bin", good.substr(0, good.size() - 2));
  EXPECT_THROW(load_dataset(tmp.path()), FormatError);
  write_text(tmp / "features.bin", good + "x");
  EXPECT_THROW(load_dataset(tmp.path()), FormatError);

  auto wrong_n = good;
  wrong_n[8] = 5;  // u64 n
  write_text(tmp / "features.bin", wrong_n);
  EXPECT_THROW(load_dataset(tmp.path()), ValidationError);

  auto nan = good;
  const float q = std::nanf("");
  std::memcpy(nan.data() + 24, &q, 4);
  write_text(tmp / "features.bin", nan);
  EXPECT_THROW(load_dataset(tmp.path()), ValidationError);
}

TEST(DatasetIo, ValidationErrors) {
  oracle::TempDir tmp("io");
  write_minimal(tmp.path(), 4);
  write_text(tmp / "edges.tsv", "0\t4\n");
  EXPECT_THROW(load_dataset(tmp.path()), ValidationError);
  write_minimal(tmp.path(), 4);
  write_text(tmp / "labels.tsv", "0\t0\n1\t3\n");
  EXPECT_THROW(load_dataset(tmp.path()), ValidationError);
  write_minimal(tmp.path(), 4);
  write_text(tmp / "splits/val.txt", "0\n");  // overlaps train
  EXPECT_THROW(load_dataset(tmp.path()), ValidationError);
  write_minimal(tmp.path(), 4);
  fs::remove(tmp / "splits/val.txt");
  EXPECT_THROW(load_dataset(tmp.path()), ValidationError);
}

TEST(DatasetIo, RoundTripIsStructurallyIdentical) {
  oracle::TempDir tmp("io");
  auto ds = synthetic::small_citation(3);
  // Make features non-binary so bitwise float preservation is exercised.
  for (std::size_t i = 0; i < ds.features.size(); ++i)
    ds.features.data()[i] = static_cast<double>(static_cast<float>(ds.features.data()[i] * 0.37 + i * 1e-3));
  ds.labels[5] = kUnknownLabel;
  std::erase(ds.split.val, NodeId{5});
  std::erase(ds.split.test, NodeId{5});
  std::erase(ds.split.train, NodeId{5});
  write_dataset(ds, tmp.path());
  const auto back = load_dataset(tmp.path());
  EXPECT_EQ(back.name, ds.name);
  EXPECT_TRUE(std::ranges::equal(back.graph.edges(), ds.graph.edges()));
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.split.train, ds.split.train);
  EXPECT_EQ(back.split.val, ds.split.val);
  EXPECT_EQ(back.split.test, ds.split.test);

  // Writing again reproduces the same bytes.
  oracle::TempDir again("io");
  write_dataset(back, again.path());
  for (const char* f : {"meta.json", "edges.tsv", "features.bin", "labels.tsv", "splits/train.txt"})
    EXPECT_EQ(read_bytes(tmp / f), read_bytes(again / f)) << f;
}

TEST(DatasetIo, WrittenFilesFollowByteLayout) {
  oracle::TempDir tmp("io");
  Dataset ds;
  ds.name = "bytes";
  ds.graph = Graph::from_edges(3, {{2, 0}, {1, 0}});
  ds.features = DenseMatrix(3, 2, {1, 0, 0, 1, 0.5, 0.25});
  ds.num_classes = 2;
  ds.labels = {0, 1, kUnknownLabel};
  ds.split = {{0}, {}, {1}};
  write_dataset(ds, tmp.path());
  EXPECT_EQ(read_bytes(tmp / "edges.tsv"), "0\t1\n0\t2\n");
  EXPECT_EQ(read_bytes(tmp / "labels.tsv"), "0\t0\n1\t1\n");
  EXPECT_EQ(read_bytes(tmp / "splits/test.txt"), "1\n");
  const auto f = read_bytes(tmp / "features.bin");
  ASSERT_EQ(f.size(), 4u + 4 + 8 + 8 + 6 * 4);
  EXPECT_EQ(f.substr(0, 4), "GCNF");
  EXPECT_EQ(f[4], 1);
  EXPECT_EQ(f[8], 3);
  EXPECT_EQ(f[16], 2);
  float last = 0;
  std::memcpy(&last, f.data() + f.size() - 4, 4);
  EXPECT_EQ(last, 0.25f);
  const auto meta = nlohmann::json::parse(read_bytes(tmp / "meta.json"));
  EXPECT_EQ(meta["num_nodes"], 3);
  EXPECT_EQ(meta["name"], "bytes");
}
