#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lexicol/binary_io.hpp"
#include "lexicol/graph.hpp"

// Canonical dataset directory:
//
//   meta.json           {"name", "num_nodes", "num_features", "num_classes"}
//   edges.tsv           "u\tv" per line, 0-based
//   features.bin        "GCNF", u32 version=1, u64 n, u64 d, n*d binary32 row-major
//   labels.tsv          "node\tclass" per labeled node, ascending node id
//   splits/{train,val,test}.txt   one node id per line
//
// All multi-byte values are little-endian.

namespace lexicol {

namespace detail {

inline std::uint64_t parse_uint(std::string_view token, const std::string& where) {
  std::uint64_t v = 0;
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (token.empty() || ec != std::errc() || ptr != last)
    throw FormatError(where + ": expected a non-negative decimal integer, got '" +
                      std::string(token) + "'");
  return v;
}

/// Splits "a\tb" into exactly two tokens.
inline std::pair<std::string_view, std::string_view> split_pair(std::string_view line,
                                                                const std::string& where) {
  const auto tab = line.find('\t');
  if (tab == std::string_view::npos || line.find('\t', tab + 1) != std::string_view::npos)
    throw FormatError(where + ": expected two tab-separated integers");
  return {line.substr(0, tab), line.substr(tab + 1)};
}

inline std::string where(const std::filesystem::path& file, std::size_t line) {
  return file.filename().string() + " line " + std::to_string(line);
}

inline std::vector<NodeId> read_id_list(const std::filesystem::path& path, std::size_t n) {
  auto in = io::open_in(path, false);
  std::vector<NodeId> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto v = parse_uint(line, "splits/" + where(path, lineno));
    if (v >= n)
      throw ValidationError("splits/" + where(path, lineno) + ": node " + std::to_string(v) +
                            " out of range");
    ids.push_back(static_cast<NodeId>(v));
  }
  return ids;
}

}  // namespace detail

inline Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  using nlohmann::json;
  Dataset ds;

  // meta.json
  std::size_t n = 0, d = 0;
  {
    auto in = io::open_in(dir / "meta.json", false);
    json meta;
    try {
      in >> meta;
    } catch (const json::exception& e) {
      throw FormatError("meta.json: " + std::string(e.what()));
    }
    const auto field = [&](const char* key) -> std::uint64_t {
      if (!meta.is_object() || !meta.contains(key) || !meta[key].is_number_unsigned())
        throw FormatError(std::string("meta.json: missing or non-integer field '") + key + "'");
      return meta[key].get<std::uint64_t>();
    };
    n = field("num_nodes");
    d = field("num_features");
    ds.num_classes = field("num_classes");
    if (!meta.contains("name") || !meta["name"].is_string())
      throw FormatError("meta.json: missing string field 'name'");
    ds.name = meta["name"].get<std::string>();
  }

  // edges.tsv
  {
    const fs::path path = dir / "edges.tsv";
    auto in = io::open_in(path, false);
    std::vector<Edge> edges;
    std::set<std::pair<NodeId, NodeId>> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto at = detail::where(path, lineno);
      const auto [a, b] = detail::split_pair(line, at);
      const auto u = detail::parse_uint(a, at);
      const auto v = detail::parse_uint(b, at);
      if (u >= n || v >= n)
        throw ValidationError("edges.tsv: endpoint out of range at line " +
                              std::to_string(lineno));
      if (u == v) throw ValidationError("edges.tsv: self-loop at line " + std::to_string(lineno));
      const std::pair<NodeId, NodeId> key{static_cast<NodeId>(std::min(u, v)),
                                          static_cast<NodeId>(std::max(u, v))};
      if (!seen.insert(key).second)
        throw ValidationError("edges.tsv: duplicate edge (" + std::to_string(key.first) + "," +
                              std::to_string(key.second) + ") at line " + std::to_string(lineno));
      edges.push_back({key.first, key.second});
    }
    ds.graph = Graph::from_edges(n, std::move(edges));
  }

  // features.bin
  {
    const fs::path path = dir / "features.bin";
    auto in = io::open_in(path, true);
    const std::string what = "features.bin";
    io::expect_magic(in, "GCNF", what);
    const auto version = io::read_le<std::uint32_t>(in, what);
    if (version != 1) throw FormatError(what + ": unsupported version " + std::to_string(version));
    const auto fn = io::read_le<std::uint64_t>(in, what);
    const auto fd = io::read_le<std::uint64_t>(in, what);
    if (fn != n || fd != d)
      throw ValidationError(what + ": shape " + std::to_string(fn) + "x" + std::to_string(fd) +
                            " disagrees with meta.json " + std::to_string(n) + "x" +
                            std::to_string(d));
    std::vector<char> raw(n * d * 4);
    if (!in.read(raw.data(), static_cast<std::streamsize>(raw.size())))
      throw FormatError(what + ": truncated payload");
    if (in.peek() != std::char_traits<char>::eof())
      throw FormatError(what + ": trailing bytes after payload");
    std::vector<double> values(n * d);
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * i + b])) << (8 * b);
      const float f = std::bit_cast<float>(bits);
      if (!std::isfinite(f))
        throw ValidationError(what + ": non-finite value at row " + std::to_string(i / d) +
                              ", column " + std::to_string(i % d));
      values[i] = static_cast<double>(f);
    }
    ds.features = DenseMatrix(n, d, std::move(values));
  }

  // labels.tsv
  {
    const fs::path path = dir / "labels.tsv";
    auto in = io::open_in(path, false);
    ds.labels.assign(n, kUnknownLabel);
    std::string line;
    std::size_t lineno = 0;
    std::int64_t previous = -1;
    while (std::getline(in, line)) {
      ++lineno;
      const auto at = detail::where(path, lineno);
      const auto [a, b] = detail::split_pair(line, at);
      const auto node = detail::parse_uint(a, at);
      const auto cls = detail::parse_uint(b, at);
      if (node >= n) throw ValidationError(at + ": node " + std::to_string(node) + " out of range");
      if (cls >= ds.num_classes)
        throw ValidationError(at + ": class " + std::to_string(cls) + " out of range");
      if (static_cast<std::int64_t>(node) <= previous)
        throw FormatError(at + ": node ids must be strictly ascending");
      previous = static_cast<std::int64_t>(node);
      ds.labels[node] = static_cast<ClassId>(cls);
    }
  }

  ds.split.train = detail::read_id_list(dir / "splits" / "train.txt", n);
  ds.split.val = detail::read_id_list(dir / "splits" / "val.txt", n);
  ds.split.test = detail::read_id_list(dir / "splits" / "test.txt", n);

  validate(ds);
  return ds;
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  validate(ds);
  fs::create_directories(dir / "splits");
  const std::size_t n = ds.num_nodes();
  const std::size_t d = ds.num_features();

  nlohmann::json meta = {{"name", ds.name},
                         {"num_nodes", n},
                         {"num_features", d},
                         {"num_classes", ds.num_classes}};
  io::write_atomically(dir / "meta.json", [&](std::ostream& os) { os << meta.dump(2) << '\n'; });

  io::write_atomically(dir / "edges.tsv", [&](std::ostream& os) {
    for (const auto& e : ds.graph.edges()) os << e.u << '\t' << e.v << '\n';
  });

  io::write_atomically(dir / "features.bin", [&](std::ostream& os) {
    os.write("GCNF", 4);
    io::write_le<std::uint32_t>(os, 1);
    io::write_le<std::uint64_t>(os, n);
    io::write_le<std::uint64_t>(os, d);
    for (double v : ds.features.data()) io::write_le<float>(os, static_cast<float>(v));
  });

  io::write_atomically(dir / "labels.tsv", [&](std::ostream& os) {
    for (std::size_t i = 0; i < n; ++i)
      if (ds.labels[i] != kUnknownLabel) os << i << '\t' << ds.labels[i] << '\n';
  });

  const auto write_ids = [&](const fs::path& p, std::span<const NodeId> ids) {
    io::write_atomically(p, [&](std::ostream& os) {
      for (NodeId v : ids) os << v << '\n';
    });
  };
  write_ids(dir / "splits" / "train.txt", ds.split.train);
  write_ids(dir / "splits" / "val.txt", ds.split.val);
  write_ids(dir / "splits" / "test.txt", ds.split.test);
}

}  // namespace lexicol
