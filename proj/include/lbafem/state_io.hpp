#pragma once
/// \file state_io.hpp
/// \brief Saved mesh state: benchmark, degree and the bisection path of every leaf.

#include "lbafem/common.hpp"
#include "lbafem/mesh_forest.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace lbafem {

inline constexpr const char* kStateMagic = "lbafem-state 1";

struct MeshState {
  std::string benchmark;
  int n = 1;
  /// (macro element, bisection path) per leaf, in leaf order.
  std::vector<std::pair<int, std::string>> leaves;
};

inline MeshState capture_state(const ConformingMesh& mesh, const std::string& benchmark, int n) {
  MeshState s;
  s.benchmark = benchmark;
  s.n = n;
  for (int id : mesh.leaves()) s.leaves.emplace_back(mesh.element(id).macro_id, mesh.path_of(id));
  return s;
}

/// Text form:
///   lbafem-state 1
///   benchmark <name>
///   n <degree>
///   leaves <count>
///   <macro> <path>      ('-' for an unrefined macro element)
inline void write_state(const MeshState& s, std::ostream& out) {
  out << kStateMagic << '\n'
      << "benchmark " << s.benchmark << '\n'
      << "n " << s.n << '\n'
      << "leaves " << s.leaves.size() << '\n';
  for (const auto& [macro, path] : s.leaves) out << macro << ' ' << (path.empty() ? "-" : path) << '\n';
}

inline void save_state(const MeshState& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_state(s, out);
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline MeshState parse_state(std::istream& in, const std::string& source = "<state>") {
  MeshState s;
  int line_no = 0;
  std::string line;
  auto fail = [&](const std::string& what) {
    throw ParseError(source + ":" + std::to_string(line_no) + ": " + what);
  };
  auto next = [&]() {
    if (!std::getline(in, line)) {
      ++line_no;
      fail("unexpected end of file");
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return std::istringstream(line);
  };
  next();
  if (line != kStateMagic) fail("not a mesh state file");
  std::string word;
  {
    auto ls = next();
    if (!(ls >> word) || word != "benchmark" || !(ls >> s.benchmark)) fail("expected 'benchmark <name>'");
  }
  {
    auto ls = next();
    if (!(ls >> word) || word != "n" || !(ls >> s.n)) fail("expected 'n <degree>'");
  }
  std::size_t count = 0;
  {
    auto ls = next();
    if (!(ls >> word) || word != "leaves" || !(ls >> count)) fail("expected 'leaves <count>'");
  }
  s.leaves.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    auto ls = next();
    int macro = -1;
    std::string path;
    if (!(ls >> macro >> path) || macro < 0) fail("expected '<macro> <path>'");
    if (path == "-") path.clear();
    for (char c : path)
      if (c != '0' && c != '1') fail("bad bisection path '" + path + "'");
    s.leaves.emplace_back(macro, std::move(path));
  }
  return s;
}

inline MeshState load_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_state(in, path);
}

/// Rebuilds the leaves of a saved state on a fresh forest over `topology`,
/// one generation at a time: every leaf whose path is a proper prefix of a
/// saved path is bisected, until no such leaf is left.
inline ConformingMesh restore_mesh(const MacroTopology& topology, const MeshState& s) {
  ConformingMesh mesh(topology);
  std::set<std::pair<int, std::string>> prefixes;
  for (const auto& [macro, path] : s.leaves) {
    if (macro < 0 || static_cast<std::size_t>(macro) >= mesh.topology().size())
      throw ParseError("macro element " + std::to_string(macro) + " out of range");
    for (std::size_t len = 0; len < path.size(); ++len) prefixes.emplace(macro, path.substr(0, len));
  }
  std::vector<int> marked;
  while (true) {
    marked.clear();
    for (int id : mesh.leaves())
      if (prefixes.count({mesh.element(id).macro_id, mesh.path_of(id)})) marked.push_back(id);
    if (marked.empty()) break;
    mesh.refine(marked);
  }
  if (mesh.num_leaves() != s.leaves.size())
    throw ParseError("state does not describe a conforming mesh: expected " +
                     std::to_string(s.leaves.size()) + " leaves, rebuilt " +
                     std::to_string(mesh.num_leaves()));
  return mesh;
}

}  // namespace lbafem
