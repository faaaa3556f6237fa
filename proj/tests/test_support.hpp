#pragma once

#include "taintlens/graph.hpp"
#include "taintlens/minilang.hpp"

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace tl_test {

namespace fs = std::filesystem;

inline fs::path source_dir() { return fs::path(TAINTLENS_SOURCE_DIR); }
inline fs::path corpus_dir() { return source_dir() / "corpus"; }

class TempDir {
public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("taintlens-test-" + std::to_string(rd()) + "-" +
             std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;
  const fs::path &path() const { return path_; }

private:
  fs::path path_;
};

inline taintlens::DfgNode make_node(taintlens::NodeKind kind, int line = 1,
                                    std::string fn = "p.A.f",
                                    std::string code = "x") {
  taintlens::DfgNode n;
  n.kind = kind;
  n.file = "src/A.ml";
  n.line = line;
  n.column = 1;
  n.enclosing_function = std::move(fn);
  n.code_text = std::move(code);
  return n;
}

inline taintlens::DataflowGraph compile(std::vector<taintlens::minilang::SourceFile> files) {
  return taintlens::minilang::build_dfg(taintlens::minilang::parse(std::move(files)));
}

inline taintlens::ApiSignature api(std::string pkg, std::string cls,
                                   std::string method,
                                   std::vector<std::string> sig = {"String"}) {
  return taintlens::ApiSignature{std::move(pkg), std::move(cls), std::move(method),
                                 std::move(sig), std::nullopt, true};
}

/// A plain chain of LocalDef nodes with Data edges i -> j for each pair in
/// `edges` (0-based indices).
inline taintlens::DataflowGraph
chain_graph(int n, const std::vector<std::pair<int, int>> &edges,
            const std::vector<std::pair<int, int>> &exceptional = {}) {
  taintlens::GraphBuilder b;
  std::vector<taintlens::NodeId> ids;
  for (int i = 0; i < n; ++i)
    ids.push_back(b.add_node(make_node(taintlens::NodeKind::LocalDef, i + 1,
                                       "p.A.f", "v" + std::to_string(i))));
  for (auto [s, d] : edges)
    b.add_edge(ids[static_cast<std::size_t>(s)], ids[static_cast<std::size_t>(d)]);
  for (auto [s, d] : exceptional)
    b.add_edge(ids[static_cast<std::size_t>(s)], ids[static_cast<std::size_t>(d)],
               taintlens::EdgeKind::Exceptional);
  return std::move(b).build();
}

} // namespace tl_test
