#pragma once

#include "taintlens/graph.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace taintlens {

/// An external API invoked somewhere in the project.
struct ExternalCandidate {
  ApiSignature api;
  bool may_be_source = false;     ///< some call site has a result node
  std::vector<int> sink_positions; ///< union over call sites, ascending
  int occurrence_count = 0;

  bool operator==(const ExternalCandidate &) const = default;
};

/// A formal parameter of a public internal function exercised by tests.
struct InternalParamCandidate {
  std::string function;
  ApiSignature api;
  int position = 0;
  std::string param_name;
  std::optional<std::string> doc;

  bool operator==(const InternalParamCandidate &) const = default;
};

struct FilterConfig {
  std::vector<std::string> skip_packages = {"org.junit", "org.hamcrest",
                                            "org.mockito"};
  std::string test_path_marker = "src/test";
};

/// True when `package` equals `prefix` or lies beneath it.
bool package_matches(std::string_view package, std::string_view prefix);

std::vector<ExternalCandidate> extract_external(const DataflowGraph &g,
                                                const FilterConfig &cfg = {});
std::vector<InternalParamCandidate>
extract_internal(const DataflowGraph &g, const FilterConfig &cfg = {});

/// Candidate dump: {"external": [...], "internal": [...]}.
nlohmann::json candidates_to_json(const std::vector<ExternalCandidate> &ext,
                                  const std::vector<InternalParamCandidate> &in);

} // namespace taintlens
