#pragma once

#include "taintlens/graph.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>
#include <vector>

namespace taintlens {

class MissingLocation : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// SARIF 2.1.0 log with one result per alert and a codeFlow over its path.
nlohmann::json emit_sarif(const std::vector<Alert> &alerts);

} // namespace taintlens
