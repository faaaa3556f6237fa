#pragma once

#include "taintlens/graph.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace taintlens {

/// Alerts loaded from a results directory plus their triage state. All
/// mutations persist triage_state.json atomically under one lock.
class TriageStore {
public:
  /// Loads every filtered_alerts.json under `results_dir` (falling back to
  /// alerts.json, then export.json) and any saved triage state.
  explicit TriageStore(std::filesystem::path results_dir);

  nlohmann::json list() const;
  nlohmann::json export_all() const;
  /// Null when the id is unknown.
  std::optional<nlohmann::json> set_triage(const std::string &id, Triage t);
  /// Ids updated; null when the id is unknown.
  std::optional<std::vector<std::string>>
  mark_similar(const std::string &id, bool by_source, Triage t);

  std::size_t size() const { return alerts_.size(); }

private:
  void persist() const;
  nlohmann::json alert_view(const Alert &a) const;

  std::filesystem::path dir_;
  std::vector<Alert> alerts_;
  std::map<std::string, std::size_t> index_;
  mutable std::mutex mu_;
};

class TriageServer {
public:
  TriageServer(std::filesystem::path results_dir,
               std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~TriageServer();

  /// Binds and serves until stop(). Returns false if binding failed.
  bool listen(const std::string &host, int port);
  /// Binds to an ephemeral port; returns it, or -1.
  int bind_any(const std::string &host);
  /// Serves on a socket bound by bind_any.
  bool listen_after_bind();
  void stop();
  bool running() const;
  void wait_until_ready() const;

  TriageStore &store() { return store_; }

private:
  TriageStore store_;
  std::unique_ptr<httplib::Server> http_;
};

} // namespace taintlens
