#include "taintlens/server.hpp"
#include "taintlens/json_io.hpp"
#include "taintlens/util.hpp"

#include <httplib.h>

#include <algorithm>

namespace fs = std::filesystem;

namespace taintlens {

namespace {

std::vector<fs::path> find_named(const fs::path &dir, const std::string &name) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir))
    return out;
  for (const auto &e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() == name)
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

constexpr const char *kStateFile = "triage_state.json";

} // namespace

TriageStore::TriageStore(fs::path results_dir) : dir_(std::move(results_dir)) {
  std::vector<fs::path> files;
  for (const char *name : {"filtered_alerts.json", "alerts.json", "export.json"}) {
    files = find_named(dir_, name);
    if (!files.empty())
      break;
  }
  for (const auto &f : files) {
    auto text = read_file(f);
    auto j = json::parse(text.value_or(""), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("alerts"))
      throw FormatError("not an alerts file: " + f.string());
    for (const auto &aj : j["alerts"]) {
      auto a = alert_from_json(aj);
      if (index_.emplace(a.id, alerts_.size()).second)
        alerts_.push_back(std::move(a));
    }
  }
  if (auto text = read_file(dir_ / kStateFile)) {
    auto j = json::parse(*text, nullptr, false);
    auto saved = j.is_object() ? j.value("triage", json::object()) : json::object();
    if (saved.is_object())
      for (const auto &[id, state] : saved.items()) {
        auto it = index_.find(id);
        auto t = state.is_string() ? parse_triage(state.get<std::string>())
                                   : std::nullopt;
        if (it != index_.end() && t)
          alerts_[it->second].triage = *t;
      }
  }
}

json TriageStore::alert_view(const Alert &a) const {
  auto j = alert_to_json(a);
  j["triage"] = to_string(a.triage);
  j["source_key"] = source_key(a);
  j["sink_key"] = sink_key(a);
  return j;
}

json TriageStore::list() const {
  std::lock_guard lock(mu_);
  json alerts = json::array();
  std::map<std::string, std::vector<std::string>> groups;
  int unreviewed = 0, tp = 0, fp = 0;
  for (const auto &a : alerts_) {
    alerts.push_back(alert_view(a));
    groups[sink_key(a)].push_back(a.id);
    (a.triage == Triage::Unreviewed     ? unreviewed
     : a.triage == Triage::TruePositive ? tp
                                        : fp)++;
  }
  json g = json::array();
  for (const auto &[key, ids] : groups)
    g.push_back({{"sink_key", key}, {"alert_ids", ids}});
  return {{"alerts", std::move(alerts)},
          {"groups", std::move(g)},
          {"counts",
           {{"total", alerts_.size()},
            {"unreviewed", unreviewed},
            {"true_positive", tp},
            {"false_positive", fp}}}};
}

json TriageStore::export_all() const {
  std::lock_guard lock(mu_);
  json alerts = json::array();
  for (const auto &a : alerts_) {
    auto j = alert_to_json(a);
    j["triage"] = to_string(a.triage);
    alerts.push_back(std::move(j));
  }
  return {{"alerts", std::move(alerts)}};
}

void TriageStore::persist() const {
  json state = json::object();
  for (const auto &a : alerts_)
    state[a.id] = to_string(a.triage);
  write_file_atomic(dir_ / kStateFile, json{{"triage", state}}.dump(2) + "\n");
}

std::optional<json> TriageStore::set_triage(const std::string &id, Triage t) {
  std::lock_guard lock(mu_);
  auto it = index_.find(id);
  if (it == index_.end())
    return std::nullopt;
  alerts_[it->second].triage = t;
  persist();
  return alert_view(alerts_[it->second]);
}

std::optional<std::vector<std::string>>
TriageStore::mark_similar(const std::string &id, bool by_source, Triage t) {
  std::lock_guard lock(mu_);
  auto it = index_.find(id);
  if (it == index_.end())
    return std::nullopt;
  const auto &anchor = alerts_[it->second];
  auto key = by_source ? source_key(anchor) : sink_key(anchor);
  std::vector<std::string> updated;
  for (auto &a : alerts_)
    if ((by_source ? source_key(a) : sink_key(a)) == key) {
      a.triage = t;
      updated.push_back(a.id);
    }
  persist();
  return updated;
}

namespace {

void reply(httplib::Response &res, int status, const json &body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Parses {"triage": "..."}; writes a 400 reply and returns null on error.
std::optional<std::pair<json, Triage>> triage_body(const httplib::Request &req,
                                                   httplib::Response &res) {
  auto body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    reply(res, 400, {{"error", "body must be a JSON object"}});
    return std::nullopt;
  }
  auto it = body.find("triage");
  auto t = (it != body.end() && it->is_string())
               ? parse_triage(it->get<std::string>())
               : std::nullopt;
  if (!t) {
    reply(res, 400,
          {{"error",
            "triage must be TruePositive, FalsePositive or Unreviewed"}});
    return std::nullopt;
  }
  return std::pair{body, *t};
}

} // namespace

TriageServer::TriageServer(fs::path results_dir,
                           std::optional<fs::path> static_dir)
    : store_(std::move(results_dir)), http_(std::make_unique<httplib::Server>()) {
  auto &srv = *http_;
  srv.Get("/api/alerts", [this](const httplib::Request &, httplib::Response &res) {
    reply(res, 200, store_.list());
  });
  srv.Get("/api/export", [this](const httplib::Request &, httplib::Response &res) {
    reply(res, 200, store_.export_all());
  });
  srv.Post(R"(/api/alerts/([^/]+)/triage)",
           [this](const httplib::Request &req, httplib::Response &res) {
             auto parsed = triage_body(req, res);
             if (!parsed)
               return;
             auto updated = store_.set_triage(req.matches[1], parsed->second);
             if (!updated)
               return reply(res, 404, {{"error", "unknown alert"}});
             reply(res, 200, *updated);
           });
  srv.Post(R"(/api/alerts/([^/]+)/mark-similar)",
           [this](const httplib::Request &req, httplib::Response &res) {
             auto parsed = triage_body(req, res);
             if (!parsed)
               return;
             const auto &body = parsed->first;
             auto by = body.value("by", json()).is_string()
                           ? body["by"].get<std::string>()
                           : std::string();
             if (by != "source" && by != "sink")
               return reply(res, 400, {{"error", "by must be source or sink"}});
             auto updated =
                 store_.mark_similar(req.matches[1], by == "source", parsed->second);
             if (!updated)
               return reply(res, 404, {{"error", "unknown alert"}});
             reply(res, 200, {{"updated", *updated}});
           });
  if (static_dir)
    srv.set_mount_point("/", static_dir->string());
}

TriageServer::~TriageServer() { stop(); }

bool TriageServer::listen(const std::string &host, int port) {
  return http_->listen(host, port);
}

int TriageServer::bind_any(const std::string &host) {
  return http_->bind_to_any_port(host);
}

bool TriageServer::listen_after_bind() { return http_->listen_after_bind(); }

void TriageServer::stop() {
  if (http_)
    http_->stop();
}

bool TriageServer::running() const { return http_->is_running(); }

void TriageServer::wait_until_ready() const { http_->wait_until_ready(); }

} // namespace taintlens
