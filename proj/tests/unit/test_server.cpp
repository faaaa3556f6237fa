#include <doctest.h>

#include "taintlens/json_io.hpp"
#include "taintlens/server.hpp"
#include "taintlens/util.hpp"
#include "test_support.hpp"

#include <httplib.h>

#include <algorithm>
#include <thread>

using namespace taintlens;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

TaintSpec source(std::string method) {
  return {SpecNodeType::ReturnValue, tl_test::api("a.io", "In", std::move(method), {}),
          Role::Source, Cwe::Cwe22};
}

TaintSpec sink() {
  auto api = tl_test::api("java.io", "File", "<init>");
  api.position = 0;
  return {SpecNodeType::Argument, api, Role::Sink, Cwe::Cwe22};
}

// Three alerts; the first two end at the same sink.
std::vector<Alert> sample_alerts() {
  auto g = tl_test::chain_graph(6, {{0, 2}, {1, 2}, {2, 4}, {3, 5}});
  std::vector<Alert> out;
  out.push_back(make_alert("demo", {{NodeId{1}, NodeId{3}, NodeId{5}}, source("read"), sink(),
                                    Cwe::Cwe22}, g));
  out.push_back(make_alert("demo", {{NodeId{2}, NodeId{3}, NodeId{5}}, source("line"), sink(),
                                    Cwe::Cwe22}, g));
  out.push_back(make_alert("demo", {{NodeId{4}, NodeId{6}}, source("read"), sink(), Cwe::Cwe22},
                           g));
  return out;
}

void write_results(const fs::path &dir, const std::vector<Alert> &alerts) {
  AlertsFile f;
  f.project = "demo";
  f.alerts = alerts;
  fs::create_directories(dir / "demo");
  write_file_atomic(dir / "demo" / "filtered_alerts.json", alerts_file_to_text(f));
}

struct Running {
  explicit Running(const fs::path &dir) : server(dir) {
    port = server.bind_any("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~Running() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(5, 0);
    return c;
  }
  TriageServer server;
  int port = -1;
  std::thread thread;
};

json post(httplib::Client &c, const std::string &path, const std::string &body, int expect) {
  auto res = c.Post(path, body, "application/json");
  REQUIRE(res);
  CHECK(res->status == expect);
  return json::parse(res->body);
}

} // namespace

TEST_CASE("triage API over HTTP") {
  tl_test::TempDir tmp;
  auto alerts = sample_alerts();
  write_results(tmp.path(), alerts);
  const auto &a = alerts[0], &b = alerts[1], &c = alerts[2];
  REQUIRE(sink_key(a) == sink_key(b));
  REQUIRE(sink_key(a) != sink_key(c));
  REQUIRE(source_key(a) != source_key(c));

  {
    Running srv(tmp.path());
    auto cli = srv.client();

    auto res = cli.Get("/api/alerts");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto list = json::parse(res->body);
    CHECK(list["alerts"].size() == 3);
    CHECK(list["counts"]["total"] == 3);
    CHECK(list["counts"]["unreviewed"] == 3);
    CHECK(list["groups"].size() == 2);
    bool shared = false;
    for (const auto &g : list["groups"])
      if (g["sink_key"] == sink_key(a)) {
        auto ids = g["alert_ids"].get<std::vector<std::string>>();
        std::sort(ids.begin(), ids.end());
        std::vector<std::string> want{a.id, b.id};
        std::sort(want.begin(), want.end());
        CHECK(ids == want);
        shared = true;
      }
    CHECK(shared);

    auto one = post(cli, "/api/alerts/" + c.id + "/triage", R"({"triage": "FalsePositive"})", 200);
    CHECK(one["id"] == c.id);
    CHECK(one["triage"] == "FalsePositive");

    auto sim = post(cli, "/api/alerts/" + a.id + "/mark-similar",
                    R"({"triage": "TruePositive", "by": "sink"})", 200);
    CHECK(sim["updated"].size() == 2);

    // by source only touches the anchor here
    sim = post(cli, "/api/alerts/" + c.id + "/mark-similar",
               R"({"triage": "FalsePositive", "by": "source"})", 200);
    CHECK(sim["updated"] == json::array({c.id}));

    res = cli.Get("/api/alerts");
    list = json::parse(res->body);
    CHECK(list["counts"]["true_positive"] == 2);
    CHECK(list["counts"]["false_positive"] == 1);
    CHECK(list["counts"]["unreviewed"] == 0);

    // errors
    post(cli, "/api/alerts/nope/triage", R"({"triage": "FalsePositive"})", 404);
    post(cli, "/api/alerts/nope/mark-similar", R"({"triage": "FalsePositive", "by": "sink"})",
         404);
    post(cli, "/api/alerts/" + a.id + "/triage", "not json", 400);
    post(cli, "/api/alerts/" + a.id + "/triage", R"({"triage": "Maybe"})", 400);
    post(cli, "/api/alerts/" + a.id + "/mark-similar", R"({"triage": "TruePositive"})", 400);
    post(cli, "/api/alerts/" + a.id + "/mark-similar",
         R"({"triage": "TruePositive", "by": "cwe"})", 400);

    res = cli.Get("/api/export");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto exported = json::parse(res->body)["alerts"];
    REQUIRE(exported.size() == 3);
    for (const auto &aj : exported) {
      auto back = alert_from_json(aj);
      auto orig = std::find_if(alerts.begin(), alerts.end(),
                               [&](const Alert &x) { return x.id == back.id; });
      REQUIRE(orig != alerts.end());
      CHECK(back.path == orig->path);
      CHECK(back.steps == orig->steps);
      CHECK(back.triage == (back.id == c.id ? Triage::FalsePositive : Triage::TruePositive));
    }
  }

  // state survives a restart
  REQUIRE(fs::exists(tmp.path() / "triage_state.json"));
  TriageStore again(tmp.path());
  CHECK(again.size() == 3);
  auto list = again.list();
  CHECK(list["counts"]["true_positive"] == 2);
  CHECK(list["counts"]["false_positive"] == 1);
}

TEST_CASE("store falls back to raw alerts") {
  tl_test::TempDir tmp;
  AlertsFile f;
  f.project = "demo";
  f.alerts = sample_alerts();
  write_file_atomic(tmp.path() / "alerts.json", alerts_file_to_text(f));
  TriageStore store(tmp.path());
  CHECK(store.size() == 3);
  CHECK_FALSE(store.set_triage("missing", Triage::TruePositive));
  CHECK_FALSE(store.mark_similar("missing", true, Triage::TruePositive));
}
