#include <atomic>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "ncd/corpus.hpp"
#include "ncd/record_io.hpp"
#include "ncd/service.hpp"

using namespace ncd;
using namespace ncd::service;

namespace {

std::map<std::string, std::shared_ptr<const agent::AgentModel>> checkpoints() {
  auto model = agent::AgentModel::make(agent::AgentConfig{});
  Rng rng(1);
  for (auto& t : model.policy.theta) t = uniform01(rng) - 0.5;
  return {{"default", std::make_shared<const agent::AgentModel>(std::move(model))}};
}

// A live server on an ephemeral port for the lifetime of the fixture.
struct LiveServer {
  SessionManager manager{checkpoints(), ServiceConfig{}};
  httplib::Server server;
  std::thread thread;
  int port = 0;

  LiveServer() {
    register_routes(server, manager);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LiveServer() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

json post(httplib::Client& c, const std::string& path, const json& body, int expected) {
  const auto res = c.Post(path, body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == expected);
  return json::parse(res->body);
}

}  // namespace

TEST_CASE("a full game over HTTP") {
  LiveServer live;
  auto c = live.client();
  const auto created = post(c, "/sessions", {{"seed", 7}, {"role", "deceive"}}, 201);
  CHECK(created["state"] == "awaiting_answer");
  CHECK(created["round"] == 1);
  CHECK(created["question"]["text"].get<std::string>().rfind("Is the object", 0) == 0);
  CHECK(created["belief"].size() == 4);
  CHECK(created["scene"]["descriptions"].size() == 4);
  const std::string id = created["session_id"];

  json last;
  for (int round = 1; round <= 5; ++round) {
    last = post(c, "/sessions/" + id + "/answer", {{"answer", "no"}, {"round", round}}, 200);
    CHECK(last["transcript"].size() == static_cast<std::size_t>(round));
  }
  CHECK(last["state"] == "finished");
  const auto& result = last["result"];
  CHECK(result["human_won"] == (result["object_guess"] != result["goal"]));

  const auto again = post(c, "/sessions/" + id + "/answer", {{"answer", "yes"}}, 409);
  CHECK(again["code"] == "finished");

  const auto got = c.Get("/sessions/" + id);
  REQUIRE(got);
  CHECK(got->status == 200);
  CHECK(json::parse(got->body) == last);

  const auto logs = c.Get("/logs");
  REQUIRE(logs);
  CHECK(logs->get_header_value("Content-Type") == "application/x-ndjson");
  std::istringstream in(logs->body);
  const auto records = io::read_jsonl(in);
  REQUIRE(records.size() == 1);
  CHECK(records[0].strategy_tag == "human:deceive");
  CHECK(records[0].coop_label == game::CoopLabel::kNC);
  CHECK(records[0].turns.size() == 5);
  const auto stats = corpus::compute_corpus_stats(records);
  CHECK(stats.n_games == 1);
  CHECK(stats.spam_fraction == 1.0);
}

TEST_CASE("request errors") {
  LiveServer live;
  auto c = live.client();
  CHECK(post(c, "/sessions", {{"checkpoint", "nope"}}, 404)["code"] == "unknown_checkpoint");
  CHECK(post(c, "/sessions", {{"role", "villain"}}, 400)["code"] == "invalid_role");
  CHECK(post(c, "/sessions", {{"n_objects", 9}}, 400)["code"] == "invalid_field");
  CHECK(post(c, "/sessions/0123abcd/answer", {{"answer", "yes"}}, 404)["code"] ==
        "not_found");
  const auto missing = c.Get("/sessions/0123abcd");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  const std::string id = post(c, "/sessions", json::object(), 201)["session_id"];
  CHECK(post(c, "/sessions/" + id + "/answer", {{"answer", "maybe"}}, 400)["code"] ==
        "invalid_answer");
  CHECK(post(c, "/sessions/" + id + "/answer", {{"answer", "yes"}, {"round", 3}}, 409)
            ["code"] == "round_mismatch");
  const auto bad_json = c.Post("/sessions", "{not json", "application/json");
  REQUIRE(bad_json);
  CHECK(bad_json->status == 400);
}

TEST_CASE("concurrent answers for one round: exactly one wins") {
  LiveServer live;
  auto c = live.client();
  const std::string id = post(c, "/sessions", {{"seed", 3}}, 201)["session_id"];
  std::atomic<int> ok{0}, conflict{0}, other{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] {
      auto tc = live.client();
      const auto res = tc.Post("/sessions/" + id + "/answer",
                               json{{"answer", "yes"}, {"round", 1}}.dump(),
                               "application/json");
      if (res && res->status == 200) {
        ++ok;
      } else if (res && res->status == 409) {
        ++conflict;
      } else {
        ++other;
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(ok == 1);
  CHECK(conflict == 7);
  CHECK(other == 0);
  const auto state = json::parse(c.Get("/sessions/" + id)->body);
  CHECK(state["transcript"].size() == 1);
  CHECK(state["round"] == 2);
}

TEST_CASE("the answer changes the belief when the question splits the scene") {
  SessionManager manager(checkpoints(), ServiceConfig{});
  int informative = 0;
  for (int seed = 1; seed <= 20; ++seed) {
    const auto a = manager.create_session({{"seed", seed}});
    const auto b = manager.create_session({{"seed", seed}});
    CHECK(a["scene"] == b["scene"]);
    CHECK(a["question"] == b["question"]);
    const auto scene = io::scene_from_json(a["scene"]);
    const game::Question q{game::parse_attribute(a["question"]["attribute"]),
                           a["question"]["value"].get<int>()};
    bool splits = false;
    for (int k = 1; k < scene.n_objects(); ++k) {
      splits |= game::truth_answer(scene, k, q) != game::truth_answer(scene, 0, q);
    }
    const auto after_yes = manager.post_answer(a["session_id"], {{"answer", "yes"}});
    const auto after_no = manager.post_answer(b["session_id"], {{"answer", "no"}});
    if (splits) {
      ++informative;
      CHECK(after_yes["belief"] != after_no["belief"]);
    } else {
      CHECK(after_yes["belief"] == after_no["belief"]);
    }
  }
  CHECK(informative > 0);
}

TEST_CASE("cooperative role and a lower round cap") {
  ServiceConfig cfg;
  cfg.max_rounds = 2;
  SessionManager manager(checkpoints(), cfg);
  const auto s = manager.create_session({{"role", "cooperate"}, {"n_objects", 3}});
  CHECK(s["max_rounds"] == 2);
  CHECK(s["belief"].size() == 3);
  manager.post_answer(s["session_id"], {{"answer", "na"}});
  const auto done = manager.post_answer(s["session_id"], {{"answer", "na"}});
  CHECK(done["state"] == "finished");
  const auto& r = done["result"];
  CHECK(r["human_won"] == (r["object_guess"] == r["goal"]));
  std::istringstream in(manager.logs());
  const auto records = io::read_jsonl(in);
  REQUIRE(records.size() == 1);
  CHECK(records[0].coop_label == game::CoopLabel::kCP);
  CHECK(records[0].strategy_tag == "human:cooperate");

  cfg.max_rounds = 9;
  CHECK_THROWS_AS(SessionManager(checkpoints(), cfg), ConfigError);
}
