#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "rulegame/service.hpp"
#include "temp_dir.hpp"

using namespace rulegame;

namespace {

const std::string kRulesDir = std::string(RULEGAME_SOURCE_DIR) + "/rules";
constexpr const char* kLtr = "order=ltr; bucket=any";

ServiceConfig config_for(const TempDir& dir) {
  ServiceConfig c;
  c.rules_dir = kRulesDir;
  c.data_dir = dir.path() / "data";
  c.params.length = 6;
  c.params.k_min = c.params.k_max = 3;
  return c;
}

int status_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ApiError& e) {
    return e.status();
  }
  return 200;
}

/// Plays leftmost-into-LEFT until the session leaves IN_PROGRESS.
std::vector<Json> play_ltr(SessionService& service, const std::string& id, int max_moves = 1000) {
  std::vector<Json> responses;
  Json s = service.get_session(id);
  while (s["status"] == "IN_PROGRESS" && max_moves-- > 0) {
    const Board b = Board::from_pattern(s["board"].get<std::string>());
    s = service.post_move(id, {{"position", *b.leftmost()}, {"bucket", "LEFT"}});
    responses.push_back(s);
  }
  return responses;
}

} // namespace

TEST(Service, CreateFromRuleId) {
  TempDir dir;
  SessionService service(config_for(dir));
  const Json r = service.create_session(
      {{"rule_id", "exhibit1/item1_ltr_any"}, {"learner_id", "p1"}, {"seed", 3}});
  EXPECT_EQ(r["status"], "IN_PROGRESS");
  EXPECT_EQ(r["board"].get<std::string>().size(), 6u);
  EXPECT_EQ(r["episode"], 1);
  EXPECT_EQ(r["episodes_completed"], 0);
  EXPECT_EQ(r["learner_kind"], "HUMAN");
  EXPECT_TRUE(service.store().exists(r["session_id"]));
}

TEST(Service, CreateErrors) {
  TempDir dir;
  SessionService service(config_for(dir));
  try {
    service.create_session({{"rule_text", "order="}});
    FAIL();
  } catch (const ApiError& e) {
    EXPECT_EQ(e.status(), 400);
    EXPECT_NE(std::string(e.what()).find("line 1, column 7"), std::string::npos);
  }
  EXPECT_EQ(status_of([&] { service.create_session({{"rule_id", "exhibit1/nope"}}); }), 404);
  EXPECT_EQ(status_of([&] { service.create_session({{"rule_id", "../CMakeLists"}}); }), 404);
  EXPECT_EQ(status_of([&] { service.create_session(Json::object()); }), 400);
  EXPECT_EQ(status_of([&] { service.create_session({{"rule_text", kLtr}, {"rule_id", "x"}}); }), 400);
  EXPECT_EQ(status_of([&] {
              service.create_session({{"rule_text", "order=any; bucket=any; when at(9, red) then move=1, bucket=left"}});
            }),
            400); // position outside 1..6
  EXPECT_EQ(status_of([&] { service.create_session({{"rule_text", kLtr}, {"episodes_target", 0}}); }), 400);
  EXPECT_EQ(status_of([&] { service.create_session({{"rule_text", kLtr}, {"learner_kind", "ROBOT"}}); }), 400);
  EXPECT_EQ(status_of([&] { service.create_session({{"rule_text", kLtr}, {"params", {{"k_max", 9}}}}); }), 400);
}

TEST(Service, SameSeedSameFirstBoard) {
  TempDir dir;
  SessionService service(config_for(dir));
  const Json a = service.create_session({{"rule_text", kLtr}, {"seed", 77}});
  const Json b = service.create_session({{"rule_id", "exhibit1/item1_ltr_any"}, {"seed", 77}});
  EXPECT_EQ(a["board"], b["board"]);
  EXPECT_NE(a["session_id"], b["session_id"]);
}

TEST(Service, MoveOutcomes) {
  TempDir dir;
  SessionService service(config_for(dir));
  const Json s = service.create_session({{"rule_text", kLtr}, {"seed", 5}});
  const std::string id = s["session_id"];
  const Board b = Board::from_pattern(s["board"].get<std::string>());
  const Json bad = service.post_move(id, {{"position", *b.rightmost()}, {"bucket", "right"}});
  EXPECT_EQ(bad["accepted"], false);
  EXPECT_EQ(bad["reward"], -1);
  EXPECT_EQ(bad["board"], s["board"]);
  EXPECT_EQ(bad["episode_status"], "IN_PROGRESS");
  const Json good = service.post_move(id, {{"position", *b.leftmost()}, {"bucket", "left"}});
  EXPECT_EQ(good["accepted"], true);
  EXPECT_EQ(good["reward"], 1);
  EXPECT_EQ(good["reward_sum"], 0);
  EXPECT_EQ(status_of([&] { service.post_move(id, {{"position", 7}, {"bucket", "left"}}); }), 422);
  EXPECT_EQ(status_of([&] { service.post_move(id, {{"position", 0}, {"bucket", "left"}}); }), 422);
  EXPECT_EQ(status_of([&] { service.post_move(id, {{"position", 1}, {"bucket", "up"}}); }), 400);
  EXPECT_EQ(status_of([&] { service.post_move(id, {{"position", "1"}, {"bucket", "left"}}); }), 400);
  EXPECT_EQ(status_of([&] { service.post_move("missing", {{"position", 1}, {"bucket", "left"}}); }), 404);
  const Json empty_cell = service.post_move(id, {{"position", *b.leftmost()}, {"bucket", "left"}});
  EXPECT_EQ(empty_cell["accepted"], false);
}

TEST(Service, HumanLifecycle) {
  TempDir dir;
  SessionService service(config_for(dir));
  const Json s = service.create_session({{"rule_text", kLtr}, {"episodes_target", 3}, {"seed", 11}});
  const std::string id = s["session_id"];
  EXPECT_EQ(status_of([&] { service.post_guess(id, {{"guess_text", "early"}}); }), 409);
  const auto responses = play_ltr(service, id);
  ASSERT_EQ(responses.back()["status"], "AWAITING_GUESS");
  EXPECT_EQ(responses.back()["episodes_completed"], 3);
  int cleared = 0;
  for (const auto& r : responses) cleared += r["episode_status"] == "CLEARED";
  EXPECT_EQ(cleared, 3);
  EXPECT_EQ(status_of([&] { service.post_move(id, {{"position", 1}, {"bucket", "left"}}); }), 409);
  EXPECT_EQ(status_of([&] { service.post_guess(id, {{"guess_text", "   "}}); }), 400);
  EXPECT_EQ(status_of([&] { service.post_guess(id, Json::object()); }), 400);
  const Json done = service.post_guess(id, {{"guess_text", "always the leftmost block"}});
  EXPECT_EQ(done["status"], "DONE");
  EXPECT_EQ(status_of([&] { service.post_move(id, {{"position", 1}, {"bucket", "left"}}); }), 409);
  EXPECT_EQ(status_of([&] { service.post_guess(id, {{"guess_text", "again"}}); }), 409);

  const std::string text = service.transcript(id);
  EXPECT_NE(text.find("always the leftmost block"), std::string::npos);
  const Transcript t = parse_transcript(text);
  EXPECT_EQ(t.header.rule_text, kLtr);
  EXPECT_EQ(t.attempts.size(), responses.size());
  const auto report = replay(t);
  EXPECT_TRUE(report.ok());
  EXPECT_EQ(report.episodes, 3);
  EXPECT_EQ(export_curve(t).episodes.size(), 3u);
}

TEST(Service, MachineLifecycleSkipsGuess) {
  TempDir dir;
  SessionService service(config_for(dir));
  const Json s = service.create_session(
      {{"rule_text", kLtr}, {"learner_kind", "MACHINE"}, {"episodes_target", 2}});
  const std::string id = s["session_id"];
  EXPECT_EQ(status_of([&] { service.post_guess(id, {{"guess_text", "x"}}); }), 409);
  std::vector<std::string> phases;
  for (const auto& r : play_ltr(service, id)) phases.push_back(r["status"]);
  EXPECT_EQ(phases.back(), "DONE");
  EXPECT_EQ(std::count(phases.begin(), phases.end(), "DONE"), 1);
  EXPECT_EQ(status_of([&] { service.post_guess(id, {{"guess_text", "x"}}); }), 409);
  EXPECT_TRUE(replay(parse_transcript(service.transcript(id))).ok());
}

TEST(Service, RetriesAreIdempotent) {
  TempDir dir;
  SessionService service(config_for(dir));
  const Json s = service.create_session({{"rule_text", kLtr}, {"seed", 2}});
  const std::string id = s["session_id"];
  const Board b = Board::from_pattern(s["board"].get<std::string>());
  const Json move{{"position", *b.rightmost()}, {"bucket", "left"}, {"attempt_index", 1}};
  const Json first = service.post_move(id, move);
  const Json retry = service.post_move(id, move);
  EXPECT_EQ(first, retry);
  EXPECT_EQ(status_of([&] {
              service.post_move(id, {{"position", 1}, {"bucket", "left"}, {"attempt_index", 3}});
            }),
            409);
  EXPECT_EQ(status_of([&] {
              service.post_move(id, {{"position", 1}, {"bucket", "left"}, {"attempt_index", 0}});
            }),
            409);
  const Json second =
      service.post_move(id, {{"position", *b.leftmost()}, {"bucket", "left"}, {"attempt_index", 2}});
  EXPECT_EQ(second["attempt_index"], 2);
  EXPECT_EQ(service.store().read(id).attempts.size(), 2u);
}

TEST(Service, ConcurrentRetriesPersistEachAttemptOnce) {
  TempDir dir;
  SessionService service(config_for(dir));
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i)
    ids.push_back(service.create_session({{"rule_text", kLtr}, {"episodes_target", 50},
                                          {"learner_kind", "MACHINE"}})["session_id"]);
  std::atomic<int> accepted_2xx{0};
  std::vector<std::jthread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      const std::string& id = ids[static_cast<std::size_t>(t % 4)];
      for (int k = 0; k < 60; ++k) {
        Json s = service.get_session(id);
        if (s["status"] != "IN_PROGRESS") return;
        const Board b = Board::from_pattern(s["board"].get<std::string>());
        // Two threads race on the same index; one wins, the loser sees a
        // cached answer or a conflict.
        const int index = s["next_attempt_index"];
        try {
          const Json r = service.post_move(
              id, {{"position", *b.leftmost()}, {"bucket", "left"}, {"attempt_index", index}});
          if (r["attempt_index"] == index) ++accepted_2xx;
        } catch (const ApiError& e) {
          EXPECT_EQ(e.status(), 409);
        }
      }
    });
  threads.clear();
  std::size_t persisted = 0;
  for (const auto& id : ids) {
    const auto t = service.store().read(id);
    persisted += t.attempts.size();
    EXPECT_TRUE(replay(t).ok());
    EXPECT_EQ(service.get_session(id)["attempts"].get<std::size_t>(), t.attempts.size());
  }
  // Every distinct attempt index answered with 2xx is one record; retries of
  // the same index may be answered twice from the cache.
  EXPECT_GE(static_cast<std::size_t>(accepted_2xx.load()), persisted);
}

TEST(Service, HiddenRuleNeverLeaksWhileLive) {
  TempDir dir;
  SessionService service(config_for(dir));
  const std::string rule_text = "order=any; bucket=map(yellow:right, default:left); "
                                "when at(2, blue) then move=1, bucket=right";
  const std::string canonical = canonical_form(parse_rule(rule_text));
  std::vector<std::string> seen;
  const Json s = service.create_session({{"rule_text", rule_text}, {"episodes_target", 2}, {"seed", 8}});
  const std::string id = s["session_id"];
  seen.push_back(s.dump());
  seen.push_back(service.list_rules().dump());
  SplitMix64 rng(1);
  for (int i = 0; i < 200; ++i) {
    Json cur = service.get_session(id);
    seen.push_back(cur.dump());
    if (cur["status"] != "IN_PROGRESS") break;
    const Board b = Board::from_pattern(cur["board"].get<std::string>());
    std::vector<int> occupied;
    for (int p = 1; p <= b.length(); ++p)
      if (b.at(p)) occupied.push_back(p);
    seen.push_back(service.post_move(id, {{"position", occupied[rng.below(occupied.size())]},
                                          {"bucket", rng.below(2) ? "left" : "right"}})
                       .dump());
    seen.push_back(service.transcript(id));
  }
  ASSERT_EQ(service.get_session(id)["status"], "AWAITING_GUESS");
  seen.push_back(service.transcript(id));
  for (const auto& text : seen) {
    EXPECT_EQ(text.find(canonical), std::string::npos);
    EXPECT_EQ(text.find(rule_text), std::string::npos);
    EXPECT_EQ(text.find(rule_hash(canonical)), std::string::npos);
    EXPECT_EQ(text.find("yellow"), std::string::npos);
  }
  service.post_guess(id, {{"guess_text", "no idea"}});
  EXPECT_NE(service.transcript(id).find(canonical), std::string::npos);
}

TEST(Service, HttpRoutes) {
  TempDir dir;
  std::filesystem::create_directories(dir.path() / "app");
  std::ofstream(dir.path() / "app" / "index.html") << "<!doctype html><title>play</title>";
  SessionService service(config_for(dir));
  httplib::Server server;
  mount_routes(server, service, dir.path() / "app");
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::jthread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  auto rules = client.Get("/v1/rules");
  ASSERT_TRUE(rules);
  EXPECT_EQ(rules->status, 200);
  const Json ids = Json::parse(rules->body)["rules"];
  EXPECT_NE(std::find(ids.begin(), ids.end(), "exhibit1/item5_red_seventh_third"), ids.end());
  EXPECT_EQ(rules->body.find("order="), std::string::npos);

  auto created = client.Post("/v1/sessions",
                             Json{{"rule_id", "exhibit1/item1_ltr_any"}, {"episodes_target", 1}}.dump(),
                             "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  const Json s = Json::parse(created->body);
  const std::string id = s["session_id"];
  EXPECT_EQ(client.Post("/v1/sessions", "{not json", "application/json")->status, 400);
  EXPECT_EQ(client.Post("/v1/sessions", R"({"rule_text":"order=sideways"})", "application/json")->status, 400);
  EXPECT_EQ(client.Post("/v1/sessions", R"({"rule_id":"nope"})", "application/json")->status, 404);

  EXPECT_EQ(client.Get("/v1/sessions/" + id)->status, 200);
  EXPECT_EQ(client.Get("/v1/sessions/unknown")->status, 404);
  EXPECT_EQ(client.Get("/v1/sessions/unknown/transcript")->status, 404);
  EXPECT_EQ(client.Post("/v1/sessions/" + id + "/moves", R"({"position":99,"bucket":"left"})",
                        "application/json")->status, 422);
  EXPECT_EQ(client.Post("/v1/sessions/unknown/moves", R"({"position":1,"bucket":"left"})",
                        "application/json")->status, 404);

  Json cur = s;
  while (cur["status"] == "IN_PROGRESS") {
    const Board b = Board::from_pattern(cur["board"].get<std::string>());
    auto r = client.Post("/v1/sessions/" + id + "/moves",
                         Json{{"position", *b.leftmost()}, {"bucket", "left"}}.dump(), "application/json");
    ASSERT_EQ(r->status, 200);
    cur = Json::parse(r->body);
    EXPECT_EQ(cur["accepted"], true);
  }
  EXPECT_EQ(client.Post("/v1/sessions/" + id + "/moves", R"({"position":1,"bucket":"left"})",
                        "application/json")->status, 409);
  auto live = client.Get("/v1/sessions/" + id + "/transcript");
  EXPECT_EQ(live->status, 200);
  EXPECT_EQ(live->body.find("order=ltr"), std::string::npos);
  EXPECT_EQ(client.Post("/v1/sessions/" + id + "/guess", R"({"guess_text":""})", "application/json")->status, 400);
  EXPECT_EQ(client.Post("/v1/sessions/" + id + "/guess", R"({"guess_text":"left first"})",
                        "application/json")->status, 200);
  auto full = client.Get("/v1/sessions/" + id + "/transcript");
  EXPECT_TRUE(replay(parse_transcript(full->body)).ok());
  EXPECT_NE(full->body.find("left first"), std::string::npos);

  auto app = client.Get("/app/");
  ASSERT_TRUE(app);
  EXPECT_EQ(app->status, 200);
  EXPECT_NE(app->body.find("<title>play</title>"), std::string::npos);
  EXPECT_EQ(client.Get("/app/missing.js")->status, 404);
  server.stop();
}
