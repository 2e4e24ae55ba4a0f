#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "rulegame/engine.hpp"
#include "rulegame/rule_analysis.hpp"
#include "rulegame/rule_parser.hpp"
#include "rulegame/transcript.hpp"

namespace rulegame {

/// An error with an HTTP status for the client.
class ApiError : public std::runtime_error {
public:
  ApiError(int status, const std::string& message) : std::runtime_error(message), status_(status) {}
  int status() const noexcept { return status_; }

private:
  int status_;
};

enum class SessionPhase : std::uint8_t { InProgress, AwaitingGuess, Done };

constexpr std::string_view phase_name(SessionPhase p) noexcept {
  switch (p) {
  case SessionPhase::InProgress: return "IN_PROGRESS";
  case SessionPhase::AwaitingGuess: return "AWAITING_GUESS";
  case SessionPhase::Done: return "DONE";
  }
  return "?";
}

struct ServiceConfig {
  std::filesystem::path rules_dir = "rules";
  std::filesystem::path data_dir = "data";
  EpisodeParams params;
  int default_episodes_target = 10;
  int max_episodes_target = 1000;
};

/// Rule files (`*.rule`) under a directory, keyed by relative path without
/// the extension, e.g. "exhibit1/item1_ltr_any".
inline std::map<std::string, std::filesystem::path> scan_rules(const std::filesystem::path& dir) {
  std::map<std::string, std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".rule") continue;
    auto rel = std::filesystem::relative(entry.path(), dir);
    rel.replace_extension();
    out.emplace(rel.generic_string(), entry.path());
  }
  return out;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Game sessions for interactive clients. Each session is serialized by its
/// own mutex; the rule itself never leaves the server while a session is live.
class SessionService {
public:
  explicit SessionService(ServiceConfig config)
      : config_(std::move(config)), store_(config_.data_dir) {
    config_.params.check();
  }

  const ServiceConfig& config() const noexcept { return config_; }
  TranscriptStore& store() noexcept { return store_; }

  Json list_rules() const {
    Json ids = Json::array();
    for (const auto& [id, path] : scan_rules(config_.rules_dir)) ids.push_back(id);
    return Json{{"rules", ids}};
  }

  Json create_session(const Json& request) {
    if (!request.is_object()) throw ApiError(400, "request body must be a JSON object");
    const bool has_text = request.contains("rule_text"), has_id = request.contains("rule_id");
    if (has_text == has_id) throw ApiError(400, "give exactly one of rule_text or rule_id");

    std::string text;
    if (has_id) {
      const auto id = string_field(request, "rule_id");
      const auto rules = scan_rules(config_.rules_dir);
      auto it = rules.find(id);
      if (it == rules.end()) throw ApiError(404, "unknown rule_id '" + id + "'");
      text = read_text_file(it->second);
    } else {
      text = string_field(request, "rule_text");
    }
    RuleAst rule;
    try {
      rule = parse_rule(text);
    } catch (const ParseError& e) {
      throw ApiError(400, std::string("invalid rule: ") + e.what());
    }

    EpisodeParams params = config_.params;
    if (request.contains("params")) {
      const Json& p = request["params"];
      if (!p.is_object()) throw ApiError(400, "params must be an object");
      params.length = int_field(p, "L", params.length);
      params.k_min = int_field(p, "k_min", params.k_min);
      params.k_max = int_field(p, "k_max", params.k_max);
      params.colors = int_field(p, "C", params.colors);
      try {
        params.check();
      } catch (const std::invalid_argument& e) {
        throw ApiError(400, e.what());
      }
    }
    const auto report = validate(rule, params);
    if (!report.ok) {
      std::string msg = "invalid rule:";
      for (const auto& e : report.errors) msg += " " + e + ";";
      msg.pop_back();
      throw ApiError(400, msg);
    }

    LearnerKind kind = LearnerKind::Human;
    if (request.contains("learner_kind")) {
      try {
        kind = parse_learner_kind(string_field(request, "learner_kind"));
      } catch (const std::invalid_argument& e) {
        throw ApiError(400, e.what());
      }
    }
    const std::string learner =
        request.contains("learner_id") ? string_field(request, "learner_id") : "anonymous";
    const int target = int_field(request, "episodes_target", config_.default_episodes_target);
    if (target < 1 || target > config_.max_episodes_target)
      throw ApiError(400, "episodes_target must be in 1.." +
                              std::to_string(config_.max_episodes_target));
    std::uint64_t seed = 0;
    if (request.contains("seed")) {
      const Json& v = request["seed"];
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw ApiError(400, "seed must be a non-negative integer");
      seed = v.get<std::uint64_t>();
    } else {
      std::random_device rd;
      seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    }

    auto session = std::make_shared<Session>();
    session->header = make_session_record(random_uuid(), kind, learner, rule, params, seed);
    session->rule = rule;
    session->episodes_target = target;
    store_.create_session(session->header);
    start_next_episode(*session);
    {
      std::unique_lock lock(sessions_mutex_);
      sessions_[session->header.session_id] = session;
    }
    std::lock_guard lock(session->mutex);
    return view(*session);
  }

  Json get_session(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    return view(*s);
  }

  Json post_move(const std::string& id, const Json& request) {
    auto s = find(id);
    if (!request.is_object()) throw ApiError(400, "request body must be a JSON object");
    if (!request.contains("position") || !request["position"].is_number_integer())
      throw ApiError(400, "position must be an integer");
    const int position = request["position"].get<int>();
    Bucket bucket;
    try {
      bucket = parse_bucket(string_field(request, "bucket"));
    } catch (const std::invalid_argument& e) {
      throw ApiError(400, e.what());
    }
    std::optional<int> index;
    if (request.contains("attempt_index")) index = int_field(request, "attempt_index", 0);

    std::lock_guard lock(s->mutex);
    if (index) {
      // A retry of the last processed attempt gets the original answer.
      if (*index == s->attempts && s->last_move) return *s->last_move;
      if (*index != s->attempts + 1)
        throw ApiError(409, "attempt_index " + std::to_string(*index) +
                                " out of sequence; next is " + std::to_string(s->attempts + 1));
    }
    if (s->phase != SessionPhase::InProgress)
      throw ApiError(409, "session is " + std::string(phase_name(s->phase)));
    if (!s->state.board.contains(position))
      throw ApiError(422, "position " + std::to_string(position) + " outside 1.." +
                              std::to_string(s->state.board.length()));

    const std::string before = s->state.board.pattern();
    const Outcome outcome = attempt_move(s->state, {position, bucket});
    store_.append_attempt(s->header.session_id,
                          {s->episode, s->state.attempt_count, before, position, bucket,
                           outcome.accepted, outcome.reward});
    ++s->attempts;
    s->reward_sum += outcome.reward;
    if (outcome.status != EpisodeStatus::InProgress) finish_episode(*s);

    Json body = view(*s);
    body["accepted"] = outcome.accepted;
    body["reward"] = outcome.reward;
    body["attempt_index"] = s->attempts;
    body["episode_status"] = upper(status_name(outcome.status));
    s->last_move = body;
    return body;
  }

  Json post_guess(const std::string& id, const Json& request) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (s->header.learner_kind != LearnerKind::Human)
      throw ApiError(409, "guesses are only taken from HUMAN sessions");
    if (s->phase != SessionPhase::AwaitingGuess)
      throw ApiError(409, "session is " + std::string(phase_name(s->phase)));
    if (!request.is_object() || !request.contains("guess_text") || !request["guess_text"].is_string())
      throw ApiError(400, "guess_text must be a string");
    const auto text = request["guess_text"].get<std::string>();
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); }))
      throw ApiError(400, "guess_text is empty");
    store_.append_guess(s->header.session_id, {text, utc_timestamp()});
    s->phase = SessionPhase::Done;
    return view(*s);
  }

  /// Session file; the rule and its hash are blanked until the session is DONE.
  std::string transcript(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    std::string raw = store_.raw(id);
    if (s->phase == SessionPhase::Done) return raw;
    const auto end = raw.find('\n');
    Json header = Json::parse(raw.substr(0, end));
    header["rule_text"] = "";
    header["rule_hash"] = "";
    return header.dump() + raw.substr(end);
  }

private:
  struct Session {
    std::mutex mutex;
    SessionRecord header;
    RuleAst rule;
    EpisodeState state;
    int episode = 0;
    int episodes_completed = 0;
    int episodes_target = 1;
    int attempts = 0; // over the whole session
    int reward_sum = 0;
    SessionPhase phase = SessionPhase::InProgress;
    std::optional<Json> last_move;
  };

  static std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& ch : out) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return out;
  }

  static std::string string_field(const Json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string())
      throw ApiError(400, std::string(key) + " must be a string");
    return j[key].get<std::string>();
  }

  static int int_field(const Json& j, const char* key, int fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number_integer()) throw ApiError(400, std::string(key) + " must be an integer");
    return j[key].get<int>();
  }

  std::shared_ptr<Session> find(const std::string& id) {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ApiError(404, "unknown session '" + id + "'");
    return it->second;
  }

  void start_next_episode(Session& s) {
    ++s.episode;
    s.state = new_episode(s.rule, s.header.params, episode_seed(s.header.master_seed, s.episode));
    // A board with no legal move ends at once.
    if (s.state.status != EpisodeStatus::InProgress) finish_episode(s);
  }

  void finish_episode(Session& s) {
    ++s.episodes_completed;
    if (s.episodes_completed < s.episodes_target)
      start_next_episode(s);
    else
      s.phase = s.header.learner_kind == LearnerKind::Human ? SessionPhase::AwaitingGuess
                                                            : SessionPhase::Done;
  }

  static Json view(const Session& s) {
    const auto& p = s.header.params;
    return Json{{"session_id", s.header.session_id},
                {"learner_kind", learner_kind_name(s.header.learner_kind)},
                {"learner_id", s.header.learner_id},
                {"status", phase_name(s.phase)},
                {"params", {{"L", p.length}, {"k_min", p.k_min}, {"k_max", p.k_max},
                            {"C", p.colors}, {"gamma", p.gamma}}},
                {"episode", s.episode},
                {"episodes_completed", s.episodes_completed},
                {"episodes_target", s.episodes_target},
                {"board", s.state.board.pattern()},
                {"attempts", s.attempts},
                {"next_attempt_index", s.attempts + 1},
                {"reward_sum", s.reward_sum}};
  }

  ServiceConfig config_;
  TranscriptStore store_;
  std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// Registers the `/v1` routes and, when `static_dir` exists, the `/app/`
/// static route.
inline void mount_routes(httplib::Server& server, SessionService& service,
                         const std::optional<std::filesystem::path>& static_dir = std::nullopt) {
  using httplib::Request;
  using httplib::Response;

  auto send = [](Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  auto guarded = [send](auto&& fn) {
    return [send, fn](const Request& req, Response& res) {
      try {
        fn(req, res);
      } catch (const ApiError& e) {
        send(res, e.status(), Json{{"error", e.what()}});
      } catch (const std::exception& e) {
        send(res, 500, Json{{"error", e.what()}});
      }
    };
  };
  auto body_of = [](const Request& req) {
    if (req.body.empty()) return Json::object();
    try {
      return Json::parse(req.body);
    } catch (const nlohmann::json::parse_error&) {
      throw ApiError(400, "request body is not valid JSON");
    }
  };

  server.Get("/v1/rules", guarded([&service, send](const Request&, Response& res) {
               send(res, 200, service.list_rules());
             }));
  server.Post("/v1/sessions", guarded([&service, send, body_of](const Request& req, Response& res) {
                send(res, 201, service.create_session(body_of(req)));
              }));
  server.Get(R"(/v1/sessions/([^/]+))", guarded([&service, send](const Request& req, Response& res) {
               send(res, 200, service.get_session(req.matches[1]));
             }));
  server.Post(R"(/v1/sessions/([^/]+)/moves)",
              guarded([&service, send, body_of](const Request& req, Response& res) {
                send(res, 200, service.post_move(req.matches[1], body_of(req)));
              }));
  server.Post(R"(/v1/sessions/([^/]+)/guess)",
              guarded([&service, send, body_of](const Request& req, Response& res) {
                send(res, 200, service.post_guess(req.matches[1], body_of(req)));
              }));
  server.Get(R"(/v1/sessions/([^/]+)/transcript)",
             guarded([&service](const Request& req, Response& res) {
               res.status = 200;
               res.set_content(service.transcript(req.matches[1]), "application/x-ndjson");
             }));

  if (static_dir && std::filesystem::is_directory(*static_dir)) {
    server.set_mount_point("/app", static_dir->string());
    server.Get("/app", [](const Request&, Response& res) { res.set_redirect("/app/"); });
  }
}

} // namespace rulegame
