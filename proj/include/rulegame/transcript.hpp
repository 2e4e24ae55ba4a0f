#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "rulegame/engine.hpp"
#include "rulegame/harness.hpp"
#include "rulegame/rule_analysis.hpp"
#include "rulegame/rule_parser.hpp"

namespace rulegame {

using Json = nlohmann::ordered_json;

enum class LearnerKind : std::uint8_t { Machine, Human };

constexpr std::string_view learner_kind_name(LearnerKind k) noexcept {
  return k == LearnerKind::Machine ? "MACHINE" : "HUMAN";
}

inline LearnerKind parse_learner_kind(std::string_view text) {
  if (text == "MACHINE") return LearnerKind::Machine;
  if (text == "HUMAN") return LearnerKind::Human;
  throw std::invalid_argument("unknown learner kind '" + std::string(text) + "'");
}

inline Bucket parse_bucket(std::string_view text) {
  std::string lower(text);
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "left") return Bucket::Left;
  if (lower == "right") return Bucket::Right;
  throw std::invalid_argument("bucket must be left or right, got '" + std::string(text) + "'");
}

/// Lowercase hex SHA-256.
inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int size = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &size, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < size; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

inline std::string rule_hash(std::string_view canonical_text) { return sha256_hex(canonical_text); }

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

inline std::string format_uuid(std::array<unsigned char, 16> b) {
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < 16; ++i) {
    if (i == 4 || i == 6 || i == 8 || i == 10) out += '-';
    out += hex[b[i] >> 4];
    out += hex[b[i] & 0xf];
  }
  return out;
}

} // namespace detail

/// Random (version 4) UUID.
inline std::string random_uuid() {
  static thread_local std::mt19937_64 gen{std::random_device{}()};
  std::array<unsigned char, 16> b{};
  for (std::size_t i = 0; i < 16; i += 8) {
    const std::uint64_t v = gen();
    for (std::size_t j = 0; j < 8; ++j) b[i + j] = static_cast<unsigned char>(v >> (8 * j));
  }
  b[6] = static_cast<unsigned char>((b[6] & 0x0f) | 0x40);
  b[8] = static_cast<unsigned char>((b[8] & 0x3f) | 0x80);
  return detail::format_uuid(b);
}

/// Name-based UUID (version 8 layout over a SHA-256 of `name`), so machine
/// runs get the same session ids every time.
inline std::string name_uuid(std::string_view name) {
  const std::string digest = sha256_hex(name);
  std::array<unsigned char, 16> b{};
  for (std::size_t i = 0; i < 16; ++i)
    b[i] = static_cast<unsigned char>(std::stoi(digest.substr(2 * i, 2), nullptr, 16));
  b[6] = static_cast<unsigned char>((b[6] & 0x0f) | 0x80);
  b[8] = static_cast<unsigned char>((b[8] & 0x3f) | 0x80);
  return detail::format_uuid(b);
}

// ---------------------------------------------------------------------------
// Records

struct SessionRecord {
  std::string session_id;
  LearnerKind learner_kind = LearnerKind::Machine;
  std::string learner_id;
  std::string rule_text; // canonical
  std::string rule_hash;
  EpisodeParams params;
  std::uint64_t master_seed = 0;
  std::string created_at;

  friend bool operator==(const SessionRecord&, const SessionRecord&) = default;
};

struct AttemptRecord {
  int episode = 1;
  int attempt = 1; // 1-based within the episode
  std::string board_before;
  int position = 1;
  Bucket bucket = Bucket::Left;
  bool accepted = false;
  int reward = -1;

  friend bool operator==(const AttemptRecord&, const AttemptRecord&) = default;
};

struct GuessRecord {
  std::string guess_text;
  std::string submitted_at;

  friend bool operator==(const GuessRecord&, const GuessRecord&) = default;
};

struct Transcript {
  SessionRecord header;
  std::vector<AttemptRecord> attempts;
  std::vector<GuessRecord> guesses;
};

/// Builds a header for `rule`; the id is left to the caller.
inline SessionRecord make_session_record(std::string session_id, LearnerKind kind,
                                         std::string learner_id, const RuleAst& rule,
                                         const EpisodeParams& params, std::uint64_t master_seed) {
  SessionRecord r;
  r.session_id = std::move(session_id);
  r.learner_kind = kind;
  r.learner_id = std::move(learner_id);
  r.rule_text = canonical_form(rule);
  r.rule_hash = rule_hash(r.rule_text);
  r.params = params;
  r.master_seed = master_seed;
  r.created_at = utc_timestamp();
  return r;
}

inline Json to_json(const SessionRecord& r) {
  return Json{{"session_id", r.session_id},
              {"learner_kind", learner_kind_name(r.learner_kind)},
              {"learner_id", r.learner_id},
              {"rule_text", r.rule_text},
              {"rule_hash", r.rule_hash},
              {"L", r.params.length},
              {"k_min", r.params.k_min},
              {"k_max", r.params.k_max},
              {"C", r.params.colors},
              {"gamma", r.params.gamma},
              {"master_seed", r.master_seed},
              {"created_at", r.created_at}};
}

inline Json to_json(const AttemptRecord& r) {
  return Json{{"episode", r.episode},         {"attempt", r.attempt},
              {"board_before", r.board_before}, {"position", r.position},
              {"bucket", bucket_name(r.bucket)}, {"accepted", r.accepted},
              {"reward", r.reward}};
}

inline Json to_json(const GuessRecord& r) {
  return Json{{"guess_text", r.guess_text}, {"submitted_at", r.submitted_at}};
}

class MalformedRecord : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class UnknownSession : public std::out_of_range {
public:
  explicit UnknownSession(const std::string& id) : std::out_of_range("unknown session " + id) {}
};

inline SessionRecord session_from_json(const Json& j) {
  try {
    SessionRecord r;
    r.session_id = j.at("session_id").get<std::string>();
    r.learner_kind = parse_learner_kind(j.at("learner_kind").get<std::string>());
    r.learner_id = j.at("learner_id").get<std::string>();
    r.rule_text = j.at("rule_text").get<std::string>();
    r.rule_hash = j.at("rule_hash").get<std::string>();
    r.params.length = j.at("L").get<int>();
    r.params.k_min = j.at("k_min").get<int>();
    r.params.k_max = j.at("k_max").get<int>();
    r.params.colors = j.at("C").get<int>();
    r.params.gamma = j.at("gamma").get<double>();
    r.master_seed = j.at("master_seed").get<std::uint64_t>();
    r.created_at = j.value("created_at", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedRecord(std::string("session header: ") + e.what());
  }
}

inline AttemptRecord attempt_from_json(const Json& j) {
  try {
    AttemptRecord r;
    r.episode = j.at("episode").get<int>();
    r.attempt = j.at("attempt").get<int>();
    r.board_before = j.at("board_before").get<std::string>();
    r.position = j.at("position").get<int>();
    r.bucket = parse_bucket(j.at("bucket").get<std::string>());
    r.accepted = j.at("accepted").get<bool>();
    r.reward = j.at("reward").get<int>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedRecord(std::string("attempt: ") + e.what());
  }
}

inline GuessRecord guess_from_json(const Json& j) {
  try {
    return {j.at("guess_text").get<std::string>(), j.value("submitted_at", "")};
  } catch (const nlohmann::json::exception& e) {
    throw MalformedRecord(std::string("guess: ") + e.what());
  }
}

/// Throws MalformedRecord unless `r` is self-consistent for boards of `length`.
inline void check_attempt(const AttemptRecord& r, int length) {
  if (r.episode < 1 || r.attempt < 1) throw MalformedRecord("episode and attempt must be >= 1");
  if (r.reward != (r.accepted ? 1 : -1))
    throw MalformedRecord("reward " + std::to_string(r.reward) + " inconsistent with accepted=" +
                          (r.accepted ? "true" : "false"));
  if (static_cast<int>(r.board_before.size()) != length)
    throw MalformedRecord("board_before has length " + std::to_string(r.board_before.size()) +
                          ", expected " + std::to_string(length));
  try {
    Board::from_pattern(r.board_before);
  } catch (const std::invalid_argument& e) {
    throw MalformedRecord(e.what());
  }
  if (r.position < 1 || r.position > length)
    throw MalformedRecord("position " + std::to_string(r.position) + " outside 1.." +
                          std::to_string(length));
}

/// Parses one session file. Attempts are not re-validated so tampered files
/// still load for replay.
inline Transcript parse_transcript(std::string_view content) {
  Transcript t;
  std::istringstream in{std::string(content)};
  std::string line;
  bool first = true;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw MalformedRecord("line " + std::to_string(number) + ": " + e.what());
    }
    if (first) {
      t.header = session_from_json(j);
      first = false;
    } else if (j.contains("guess_text")) {
      t.guesses.push_back(guess_from_json(j));
    } else {
      if (!t.guesses.empty()) throw MalformedRecord("attempt after guess");
      t.attempts.push_back(attempt_from_json(j));
    }
  }
  if (first) throw MalformedRecord("empty session file");
  return t;
}

/// Drops created_at and submitted_at so files compare byte for byte.
inline std::string strip_timestamps(std::string_view content) {
  std::istringstream in{std::string(content)};
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json j = Json::parse(line);
    j.erase("created_at");
    j.erase("submitted_at");
    out += j.dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Store

/// One `<session_id>.jsonl` file per session under a directory.
/// Appends are serialized per store; a session has one writer at a time.
class TranscriptStore {
public:
  explicit TranscriptStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& directory() const noexcept { return dir_; }

  std::filesystem::path path_of(const std::string& session_id) const {
    if (session_id.empty() || session_id.find_first_of("/\\.") != std::string::npos)
      throw UnknownSession(session_id);
    return dir_ / (session_id + ".jsonl");
  }

  bool exists(const std::string& session_id) const {
    try {
      return std::filesystem::exists(path_of(session_id));
    } catch (const UnknownSession&) {
      return false;
    }
  }

  /// Writes the header line. Throws if the id is taken.
  void create_session(const SessionRecord& header) {
    std::lock_guard lock(mutex_);
    const auto path = path_of(header.session_id);
    if (std::filesystem::exists(path))
      throw std::invalid_argument("session " + header.session_id + " already exists");
    if (header.rule_hash != rule_hash(header.rule_text))
      throw MalformedRecord("rule_hash does not match rule_text");
    header.params.check();
    write_line(path, to_json(header));
    tails_[header.session_id] = Tail{header.params.length, header.learner_kind, 0, 0, false};
  }

  /// Appends one attempt. Episodes run 1, 2, ... and attempts restart at 1
  /// in each new episode.
  void append_attempt(const std::string& session_id, const AttemptRecord& rec) {
    std::lock_guard lock(mutex_);
    Tail& tail = tail_of(session_id);
    check_attempt(rec, tail.length);
    if (tail.guessed) throw MalformedRecord("attempt after guess");
    const bool next_in_episode = rec.episode == tail.episode && rec.attempt == tail.attempt + 1;
    const bool next_episode = rec.episode == tail.episode + 1 && rec.attempt == 1;
    if (!next_in_episode && !next_episode)
      throw MalformedRecord("attempt (" + std::to_string(rec.episode) + ", " +
                            std::to_string(rec.attempt) + ") out of sequence after (" +
                            std::to_string(tail.episode) + ", " + std::to_string(tail.attempt) + ")");
    write_line(path_of(session_id), to_json(rec));
    tail.episode = rec.episode;
    tail.attempt = rec.attempt;
  }

  /// HUMAN sessions only.
  void append_guess(const std::string& session_id, const GuessRecord& rec) {
    std::lock_guard lock(mutex_);
    Tail& tail = tail_of(session_id);
    if (tail.kind != LearnerKind::Human) throw std::logic_error("guesses are for HUMAN sessions");
    if (rec.guess_text.empty()) throw MalformedRecord("empty guess text");
    write_line(path_of(session_id), to_json(rec));
    tail.guessed = true;
  }

  std::string raw(const std::string& session_id) const {
    const auto path = path_of(session_id);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UnknownSession(session_id);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  Transcript read(const std::string& session_id) const { return parse_transcript(raw(session_id)); }

  /// Session ids present in the directory, sorted.
  std::vector<std::string> list() const {
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(dir_))
      if (entry.path().extension() == ".jsonl") ids.push_back(entry.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
  }

private:
  struct Tail {
    int length = 0;
    LearnerKind kind = LearnerKind::Machine;
    int episode = 0;
    int attempt = 0;
    bool guessed = false;
  };

  static void write_line(const std::filesystem::path& path, const Json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << j.dump() << '\n';
    out.flush();
    if (!out) throw std::runtime_error("cannot write " + path.string());
  }

  Tail& tail_of(const std::string& session_id) {
    auto it = tails_.find(session_id);
    if (it != tails_.end()) return it->second;
    // Session created by another store instance or an earlier process.
    const Transcript t = read(session_id);
    Tail tail{t.header.params.length, t.header.learner_kind, 0, 0, !t.guesses.empty()};
    if (!t.attempts.empty()) {
      tail.episode = t.attempts.back().episode;
      tail.attempt = t.attempts.back().attempt;
    }
    return tails_[session_id] = tail;
  }

  std::filesystem::path dir_;
  std::mutex mutex_;
  std::map<std::string, Tail> tails_;
};

/// Sink for the training harness that records every attempt of one run.
inline AttemptSink transcript_sink(TranscriptStore& store, std::string session_id) {
  return [&store, id = std::move(session_id)](const AttemptEvent& e) {
    store.append_attempt(id, {e.episode, e.attempt, e.board_before->pattern(), e.move.position,
                              e.move.bucket, e.outcome.accepted, e.outcome.reward});
  };
}

// ---------------------------------------------------------------------------
// Replay

struct Divergence {
  int episode = 0;
  int attempt = 0;
  std::string detail;
};

struct ReplayReport {
  std::string session_id;
  int episodes = 0;
  int attempts = 0;
  std::vector<Divergence> divergences;

  bool ok() const noexcept { return divergences.empty(); }
};

/// Re-runs every attempt through the engine. Each episode starts from the
/// board recorded on its first attempt, which must also equal the board the
/// master seed generates. At most one divergence is reported per attempt;
/// play continues from the engine's own outcome.
inline ReplayReport replay(const Transcript& t, const RuleAst& rule, const EpisodeParams& params) {
  ReplayReport report;
  report.session_id = t.header.session_id;
  std::optional<EpisodeState> state;
  int episode = 0;
  for (const auto& rec : t.attempts) {
    ++report.attempts;
    auto diverge = [&](std::string detail) {
      report.divergences.push_back({rec.episode, rec.attempt, std::move(detail)});
    };
    if (rec.episode != episode) {
      episode = rec.episode;
      ++report.episodes;
      state = new_episode(rule, params, episode_seed(t.header.master_seed, episode));
      if (state->initial_board.pattern() != rec.board_before) {
        diverge("initial board " + rec.board_before + " differs from seeded board " +
                state->initial_board.pattern());
        try {
          state = start_episode(rule, params, Board::from_pattern(rec.board_before));
        } catch (const std::invalid_argument&) {
          state.reset();
        }
        if (!state) continue;
      }
    } else if (!state) {
      diverge("no playable board");
      continue;
    } else if (state->board.pattern() != rec.board_before) {
      diverge("board_before " + rec.board_before + " but engine board is " +
              state->board.pattern());
      continue;
    }
    if (!state->board.contains(rec.position)) {
      diverge("position out of range");
      continue;
    }
    if (state->status != EpisodeStatus::InProgress) {
      diverge("attempt after episode ended (" + std::string(status_name(state->status)) + ")");
      continue;
    }
    const Outcome o = attempt_move(*state, {rec.position, rec.bucket});
    if (o.accepted != rec.accepted || o.reward != rec.reward)
      diverge(std::string("recorded ") + (rec.accepted ? "accepted" : "rejected") + "/" +
              std::to_string(rec.reward) + ", engine " + (o.accepted ? "accepted" : "rejected") +
              "/" + std::to_string(o.reward));
  }
  return report;
}

/// Replays against the rule stored in the header.
inline ReplayReport replay(const Transcript& t) {
  if (t.header.rule_text.empty()) throw std::invalid_argument("transcript has no rule text");
  if (rule_hash(t.header.rule_text) != t.header.rule_hash)
    throw MalformedRecord("rule_hash does not match rule_text");
  return replay(t, parse_rule(t.header.rule_text), t.header.params);
}

// ---------------------------------------------------------------------------
// Curves

/// Aggregates attempts into episode records. An episode counts as complete
/// when the engine reaches CLEARED or STALEMATE, or when it used
/// `max_attempts`; any other episode throws.
inline LearningCurve export_curve(const Transcript& t, int max_attempts = 200) {
  const RuleAst rule = parse_rule(t.header.rule_text);
  LearningCurve curve;
  curve.rule_id = t.header.rule_hash.substr(0, 12);
  curve.learner_id = t.header.learner_id;
  curve.seed = t.header.master_seed;
  std::size_t i = 0;
  while (i < t.attempts.size()) {
    const int episode = t.attempts[i].episode;
    EpisodeState state =
        start_episode(rule, t.header.params, Board::from_pattern(t.attempts[i].board_before));
    EpisodeRecord rec;
    rec.episode = episode;
    std::vector<int> rewards;
    for (; i < t.attempts.size() && t.attempts[i].episode == episode; ++i) {
      const auto& a = t.attempts[i];
      ++rec.attempts;
      rec.errors += a.accepted ? 0 : 1;
      rewards.push_back(a.reward);
      if (state.status == EpisodeStatus::InProgress && state.board.contains(a.position))
        attempt_move(state, {a.position, a.bucket});
    }
    if (state.status == EpisodeStatus::InProgress && rec.attempts < max_attempts)
      throw std::runtime_error("session " + t.header.session_id + ": episode " +
                               std::to_string(episode) + " is incomplete");
    rec.reward_sum = rec.successes() - rec.errors;
    rec.discounted_return = discounted_return(rewards, t.header.params.gamma);
    rec.cleared = state.status == EpisodeStatus::Cleared;
    curve.episodes.push_back(rec);
  }
  return curve;
}

inline std::vector<LearningCurve> export_curves(const TranscriptStore& store,
                                                const std::vector<std::string>& session_ids,
                                                int max_attempts = 200) {
  std::vector<LearningCurve> out;
  for (const auto& id : session_ids) out.push_back(export_curve(store.read(id), max_attempts));
  return out;
}

} // namespace rulegame
