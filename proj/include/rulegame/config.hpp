#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <tuple>
#include <variant>
#include <vector>

#include "rulegame/agents.hpp"
#include "rulegame/harness.hpp"
#include "rulegame/params.hpp"

namespace rulegame {

class ConfigError : public std::invalid_argument {
public:
  ConfigError(int line, const std::string& message)
      : std::invalid_argument(line > 0 ? "line " + std::to_string(line) + ": " + message : message) {}
};

// ---------------------------------------------------------------------------
// TOML-style key/value files: [section] headers, key = value lines, '#'
// comments. Values are integers, reals, true/false, or strings (quoted or bare).

struct ConfigValue {
  std::variant<std::int64_t, double, bool, std::string> value;
  int line = 0;
};

using ConfigSection = std::map<std::string, ConfigValue>;
using ConfigDocument = std::map<std::string, ConfigSection>;

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

inline ConfigValue parse_config_value(std::string_view text, int line) {
  if (text.empty()) throw ConfigError(line, "missing value");
  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') throw ConfigError(line, "unterminated string");
    return {std::string(text.substr(1, text.size() - 2)), line};
  }
  if (text == "true") return {true, line};
  if (text == "false") return {false, line};
  std::int64_t i = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), i);
  if (ec == std::errc() && p == text.data() + text.size()) return {i, line};
  double d = 0;
  auto [q, ec2] = std::from_chars(text.data(), text.data() + text.size(), d);
  if (ec2 == std::errc() && q == text.data() + text.size()) return {d, line};
  return {std::string(text), line};
}

} // namespace detail

inline ConfigDocument parse_config_document(std::string_view text) {
  ConfigDocument doc;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view s = raw;
    // '#' starts a comment unless inside quotes.
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) {
        s = s.substr(0, i);
        break;
      }
    }
    s = detail::trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(line, "malformed section header");
      section = std::string(detail::trim(s.substr(1, s.size() - 2)));
      if (section.empty()) throw ConfigError(line, "empty section name");
      doc[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line, "expected key = value");
    if (section.empty()) throw ConfigError(line, "key outside a section");
    const std::string key(detail::trim(s.substr(0, eq)));
    if (key.empty()) throw ConfigError(line, "empty key");
    auto& sec = doc[section];
    if (sec.contains(key)) throw ConfigError(line, "duplicate key '" + key + "'");
    sec[key] = detail::parse_config_value(detail::trim(s.substr(eq + 1)), line);
  }
  return doc;
}

/// Everything a training or analysis run needs.
struct ExperimentConfig {
  EpisodeParams game;
  AgentConfig agent;
  int seed_count = 20;
  std::uint64_t first_seed = 1;
  int episodes = 500;
  int max_attempts = 200;
  unsigned threads = 0;
  CriterionSettings criterion;
  DifficultyMeasure measure = DifficultyMeasure::EpisodesToCriterion;
  double alpha = 0.05; // significance level for pair detection

  std::vector<std::uint64_t> seeds() const {
    std::vector<std::uint64_t> out;
    for (int i = 0; i < seed_count; ++i) out.push_back(first_seed + static_cast<std::uint64_t>(i));
    return out;
  }

  void check() const {
    game.check();
    agent.check();
    if (seed_count < 1) throw ConfigError(0, "seedCount must be >= 1");
    if (episodes < 1) throw ConfigError(0, "episodes must be >= 1");
    if (max_attempts < 1) throw ConfigError(0, "maxAttempts must be >= 1");
    if (criterion.window < 1) throw ConfigError(0, "criterionWindow must be >= 1");
    if (criterion.max_errors < 0) throw ConfigError(0, "criterionMaxErrors must be >= 0");
    if (criterion.asymptote_window < 1 || !(criterion.asymptote_eps > 0.0))
      throw ConfigError(0, "need asymptoteWindow >= 1 and asymptoteEps > 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError(0, "alpha must be in (0,1)");
  }
};

namespace detail {

inline std::int64_t as_int(const ConfigValue& v, const std::string& key) {
  if (auto p = std::get_if<std::int64_t>(&v.value)) return *p;
  throw ConfigError(v.line, key + " must be an integer");
}

inline double as_real(const ConfigValue& v, const std::string& key) {
  if (auto p = std::get_if<double>(&v.value)) return *p;
  if (auto p = std::get_if<std::int64_t>(&v.value)) return static_cast<double>(*p);
  throw ConfigError(v.line, key + " must be a number");
}

inline std::string as_text(const ConfigValue& v, const std::string& key) {
  if (auto p = std::get_if<std::string>(&v.value)) return *p;
  throw ConfigError(v.line, key + " must be a string");
}

inline int as_small_int(const ConfigValue& v, const std::string& key) {
  const auto i = as_int(v, key);
  if (i < -1'000'000'000 || i > 1'000'000'000) throw ConfigError(v.line, key + " is out of range");
  return static_cast<int>(i);
}

} // namespace detail

inline DifficultyMeasure parse_measure(std::string_view text) {
  if (text == "criterion") return DifficultyMeasure::EpisodesToCriterion;
  if (text == "asymptote") return DifficultyMeasure::AsymptotePoint;
  throw std::invalid_argument("measure must be criterion or asymptote, got '" + std::string(text) + "'");
}

/// Reads [game], [agent] and [run]. Unknown sections or keys are errors.
inline ExperimentConfig load_experiment_config(std::string_view text) {
  using namespace detail;
  ExperimentConfig cfg;
  bool game_gamma = false;
  for (const auto& [section, keys] : parse_config_document(text)) {
    if (section != "game" && section != "agent" && section != "run")
      throw ConfigError(keys.empty() ? 0 : keys.begin()->second.line,
                        "unknown section [" + section + "]");
    for (const auto& [key, v] : keys) {
      if (section == "game") {
        if (key == "L") cfg.game.length = as_small_int(v, key);
        else if (key == "Kmin") cfg.game.k_min = as_small_int(v, key);
        else if (key == "Kmax") cfg.game.k_max = as_small_int(v, key);
        else if (key == "C") cfg.game.colors = as_small_int(v, key);
        else if (key == "gamma") cfg.game.gamma = as_real(v, key), game_gamma = true;
        else throw ConfigError(v.line, "unknown key [game] " + key);
      } else if (section == "agent") {
        if (key == "kind") {
          try {
            cfg.agent.kind = parse_agent_kind(as_text(v, key));
          } catch (const ConfigError&) {
            throw;
          } catch (const std::invalid_argument& e) {
            throw ConfigError(v.line, e.what());
          }
        } else if (key == "alpha") cfg.agent.alpha = as_real(v, key);
        else if (key == "epsilon0") cfg.agent.epsilon0 = as_real(v, key);
        else if (key == "epsilonDecay") cfg.agent.epsilon_decay = as_real(v, key);
        else if (key == "gamma") cfg.agent.gamma = as_real(v, key);
        else if (key == "seedCount") cfg.seed_count = as_small_int(v, key);
        else if (key == "avoidRepeats") {
          if (auto p = std::get_if<bool>(&v.value)) cfg.agent.avoid_repeats = *p;
          else throw ConfigError(v.line, "avoidRepeats must be true or false");
        } else throw ConfigError(v.line, "unknown key [agent] " + key);
      } else if (section == "run") {
        if (key == "episodes") cfg.episodes = as_small_int(v, key);
        else if (key == "criterionWindow") cfg.criterion.window = as_small_int(v, key);
        else if (key == "criterionMaxErrors") cfg.criterion.max_errors = as_small_int(v, key);
        else if (key == "alpha") cfg.alpha = as_real(v, key);
        else if (key == "firstSeed") {
          const auto s = as_int(v, key);
          if (s < 0) throw ConfigError(v.line, "firstSeed must be >= 0");
          cfg.first_seed = static_cast<std::uint64_t>(s);
        } else if (key == "maxAttempts") cfg.max_attempts = as_small_int(v, key);
        else if (key == "threads") {
          const int t = as_small_int(v, key);
          if (t < 0) throw ConfigError(v.line, "threads must be >= 0");
          cfg.threads = static_cast<unsigned>(t);
        } else if (key == "measure") {
          try {
            cfg.measure = parse_measure(as_text(v, key));
          } catch (const ConfigError&) {
            throw;
          } catch (const std::invalid_argument& e) {
            throw ConfigError(v.line, e.what());
          }
        } else if (key == "asymptoteEps") cfg.criterion.asymptote_eps = as_real(v, key);
        else if (key == "asymptoteWindow") cfg.criterion.asymptote_window = as_small_int(v, key);
        else throw ConfigError(v.line, "unknown key [run] " + key);
      }
    }
  }
  // One discount factor unless the game section sets its own.
  if (!game_gamma) cfg.game.gamma = cfg.agent.gamma;
  try {
    cfg.check();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// CSV

/// Shortest text that reads back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline constexpr std::string_view kCurveHeader =
    "rule,learner,seed,episode,attempts,errors,reward_sum,discounted_return,cleared";
inline constexpr std::string_view kDifficultyHeader = "rule,learner,seed,difficulty";
inline constexpr std::string_view kPairHeader = "ruleA,ruleB,direction,p_axis_x,p_axis_y";

inline void check_csv_field(const std::string& field) {
  if (field.find_first_of(",\"\n\r") != std::string::npos)
    throw std::invalid_argument("CSV field may not contain commas, quotes or newlines: '" + field + "'");
}

inline void write_curves_csv(std::ostream& out, const std::vector<LearningCurve>& curves,
                             bool header = true) {
  if (header) out << kCurveHeader << '\n';
  for (const auto& c : curves) {
    check_csv_field(c.rule_id);
    check_csv_field(c.learner_id);
    for (const auto& e : c.episodes)
      out << c.rule_id << ',' << c.learner_id << ',' << c.seed << ',' << e.episode << ','
          << e.attempts << ',' << e.errors << ',' << e.reward_sum << ','
          << format_real(e.discounted_return) << ',' << (e.cleared ? 1 : 0) << '\n';
  }
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(detail::trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

namespace detail {

template <class T>
T parse_number(const std::string& text, int line) {
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size())
    throw ConfigError(line, "bad number '" + text + "'");
  return v;
}

} // namespace detail

/// Reads curve rows back into curves keyed by (rule, learner, seed) in first
/// appearance order.
inline std::vector<LearningCurve> read_curves_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kCurveHeader)
    throw ConfigError(1, "expected header " + std::string(kCurveHeader));
  std::vector<LearningCurve> curves;
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::size_t> index;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (detail::trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 9) throw ConfigError(number, "expected 9 fields");
    const auto seed = detail::parse_number<std::uint64_t>(f[2], number);
    auto key = std::make_tuple(f[0], f[1], seed);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, curves.size()).first;
      curves.push_back({f[0], f[1], seed, {}});
    }
    EpisodeRecord r;
    r.episode = detail::parse_number<int>(f[3], number);
    r.attempts = detail::parse_number<int>(f[4], number);
    r.errors = detail::parse_number<int>(f[5], number);
    r.reward_sum = detail::parse_number<int>(f[6], number);
    r.discounted_return = detail::parse_number<double>(f[7], number);
    r.cleared = detail::parse_number<int>(f[8], number) != 0;
    auto& episodes = curves[it->second].episodes;
    if (r.episode != static_cast<int>(episodes.size()) + 1)
      throw ConfigError(number, "episode indices must run 1, 2, ... per curve");
    episodes.push_back(r);
  }
  return curves;
}

struct DifficultyRow {
  std::string rule;
  std::string learner;
  std::uint64_t seed = 0;
  double difficulty = 0.0;
  bool censored = false;
};

/// Accepts either a difficulty CSV (`rule,learner,seed,difficulty`) or a
/// curve CSV, from which difficulty is computed per curve.
inline std::vector<DifficultyRow> read_difficulty_csv(std::istream& in, DifficultyMeasure measure,
                                                      const CriterionSettings& settings) {
  std::string header;
  if (!std::getline(in, header)) throw ConfigError(1, "empty file");
  std::vector<DifficultyRow> rows;
  if (detail::trim(header) == kCurveHeader) {
    std::stringstream rest;
    rest << header << '\n' << in.rdbuf();
    for (const auto& c : read_curves_csv(rest)) {
      const auto d = difficulty_of(c, measure, settings);
      rows.push_back({c.rule_id, c.learner_id, c.seed, d.value, d.censored});
    }
    return rows;
  }
  if (detail::trim(header) != kDifficultyHeader)
    throw ConfigError(1, "expected header " + std::string(kDifficultyHeader) + " or " +
                             std::string(kCurveHeader));
  std::string line;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (detail::trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw ConfigError(number, "expected 4 fields");
    rows.push_back({f[0], f[1], detail::parse_number<std::uint64_t>(f[2], number),
                    detail::parse_number<double>(f[3], number), false});
  }
  return rows;
}

inline void write_pairs_csv(std::ostream& out, const std::vector<InterestingPair>& pairs) {
  out << kPairHeader << '\n';
  for (const auto& p : pairs)
    out << p.rule_a << ',' << p.rule_b << ',' << (p.harder_on_a == Axis::X ? "X" : "Y") << ','
        << format_real(p.p_axis_x) << ',' << format_real(p.p_axis_y) << '\n';
}

} // namespace rulegame
