#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rulegame/engine.hpp"
#include "rulegame/rng.hpp"

namespace rulegame {

struct LastSuccessInfo {
  int position = 0;
  Color color = Color::Red;
  Bucket bucket = Bucket::Left;
};

/// What a learner sees before choosing a move. `failures_this_board` holds
/// the attempts already rejected since the board last changed.
struct Observation {
  Board board;
  std::optional<LastSuccessInfo> last_success;
  int success_count = 0;
  std::set<MoveAttempt> failures_this_board;
};

inline Observation observe_state(const EpisodeState& state) {
  Observation obs;
  obs.board = state.board;
  obs.success_count = static_cast<int>(state.successes.size());
  if (!state.successes.empty()) {
    const auto& s = state.successes.back();
    obs.last_success = LastSuccessInfo{s.position, s.color, s.bucket};
  }
  // Failures carry their attempt index; the trailing run of consecutive
  // indices ending at attempt_count happened on the current board.
  int expected = state.attempt_count;
  for (auto it = state.failures.rbegin(); it != state.failures.rend(); ++it, --expected) {
    if (it->attempt_index != expected) break;
    obs.failures_this_board.insert({it->position, it->bucket});
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Action abstraction

struct Selector {
  enum class Kind : std::uint8_t { Leftmost, Rightmost, LeftmostOf } kind = Kind::Leftmost;
  Color color = Color::Red; // only for LeftmostOf

  friend bool operator==(const Selector&, const Selector&) = default;
};

struct AbstractAction {
  Selector selector;
  Bucket bucket = Bucket::Left;

  friend bool operator==(const AbstractAction&, const AbstractAction&) = default;
};

inline std::optional<int> resolve(const Selector& s, const Board& board) {
  switch (s.kind) {
  case Selector::Kind::Leftmost: return board.leftmost();
  case Selector::Kind::Rightmost: return board.rightmost();
  case Selector::Kind::LeftmostOf: return board.leftmost_of(s.color);
  }
  return std::nullopt;
}

inline std::string selector_name(const Selector& s) {
  switch (s.kind) {
  case Selector::Kind::Leftmost: return "leftmost";
  case Selector::Kind::Rightmost: return "rightmost";
  case Selector::Kind::LeftmostOf: return "leftmost_of_" + std::string(color_name(s.color));
  }
  return "?";
}

/// LEFTMOST, RIGHTMOST, LEFTMOST_OF(each palette color), each crossed with
/// LEFT then RIGHT. This enumeration order is the greedy tie-break order.
struct EndSelectorActions {
  static std::vector<AbstractAction> enumerate() {
    std::vector<Selector> selectors{{Selector::Kind::Leftmost, Color::Red},
                                    {Selector::Kind::Rightmost, Color::Red}};
    for (Color c : kPalette) selectors.push_back({Selector::Kind::LeftmostOf, c});
    std::vector<AbstractAction> actions;
    for (const auto& s : selectors)
      for (Bucket b : {Bucket::Left, Bucket::Right}) actions.push_back({s, b});
    return actions;
  }
};

// ---------------------------------------------------------------------------
// State abstraction

/// (last success bucket, success-count parity, leftmost color, rightmost color).
/// Color slots use 0 for EMPTY.
struct StateKey {
  std::optional<Bucket> last_bucket;
  int parity = 0;
  std::optional<Color> leftmost;
  std::optional<Color> rightmost;

  friend bool operator==(const StateKey&, const StateKey&) = default;
};

struct LastBucketParityEnds {
  static constexpr std::size_t color_slots(int colors) { return static_cast<std::size_t>(colors) + 1; }

  /// 3 * 2 * (C+1) * (C+1)
  static constexpr std::size_t key_count(int colors) {
    return 3 * 2 * color_slots(colors) * color_slots(colors);
  }

  static StateKey key(const Observation& obs) {
    StateKey k;
    if (obs.last_success) k.last_bucket = obs.last_success->bucket;
    k.parity = obs.success_count % 2;
    if (auto p = obs.board.leftmost()) k.leftmost = obs.board.at(*p);
    if (auto p = obs.board.rightmost()) k.rightmost = obs.board.at(*p);
    return k;
  }

  static std::size_t index(const StateKey& k, int colors) {
    auto slot = [](const std::optional<Color>& c) {
      return c ? static_cast<std::size_t>(*c) + 1 : std::size_t{0};
    };
    std::size_t bucket = k.last_bucket ? static_cast<std::size_t>(*k.last_bucket) + 1 : 0;
    std::size_t s = bucket * 2 + static_cast<std::size_t>(k.parity);
    s = s * color_slots(colors) + slot(k.leftmost);
    return s * color_slots(colors) + slot(k.rightmost);
  }

  static StateKey decode(std::size_t index, int colors) {
    auto color_of = [](std::size_t slot) {
      return slot == 0 ? std::optional<Color>{} : kPalette[slot - 1];
    };
    StateKey k;
    const std::size_t slots = color_slots(colors);
    k.rightmost = color_of(index % slots);
    index /= slots;
    k.leftmost = color_of(index % slots);
    index /= slots;
    k.parity = static_cast<int>(index % 2);
    index /= 2;
    if (index > 0) k.last_bucket = static_cast<Bucket>(index - 1);
    return k;
  }

  static std::string csv_header() { return "last_bucket,parity,leftmost_color,rightmost_color"; }

  static std::string csv_fields(const StateKey& k) {
    auto color = [](const std::optional<Color>& c) {
      return c ? std::string(color_name(*c)) : std::string("empty");
    };
    return (k.last_bucket ? std::string(bucket_name(*k.last_bucket)) : std::string("none")) + "," +
           std::to_string(k.parity) + "," + color(k.leftmost) + "," + color(k.rightmost);
  }
};

template <class F>
concept StateFeaturizer = requires(const Observation& obs, const StateKey& key, std::size_t i) {
  { F::key_count(4) } -> std::convertible_to<std::size_t>;
  { F::key(obs) } -> std::same_as<StateKey>;
  { F::index(key, 4) } -> std::convertible_to<std::size_t>;
  { F::decode(i, 4) } -> std::same_as<StateKey>;
  { F::csv_header() } -> std::convertible_to<std::string>;
  { F::csv_fields(key) } -> std::convertible_to<std::string>;
};

template <class A>
concept ActionSet = requires {
  { A::enumerate() } -> std::same_as<std::vector<AbstractAction>>;
};

// ---------------------------------------------------------------------------
// Agents

enum class AgentKind : std::uint8_t { Random, QLearn };

constexpr std::string_view agent_kind_name(AgentKind k) noexcept {
  return k == AgentKind::Random ? "random" : "qlearn";
}

inline AgentKind parse_agent_kind(std::string_view text) {
  if (text == "random" || text == "RANDOM") return AgentKind::Random;
  if (text == "qlearn" || text == "QLEARN") return AgentKind::QLearn;
  throw std::invalid_argument("unknown agent kind '" + std::string(text) + "'");
}

struct AgentConfig {
  AgentKind kind = AgentKind::QLearn;
  double alpha = 0.1;
  double epsilon0 = 0.2;
  double epsilon_decay = 0.995; // per episode, multiplicative
  double gamma = 0.95;
  std::uint64_t seed = 0;
  bool avoid_repeats = true; // random agent skips attempts already rejected on this board

  void check() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in (0,1]");
    if (!(epsilon0 >= 0.0 && epsilon0 <= 1.0))
      throw std::invalid_argument("epsilon0 must be in [0,1]");
    if (!(epsilon_decay > 0.0 && epsilon_decay <= 1.0))
      throw std::invalid_argument("epsilonDecay must be in (0,1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0,1)");
  }
};

/// observe/act protocol shared by machine learners.
class Agent {
public:
  virtual ~Agent() = default;

  virtual AgentKind kind() const = 0;
  virtual MoveAttempt select_move(const Observation& obs) = 0;
  virtual void observe(const Observation& obs, const MoveAttempt& move, const Outcome& outcome,
                       const Observation& next) = 0;
  virtual void end_episode() = 0;
  /// Restores initial exploration (epsilon, RNG stream, per-board memory)
  /// while keeping anything learned.
  virtual void reset_exploration(std::uint64_t seed) = 0;
  virtual std::unique_ptr<Agent> clone() const = 0;
};

class RandomAgent final : public Agent {
public:
  explicit RandomAgent(const AgentConfig& config) : config_(config), rng_(config.seed) {}

  AgentKind kind() const override { return AgentKind::Random; }

  MoveAttempt select_move(const Observation& obs) override {
    if (obs.board.empty()) throw std::logic_error("select_move on an empty board");
    std::vector<MoveAttempt> all, fresh;
    for (int p = 1; p <= obs.board.length(); ++p) {
      if (!obs.board.at(p)) continue;
      for (Bucket b : {Bucket::Left, Bucket::Right}) {
        MoveAttempt m{p, b};
        all.push_back(m);
        if (!obs.failures_this_board.contains(m) && !rejected_.contains(m)) fresh.push_back(m);
      }
    }
    const auto& pool = (config_.avoid_repeats && !fresh.empty()) ? fresh : all;
    return pool[rng_.below(pool.size())];
  }

  void observe(const Observation&, const MoveAttempt& move, const Outcome& outcome,
               const Observation&) override {
    if (outcome.accepted)
      rejected_.clear();
    else
      rejected_.insert(move);
  }

  void end_episode() override { rejected_.clear(); }

  void reset_exploration(std::uint64_t seed) override {
    rng_ = SplitMix64(seed);
    rejected_.clear();
  }

  std::unique_ptr<Agent> clone() const override { return std::make_unique<RandomAgent>(*this); }

private:
  AgentConfig config_;
  SplitMix64 rng_;
  std::set<MoveAttempt> rejected_;
};

/// Tabular Q-learning over a featurized state and an abstract action set.
/// The table is sized for the full palette; unvisited entries stay 0.
template <StateFeaturizer Featurizer = LastBucketParityEnds, ActionSet Actions = EndSelectorActions>
class QLearningAgent final : public Agent {
public:
  static constexpr int kColors = static_cast<int>(kPaletteSize);

  explicit QLearningAgent(const AgentConfig& config)
      : config_(config), rng_(config.seed), epsilon_(config.epsilon0),
        actions_(Actions::enumerate()),
        q_(Featurizer::key_count(kColors) * actions_.size(), 0.0),
        visited_(Featurizer::key_count(kColors), false) {
    config_.check();
  }

  AgentKind kind() const override { return AgentKind::QLearn; }

  double epsilon() const { return epsilon_; }
  const std::vector<AbstractAction>& actions() const { return actions_; }

  double q_value(const StateKey& key, std::size_t action) const {
    return q_[slot(Featurizer::index(key, kColors), action)];
  }
  void set_q_value(const StateKey& key, std::size_t action, double value) {
    q_[slot(Featurizer::index(key, kColors), action)] = value;
  }

  /// Indices of actions whose selector resolves on this board.
  std::vector<std::size_t> resolvable(const Board& board) const {
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < actions_.size(); ++a)
      if (resolve(actions_[a].selector, board)) out.push_back(a);
    return out;
  }

  MoveAttempt select_move(const Observation& obs) override {
    if (obs.board.empty()) throw std::logic_error("select_move on an empty board");
    const auto candidates = resolvable(obs.board);
    const bool explore = rng_.unit() < epsilon_;
    std::size_t chosen = candidates.front();
    if (explore) {
      chosen = candidates[rng_.below(candidates.size())];
    } else {
      const std::size_t s = Featurizer::index(Featurizer::key(obs), kColors);
      for (std::size_t a : candidates)
        if (q_[slot(s, a)] > q_[slot(s, chosen)]) chosen = a;
    }
    last_action_ = chosen;
    return {*resolve(actions_[chosen].selector, obs.board), actions_[chosen].bucket};
  }

  void observe(const Observation& obs, const MoveAttempt& move, const Outcome& outcome,
               const Observation& next) override {
    const std::size_t s = Featurizer::index(Featurizer::key(obs), kColors);
    visited_[s] = true;
    double target = outcome.reward;
    if (outcome.status == EpisodeStatus::InProgress && !next.board.empty()) {
      const std::size_t s2 = Featurizer::index(Featurizer::key(next), kColors);
      const auto next_actions = resolvable(next.board);
      double best = q_[slot(s2, next_actions.front())];
      for (std::size_t a : next_actions) best = std::max(best, q_[slot(s2, a)]);
      target += config_.gamma * best;
    }
    auto update = [&](std::size_t a) {
      double& q = q_[slot(s, a)];
      q += config_.alpha * (target - q);
    };
    if (last_action_ && resolves_to(*last_action_, obs.board, move)) {
      update(*last_action_);
    } else {
      // Move chosen elsewhere: credit every action that denotes it.
      for (std::size_t a = 0; a < actions_.size(); ++a)
        if (resolves_to(a, obs.board, move)) update(a);
    }
    last_action_.reset();
  }

  void end_episode() override {
    epsilon_ *= config_.epsilon_decay;
    last_action_.reset();
  }

  void reset_exploration(std::uint64_t seed) override {
    rng_ = SplitMix64(seed);
    epsilon_ = config_.epsilon0;
    last_action_.reset();
  }

  std::unique_ptr<Agent> clone() const override { return std::make_unique<QLearningAgent>(*this); }

  double max_abs_q() const {
    double m = 0.0;
    for (double q : q_) m = std::max(m, std::abs(q));
    return m;
  }

  /// Visited states only: state-key fields, action fields, value.
  void export_csv(std::ostream& out) const {
    out << Featurizer::csv_header() << ",selector,bucket,value\n";
    for (std::size_t s = 0; s < visited_.size(); ++s) {
      if (!visited_[s]) continue;
      const std::string key = Featurizer::csv_fields(Featurizer::decode(s, kColors));
      for (std::size_t a = 0; a < actions_.size(); ++a)
        out << key << ',' << selector_name(actions_[a].selector) << ','
            << bucket_name(actions_[a].bucket) << ',' << q_[slot(s, a)] << '\n';
    }
  }

private:
  std::size_t slot(std::size_t state, std::size_t action) const {
    return state * actions_.size() + action;
  }

  bool resolves_to(std::size_t a, const Board& board, const MoveAttempt& move) const {
    auto p = resolve(actions_[a].selector, board);
    return p && *p == move.position && actions_[a].bucket == move.bucket;
  }

  AgentConfig config_;
  SplitMix64 rng_;
  double epsilon_;
  std::vector<AbstractAction> actions_;
  std::vector<double> q_;
  std::vector<bool> visited_;
  std::optional<std::size_t> last_action_;
};

inline std::unique_ptr<Agent> new_agent(const AgentConfig& config) {
  config.check();
  switch (config.kind) {
  case AgentKind::Random: return std::make_unique<RandomAgent>(config);
  case AgentKind::QLearn: return std::make_unique<QLearningAgent<>>(config);
  }
  throw std::invalid_argument("unknown agent kind");
}

} // namespace rulegame
