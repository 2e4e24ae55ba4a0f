#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rulegame/params.hpp"
#include "rulegame/rng.hpp"
#include "rulegame/rule.hpp"
#include "rulegame/rule_analysis.hpp"

namespace rulegame {

/// A line of cells, each empty or holding one colored piece. Positions are
/// 1-based; the text form is one character per cell over R,G,B,Y and '.'.
class Board {
public:
  Board() = default;
  explicit Board(int length) : cells_(static_cast<std::size_t>(length)) {}

  static Board from_pattern(std::string_view pattern) {
    Board b(static_cast<int>(pattern.size()));
    for (std::size_t i = 0; i < pattern.size(); ++i) {
      if (pattern[i] == '.') continue;
      auto c = color_from_letter(pattern[i]);
      if (!c || pattern[i] != color_letter(*c))
        throw std::invalid_argument("bad board pattern character '" +
                                    std::string(1, pattern[i]) + "'");
      b.cells_[i] = *c;
    }
    return b;
  }

  std::string pattern() const {
    std::string s(cells_.size(), '.');
    for (std::size_t i = 0; i < cells_.size(); ++i)
      if (cells_[i]) s[i] = color_letter(*cells_[i]);
    return s;
  }

  int length() const noexcept { return static_cast<int>(cells_.size()); }
  bool contains(int position) const noexcept { return position >= 1 && position <= length(); }

  std::optional<Color> at(int position) const {
    const auto index = static_cast<std::size_t>(position - 1);
    if (position < 1 || index >= cells_.size()) return std::nullopt;
    return cells_[index];
  }

  void place(int position, Color c) { cells_.at(static_cast<std::size_t>(position - 1)) = c; }
  void remove(int position) { cells_.at(static_cast<std::size_t>(position - 1)).reset(); }

  int piece_count() const noexcept {
    return static_cast<int>(std::count_if(cells_.begin(), cells_.end(),
                                          [](const auto& c) { return c.has_value(); }));
  }
  bool empty() const noexcept { return piece_count() == 0; }

  std::optional<int> leftmost() const noexcept {
    for (int p = 1; p <= length(); ++p)
      if (cells_[static_cast<std::size_t>(p - 1)]) return p;
    return std::nullopt;
  }
  std::optional<int> rightmost() const noexcept {
    for (int p = length(); p >= 1; --p)
      if (cells_[static_cast<std::size_t>(p - 1)]) return p;
    return std::nullopt;
  }
  std::optional<int> leftmost_of(Color c) const noexcept {
    for (int p = 1; p <= length(); ++p)
      if (cells_[static_cast<std::size_t>(p - 1)] == c) return p;
    return std::nullopt;
  }

  friend bool operator==(const Board&, const Board&) = default;

private:
  std::vector<std::optional<Color>> cells_;
};

struct MoveAttempt {
  int position = 1;
  Bucket bucket = Bucket::Left;

  friend auto operator<=>(const MoveAttempt&, const MoveAttempt&) = default;
};

enum class EpisodeStatus : std::uint8_t { InProgress, Cleared, Stalemate };

constexpr std::string_view status_name(EpisodeStatus s) noexcept {
  switch (s) {
  case EpisodeStatus::InProgress: return "in_progress";
  case EpisodeStatus::Cleared: return "cleared";
  case EpisodeStatus::Stalemate: return "stalemate";
  }
  return "?";
}

struct Outcome {
  bool accepted = false;
  int reward = -1; // +1 iff accepted
  EpisodeStatus status = EpisodeStatus::InProgress;

  friend bool operator==(const Outcome&, const Outcome&) = default;
};

struct Success {
  int move_index = 0; // 1-based
  int position = 0;
  Color color = Color::Red;
  Bucket bucket = Bucket::Left;

  friend bool operator==(const Success&, const Success&) = default;
};

struct Failure {
  int attempt_index = 0; // 1-based over all attempts of the episode
  int position = 0;
  Bucket bucket = Bucket::Left;

  friend bool operator==(const Failure&, const Failure&) = default;
};

/// MDP state: board plus full play history. The rule only ever sees the
/// initial board, the current board and `successes`.
struct EpisodeState {
  RuleAst rule;
  EpisodeParams params;
  Board initial_board;
  Board board;
  std::vector<Success> successes;
  std::vector<Failure> failures;
  int attempt_count = 0;
  std::uint64_t rng_state = 0;
  EpisodeStatus status = EpisodeStatus::InProgress;

  friend bool operator==(const EpisodeState&, const EpisodeState&) = default;
};

/// Thrown by attempt_move once an episode has ended.
class EpisodeFinished : public std::logic_error {
public:
  EpisodeFinished() : std::logic_error("episode already finished") {}
};

struct BucketSet {
  bool left = false;
  bool right = false;

  bool contains(Bucket b) const noexcept { return b == Bucket::Left ? left : right; }
  friend bool operator==(const BucketSet&, const BucketSet&) = default;
};

struct DistanceSets {
  BucketSet nearest;
  BucketSet farthest;
};

/// Distance to LEFT is `position`, to RIGHT is L+1-position; an exact tie
/// puts both buckets in both sets.
constexpr DistanceSets distance_semantics(int position, int length) noexcept {
  const int to_left = position;
  const int to_right = length + 1 - position;
  if (to_left == to_right) return {{true, true}, {true, true}};
  const bool left_nearer = to_left < to_right;
  return {{left_nearer, !left_nearer}, {!left_nearer, left_nearer}};
}

namespace detail {

inline bool guard_triggered(const ConfigGuard& g, const Board& initial) {
  // A guard whose move index exceeds the piece count could never be met;
  // it stays dormant rather than freezing the guarded piece.
  if (initial.piece_count() < g.move_index) return false;
  if (const auto* at = std::get_if<AtTrigger>(&g.trigger))
    return initial.at(at->position) == at->color;
  return initial.pattern() == std::get<ConfigTrigger>(g.trigger).pattern;
}

inline bool order_allows(Order order, const Board& board, int move_index, int position) {
  switch (order) {
  case Order::Any: return true;
  case Order::LeftToRight: return board.leftmost() == position;
  case Order::RightToLeft: return board.rightmost() == position;
  case Order::OutsideInLeft:
    return (move_index % 2 == 1 ? board.leftmost() : board.rightmost()) == position;
  case Order::OutsideInRight:
    return (move_index % 2 == 1 ? board.rightmost() : board.leftmost()) == position;
  }
  return false;
}

inline bool bucket_allows(const BucketExpr& expr, const Board& board,
                          const std::vector<Success>& successes, int position,
                          Color color, Bucket bucket) {
  const auto* map = std::get_if<ColorMap>(&expr);
  const SimpleBucket simple = map ? map->lookup(color) : std::get<SimpleBucket>(expr);
  switch (simple) {
  case SimpleBucket::Any: return true;
  case SimpleBucket::Left: return bucket == Bucket::Left;
  case SimpleBucket::Right: return bucket == Bucket::Right;
  case SimpleBucket::Nearest:
    return distance_semantics(position, board.length()).nearest.contains(bucket);
  case SimpleBucket::Farthest:
    return distance_semantics(position, board.length()).farthest.contains(bucket);
  case SimpleBucket::Alternate: {
    // Inside a map, alternation tracks the last success of the same color.
    auto last = std::find_if(successes.rbegin(), successes.rend(), [&](const Success& s) {
      return !map || s.color == color;
    });
    return last == successes.rend() || bucket == opposite(last->bucket);
  }
  }
  return false;
}

} // namespace detail

/// Decides a move from exactly what a rule may consult. There is no failure
/// parameter: rejected attempts cannot influence the verdict.
inline bool rule_accepts(const RuleAst& rule, const Board& initial, const Board& board,
                         const std::vector<Success>& successes, const MoveAttempt& move) {
  const auto color = board.at(move.position);
  if (!color) return false;
  const int move_index = static_cast<int>(successes.size()) + 1;
  if (!detail::order_allows(rule.base.order, board, move_index, move.position)) return false;
  if (!detail::bucket_allows(rule.base.bucket, board, successes, move.position, *color,
                             move.bucket))
    return false;
  for (const auto& g : rule.guards) {
    if (!detail::guard_triggered(g, initial)) continue;
    const auto* at = std::get_if<AtTrigger>(&g.trigger);
    if (g.move_index == move_index) {
      if (move.bucket != g.bucket) return false;
      if (at && move.position != at->position) return false;
    } else if (at && move.position == at->position) {
      return false;
    }
  }
  return true;
}

/// All attempts the current state would accept, ordered by (position, bucket).
inline std::vector<MoveAttempt> legal_moves(const EpisodeState& state) {
  std::vector<MoveAttempt> moves;
  if (state.status != EpisodeStatus::InProgress) return moves;
  for (int p = 1; p <= state.board.length(); ++p)
    for (Bucket b : {Bucket::Left, Bucket::Right})
      if (rule_accepts(state.rule, state.initial_board, state.board, state.successes, {p, b}))
        moves.push_back({p, b});
  return moves;
}

namespace detail {

inline void settle_status(EpisodeState& state) {
  if (state.board.empty())
    state.status = EpisodeStatus::Cleared;
  else if (legal_moves(state).empty())
    state.status = EpisodeStatus::Stalemate;
}

inline void require_valid(const RuleAst& rule, const EpisodeParams& params) {
  params.check();
  auto report = validate(rule, params);
  if (!report.ok) {
    std::string msg = "invalid rule:";
    for (const auto& e : report.errors) msg += " " + e + ";";
    throw std::invalid_argument(msg);
  }
}

} // namespace detail

/// Starts an episode from a given initial board (used by replay and tests).
inline EpisodeState start_episode(const RuleAst& rule, const EpisodeParams& params,
                                  const Board& board, std::uint64_t rng_state = 0) {
  detail::require_valid(rule, params);
  if (board.length() != params.length)
    throw std::invalid_argument("board length differs from L");
  EpisodeState state;
  state.rule = rule;
  state.params = params;
  state.initial_board = board;
  state.board = board;
  state.rng_state = rng_state;
  detail::settle_status(state);
  return state;
}

/// Draws K uniformly from [Kmin,Kmax], K distinct cells by partial
/// Fisher-Yates over 1..L, then one uniform color per chosen cell.
inline EpisodeState new_episode(const RuleAst& rule, const EpisodeParams& params,
                                std::uint64_t seed) {
  detail::require_valid(rule, params);
  SplitMix64 rng(seed);
  const auto span = static_cast<std::uint64_t>(params.k_max - params.k_min + 1);
  const int k = params.k_min + static_cast<int>(rng.below(span));
  std::vector<int> cells(static_cast<std::size_t>(params.length));
  std::iota(cells.begin(), cells.end(), 1);
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(i) +
                   rng.below(static_cast<std::uint64_t>(params.length - i));
    std::swap(cells[static_cast<std::size_t>(i)], cells[j]);
  }
  Board board(params.length);
  for (int i = 0; i < k; ++i)
    board.place(cells[static_cast<std::size_t>(i)],
                kPalette[rng.below(static_cast<std::uint64_t>(params.colors))]);
  return start_episode(rule, params, board, rng.state());
}

/// Applies one attempt. Empty cells are ordinary rejections. Throws
/// EpisodeFinished after CLEARED/STALEMATE and std::out_of_range for a
/// position outside 1..L.
inline Outcome attempt_move(EpisodeState& state, const MoveAttempt& move) {
  if (state.status != EpisodeStatus::InProgress) throw EpisodeFinished();
  if (!state.board.contains(move.position))
    throw std::out_of_range("position " + std::to_string(move.position) + " outside 1.." +
                            std::to_string(state.board.length()));
  ++state.attempt_count;
  if (!rule_accepts(state.rule, state.initial_board, state.board, state.successes, move)) {
    state.failures.push_back({state.attempt_count, move.position, move.bucket});
    return {false, -1, state.status};
  }
  const Color color = *state.board.at(move.position);
  state.board.remove(move.position);
  state.successes.push_back({static_cast<int>(state.successes.size()) + 1, move.position,
                             color, move.bucket});
  detail::settle_status(state);
  return {true, +1, state.status};
}

} // namespace rulegame
