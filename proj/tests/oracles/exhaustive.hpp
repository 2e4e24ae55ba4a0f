#pragma once

// Exhaustive engine-versus-oracle sweep over every small board and every
// reachable success prefix.

#include <functional>
#include <string>
#include <vector>

#include "oracles/exhibit_oracle.hpp"
#include "rulegame/engine.hpp"
#include "rulegame/rule_parser.hpp"

namespace oracle {

using Reference = std::function<bool(const Ctx&)>;

struct SweepResult {
  long boards = 0;
  long checks = 0;      // (prefix, attempt) pairs compared
  long divergences = 0; // engine verdict != reference verdict
  long stalls = 0;      // non-empty board with no legal move
  std::string first_divergence;
};

/// Every board pattern of `length` cells with 1..max_pieces pieces over the
/// first `colors` letters of RGBY.
inline std::vector<std::string> all_boards(int length, int max_pieces, int colors) {
  std::vector<std::string> out;
  const std::string letters = std::string("RGBY").substr(0, static_cast<std::size_t>(colors));
  std::string cur(static_cast<std::size_t>(length), '.');
  std::function<void(int, int)> rec = [&](int i, int pieces) {
    if (i == length) {
      if (pieces >= 1) out.push_back(cur);
      return;
    }
    cur[static_cast<std::size_t>(i)] = '.';
    rec(i + 1, pieces);
    if (pieces < max_pieces)
      for (char ch : letters) {
        cur[static_cast<std::size_t>(i)] = ch;
        rec(i + 1, pieces + 1);
      }
    cur[static_cast<std::size_t>(i)] = '.';
  };
  rec(0, 0);
  return out;
}

inline void sweep_from(const rulegame::EpisodeState& state, const std::string& initial,
                       std::vector<Removed>& done, const Reference& reference, SweepResult& out) {
  using namespace rulegame;
  if (state.status == EpisodeStatus::Cleared) return;
  const std::string board = state.board.pattern();
  bool any_legal = false;
  for (int p = 1; p <= state.board.length(); ++p)
    for (Bucket b : {Bucket::Left, Bucket::Right}) {
      EpisodeState next = state;
      const bool engine_says = attempt_move(next, {p, b}).accepted;
      const char bucket = b == Bucket::Left ? 'L' : 'R';
      const bool oracle_says = reference(Ctx{initial, board, done, p, bucket});
      ++out.checks;
      if (engine_says != oracle_says) {
        if (out.divergences++ == 0)
          out.first_divergence = initial + " now " + board + " move " + std::to_string(p) +
                                 bucket + " engine=" + std::to_string(engine_says);
        continue;
      }
      if (!engine_says) continue;
      any_legal = true;
      done.push_back({p, board[static_cast<std::size_t>(p - 1)], bucket});
      sweep_from(next, initial, done, reference, out);
      done.pop_back();
    }
  if (!any_legal) ++out.stalls;
}

inline SweepResult sweep(const std::string& rule_text, const Reference& reference, int length,
                         int max_pieces, int colors) {
  using namespace rulegame;
  const RuleAst rule = parse_rule(rule_text);
  EpisodeParams params{length, 1, max_pieces, colors, 0.95};
  SweepResult out;
  for (const auto& pattern : all_boards(length, max_pieces, colors)) {
    ++out.boards;
    EpisodeState state = start_episode(rule, params, Board::from_pattern(pattern));
    std::vector<Removed> done;
    sweep_from(state, pattern, done, reference, out);
  }
  return out;
}

} // namespace oracle
