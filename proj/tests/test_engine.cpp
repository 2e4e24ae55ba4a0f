#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "oracles/exhaustive.hpp"
#include "rulegame/engine.hpp"
#include "rulegame/rule_parser.hpp"

using namespace rulegame;

namespace {

const char* kExhibit[] = {
    "order=ltr; bucket=any",
    "order=ltr; bucket=nearest",
    "order=any; bucket=map(blue:left, red:right, default:any)",
    "order=outside-in-left; bucket=farthest",
    "order=any; bucket=any; when at(7, red) then move=3, bucket=right",
    "order=any; bucket=alternate",
};

EpisodeParams small(int length, int k_min, int k_max, int colors) {
  return EpisodeParams{length, k_min, k_max, colors, 0.9};
}

EpisodeState from(const char* rule, const char* pattern) {
  const std::string p(pattern);
  return start_episode(parse_rule(rule), small(static_cast<int>(p.size()), 1, static_cast<int>(p.size()), 4),
                       Board::from_pattern(p));
}

} // namespace

TEST(Board, PatternRoundTrip) {
  const Board b = Board::from_pattern("..R..B....");
  EXPECT_EQ(b.length(), 10);
  EXPECT_EQ(b.at(3), Color::Red);
  EXPECT_EQ(b.at(6), Color::Blue);
  EXPECT_FALSE(b.at(1).has_value());
  EXPECT_FALSE(b.at(11).has_value());
  EXPECT_EQ(b.pattern(), "..R..B....");
  EXPECT_EQ(b.leftmost(), 3);
  EXPECT_EQ(b.rightmost(), 6);
  EXPECT_EQ(b.leftmost_of(Color::Blue), 6);
  EXPECT_THROW(Board::from_pattern("..X"), std::invalid_argument);
  EXPECT_THROW(Board::from_pattern("..r"), std::invalid_argument);
}

TEST(DistanceSemantics, Examples) {
  auto d = distance_semantics(2, 20);
  EXPECT_EQ(d.nearest, (BucketSet{true, false}));
  EXPECT_EQ(d.farthest, (BucketSet{false, true}));
  d = distance_semantics(3, 5);
  EXPECT_EQ(d.nearest, (BucketSet{true, true}));
  EXPECT_EQ(d.farthest, (BucketSet{true, true}));
  d = distance_semantics(11, 20);
  EXPECT_EQ(d.nearest, (BucketSet{false, true}));
  d = distance_semantics(10, 20);
  EXPECT_EQ(d.nearest, (BucketSet{true, false}));
}

TEST(NewEpisode, Deterministic) {
  const RuleAst rule = parse_rule(kExhibit[0]);
  EXPECT_EQ(new_episode(rule, EpisodeParams{}, 42), new_episode(rule, EpisodeParams{}, 42));
  EXPECT_NE(new_episode(rule, EpisodeParams{}, 42).board, new_episode(rule, EpisodeParams{}, 43).board);
}

TEST(NewEpisode, DefaultPieceCounts) {
  const RuleAst rule = parse_rule(kExhibit[0]);
  std::set<int> seen;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const auto s = new_episode(rule, EpisodeParams{}, seed);
    const int k = s.board.piece_count();
    ASSERT_GE(k, 5);
    ASSERT_LE(k, 10);
    seen.insert(k);
    EXPECT_EQ(s.board.length(), 20);
    EXPECT_EQ(s.initial_board, s.board);
  }
  EXPECT_EQ(seen.size(), 6u);
}

TEST(NewEpisode, UniformOverConfigurations) {
  // Enumeration oracle: the 160 boards with exactly three pieces over R,G on six cells.
  std::map<std::string, int> counts;
  for (const auto& b : oracle::all_boards(6, 3, 2)) {
    int k = 0;
    for (char ch : b) k += ch != '.';
    if (k == 3) counts[b] = 0;
  }
  ASSERT_EQ(counts.size(), 160u);
  const RuleAst rule = parse_rule("order=any; bucket=any");
  const int draws = 10000;
  for (int seed = 0; seed < draws; ++seed) {
    const auto s = new_episode(rule, small(6, 3, 3, 2), static_cast<std::uint64_t>(seed));
    auto it = counts.find(s.board.pattern());
    ASSERT_NE(it, counts.end()) << s.board.pattern();
    ++it->second;
  }
  const double p = 1.0 / 160.0;
  const double expected = draws * p;
  const double sigma = std::sqrt(draws * p * (1.0 - p));
  double chi2 = 0.0;
  for (const auto& [board, n] : counts) {
    EXPECT_NEAR(n, expected, 3.0 * sigma) << board;
    chi2 += (n - expected) * (n - expected) / expected;
  }
  // 159 degrees of freedom; 0.999 quantile is about 219.
  EXPECT_LT(chi2, 219.0);
}

TEST(NewEpisode, Errors) {
  EXPECT_THROW(new_episode(parse_rule("order=any; bucket=any; when at(25, red) then move=3, bucket=right"),
                           EpisodeParams{}, 1),
               std::invalid_argument);
  EXPECT_THROW(new_episode(parse_rule(kExhibit[0]), EpisodeParams{5, 1, 6, 2, 0.9}, 1),
               std::invalid_argument);
}

TEST(AttemptMove, LeftToRight) {
  auto s = from(kExhibit[0], "..R...B...");
  auto out = attempt_move(s, {7, Bucket::Left});
  EXPECT_FALSE(out.accepted);
  EXPECT_EQ(out.reward, -1);
  out = attempt_move(s, {3, Bucket::Right});
  EXPECT_TRUE(out.accepted);
  EXPECT_EQ(out.reward, 1);
  EXPECT_EQ(out.status, EpisodeStatus::InProgress);
  out = attempt_move(s, {7, Bucket::Left});
  EXPECT_EQ(out, (Outcome{true, 1, EpisodeStatus::Cleared}));
  EXPECT_THROW(attempt_move(s, {7, Bucket::Left}), EpisodeFinished);
  EXPECT_EQ(s.attempt_count, 3);
  EXPECT_EQ(s.failures.size(), 1u);
  EXPECT_EQ(s.successes.size(), 2u);
}

TEST(AttemptMove, EmptyCellIsRejectionAndRangeIsChecked) {
  auto s = from(kExhibit[0], "..R.");
  EXPECT_FALSE(attempt_move(s, {1, Bucket::Left}).accepted);
  EXPECT_THROW(attempt_move(s, {0, Bucket::Left}), std::out_of_range);
  EXPECT_THROW(attempt_move(s, {5, Bucket::Left}), std::out_of_range);
}

TEST(AttemptMove, RedSeventhMustBeThirdRight) {
  auto s = from(kExhibit[4], "R.G...R...B.........");
  EXPECT_FALSE(attempt_move(s, {7, Bucket::Right}).accepted); // too early
  EXPECT_TRUE(attempt_move(s, {1, Bucket::Left}).accepted);
  EXPECT_FALSE(attempt_move(s, {7, Bucket::Right}).accepted);
  EXPECT_TRUE(attempt_move(s, {11, Bucket::Left}).accepted);
  EXPECT_FALSE(attempt_move(s, {3, Bucket::Left}).accepted); // third must be the red one
  EXPECT_FALSE(attempt_move(s, {7, Bucket::Left}).accepted);
  EXPECT_TRUE(attempt_move(s, {7, Bucket::Right}).accepted);
  EXPECT_TRUE(attempt_move(s, {3, Bucket::Left}).accepted);
  EXPECT_EQ(s.status, EpisodeStatus::Cleared);
}

TEST(AttemptMove, RedSeventhUntriggered) {
  auto s = from(kExhibit[4], "R.G...B...R.........");
  for (int p : {7, 11, 1, 3}) EXPECT_TRUE(attempt_move(s, {p, Bucket::Left}).accepted);
}

TEST(AttemptMove, ConfigGuard) {
  const char* rule =
      "order=any; bucket=any;"
      "when config(R..G..) then move=1, bucket=right; when config(R..G..) then move=2, bucket=right";
  auto s = from(rule, "R..G..");
  EXPECT_FALSE(attempt_move(s, {4, Bucket::Left}).accepted);
  EXPECT_TRUE(attempt_move(s, {4, Bucket::Right}).accepted);
  EXPECT_FALSE(attempt_move(s, {1, Bucket::Left}).accepted);
  EXPECT_TRUE(attempt_move(s, {1, Bucket::Right}).accepted);
  auto other = from(rule, "R..B..");
  EXPECT_TRUE(attempt_move(other, {4, Bucket::Left}).accepted);
}

TEST(AttemptMove, PerColorAlternation) {
  auto s = from("order=any; bucket=map(blue:alternate, default:any)", "BBGB");
  EXPECT_TRUE(attempt_move(s, {1, Bucket::Right}).accepted);
  EXPECT_TRUE(attempt_move(s, {3, Bucket::Right}).accepted); // green is free
  EXPECT_FALSE(attempt_move(s, {2, Bucket::Right}).accepted);
  EXPECT_TRUE(attempt_move(s, {2, Bucket::Left}).accepted);
  EXPECT_TRUE(attempt_move(s, {4, Bucket::Right}).accepted);
}

TEST(AttemptMove, OutsideInRight) {
  auto s = from("order=outside-in-right; bucket=any", "RGBY");
  EXPECT_FALSE(attempt_move(s, {1, Bucket::Left}).accepted);
  EXPECT_TRUE(attempt_move(s, {4, Bucket::Left}).accepted);
  EXPECT_TRUE(attempt_move(s, {1, Bucket::Left}).accepted);
  EXPECT_FALSE(attempt_move(s, {2, Bucket::Left}).accepted);
  EXPECT_TRUE(attempt_move(s, {3, Bucket::Left}).accepted);
}

TEST(AttemptMove, Stalemate) {
  auto start = from("order=any; bucket=left; when at(1, red) then move=1, bucket=right", "RG");
  EXPECT_EQ(start.status, EpisodeStatus::Stalemate);
  EXPECT_TRUE(legal_moves(start).empty());

  auto s = from("order=any; bucket=left; when at(1, red) then move=2, bucket=right", "RG....");
  EXPECT_EQ(s.status, EpisodeStatus::InProgress);
  const auto out = attempt_move(s, {2, Bucket::Left});
  EXPECT_TRUE(out.accepted);
  EXPECT_EQ(out.status, EpisodeStatus::Stalemate);
  EXPECT_THROW(attempt_move(s, {1, Bucket::Right}), EpisodeFinished);
}

TEST(LegalMoves, Examples) {
  auto s = from("order=ltr; bucket=nearest", ".R......B...........");
  EXPECT_EQ(legal_moves(s), (std::vector<MoveAttempt>{{2, Bucket::Left}}));
  auto any = from("order=any; bucket=any", "R.G.B.");
  EXPECT_EQ(legal_moves(any).size(), 6u);
}

TEST(LegalMoves, AgreesWithAttemptMove) {
  SplitMix64 rng(99);
  int checked = 0;
  std::vector<RuleAst> rules;
  for (const char* r : kExhibit) rules.push_back(parse_rule(r));
  rules.push_back(parse_rule("order=outside-in-right; bucket=map(green:nearest, yellow:alternate, default:farthest)"));
  while (checked < 100000) {
    const RuleAst& rule = rules[rng.below(rules.size())];
    EpisodeState s = new_episode(rule, EpisodeParams{}, rng.next());
    while (s.status == EpisodeStatus::InProgress && checked < 100000) {
      const auto legal = legal_moves(s);
      const std::set<MoveAttempt> legal_set(legal.begin(), legal.end());
      for (int k = 0; k < 20; ++k, ++checked) {
        const MoveAttempt m{1 + static_cast<int>(rng.below(20)), rng.below(2) ? Bucket::Left : Bucket::Right};
        EpisodeState copy = s;
        ASSERT_EQ(attempt_move(copy, m).accepted, legal_set.contains(m));
      }
      attempt_move(s, legal[rng.below(legal.size())]);
    }
  }
}

TEST(Invariants, TransitionsOnRandomPlay) {
  SplitMix64 rng(2024);
  for (int episode = 0; episode < 300; ++episode) {
    const RuleAst rule = parse_rule(kExhibit[rng.below(6)]);
    EpisodeState s = new_episode(rule, EpisodeParams{}, rng.next());
    const int initial = s.board.piece_count();
    while (s.status == EpisodeStatus::InProgress) {
      const MoveAttempt m{1 + static_cast<int>(rng.below(20)), rng.below(2) ? Bucket::Left : Bucket::Right};
      const EpisodeState before = s;
      const Outcome out = attempt_move(s, m);
      ASSERT_EQ(out.accepted, out.reward == 1);
      ASSERT_EQ(!out.accepted, out.reward == -1);
      ASSERT_EQ(static_cast<int>(s.successes.size()) + s.board.piece_count(), initial);
      ASSERT_EQ(out.status == EpisodeStatus::Cleared, s.board.empty());
      if (!out.accepted) {
        ASSERT_EQ(s.board, before.board);
        EpisodeState again = s;
        ASSERT_EQ(attempt_move(again, m), out);
      }
    }
    EXPECT_EQ(s.status, EpisodeStatus::Cleared); // example rules never stall
  }
}

TEST(Invariants, FailureBlindness) {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const RuleAst rule = parse_rule(kExhibit[rng.below(6)]);
    const std::uint64_t seed = rng.next();
    EpisodeState clean = new_episode(rule, EpisodeParams{}, seed);
    EpisodeState noisy = clean;
    while (clean.status == EpisodeStatus::InProgress) {
      for (int extra = static_cast<int>(rng.below(3)); extra > 0; --extra) {
        const MoveAttempt m{1 + static_cast<int>(rng.below(20)), rng.below(2) ? Bucket::Left : Bucket::Right};
        EpisodeState probe = noisy;
        if (!attempt_move(probe, m).accepted) attempt_move(noisy, m);
      }
      ASSERT_EQ(legal_moves(clean), legal_moves(noisy));
      const auto legal = legal_moves(clean);
      const MoveAttempt m = legal[rng.below(legal.size())];
      ASSERT_EQ(attempt_move(clean, m), attempt_move(noisy, m));
    }
  }
}

TEST(Invariants, DeterministicTranscript) {
  auto play = [](std::uint64_t seed) {
    const RuleAst rule = parse_rule(kExhibit[5]);
    EpisodeState s = new_episode(rule, EpisodeParams{}, seed);
    SplitMix64 rng(seed);
    std::vector<Outcome> log;
    while (s.status == EpisodeStatus::InProgress)
      log.push_back(attempt_move(s, {1 + static_cast<int>(rng.below(20)), rng.below(2) ? Bucket::Left : Bucket::Right}));
    return std::make_pair(s, log);
  };
  EXPECT_EQ(play(5), play(5));
}

TEST(ExhaustiveOracle, ExhibitRulesOnSmallBoards) {
  const std::vector<std::pair<std::string, oracle::Reference>> cases = {
      {kExhibit[0], oracle::item1},
      {kExhibit[1], oracle::item2},
      {kExhibit[2], oracle::item3},
      {kExhibit[3], oracle::item4},
      {kExhibit[5], oracle::item6},
  };
  for (int colors : {2, 3}) {
    for (const auto& [rule, ref] : cases) {
      const auto r = oracle::sweep(rule, ref, 6, 3, colors);
      EXPECT_EQ(r.divergences, 0) << rule << ": " << r.first_divergence;
      EXPECT_EQ(r.stalls, 0) << rule;
      EXPECT_GT(r.checks, 0);
    }
    for (int cell = 1; cell <= 6; ++cell) {
      const std::string rule = "order=any; bucket=any; when at(" + std::to_string(cell) +
                               ", red) then move=3, bucket=right";
      const auto r = oracle::sweep(rule, [cell](const oracle::Ctx& c) { return oracle::item5(c, cell); },
                                   6, 3, colors);
      EXPECT_EQ(r.divergences, 0) << rule << ": " << r.first_divergence;
      EXPECT_EQ(r.stalls, 0) << rule;
    }
  }
}
