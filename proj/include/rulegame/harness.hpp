#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rulegame/agents.hpp"
#include "rulegame/engine.hpp"
#include "rulegame/stats.hpp"

namespace rulegame {

struct EpisodeRecord {
  int episode = 0; // 1-based
  int attempts = 0;
  int errors = 0; // rejected attempts
  int reward_sum = 0;
  double discounted_return = 0.0;
  bool cleared = false;

  int successes() const noexcept { return attempts - errors; }
  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct LearningCurve {
  std::string rule_id;
  std::string learner_id;
  std::uint64_t seed = 0;
  std::vector<EpisodeRecord> episodes;
};

/// successes / attempts. Throws std::domain_error for an episode with no attempts.
inline double per_round_success_rate(const EpisodeRecord& rec) {
  if (rec.attempts < 1) throw std::domain_error("per_round_success_rate: zero attempts");
  return static_cast<double>(rec.successes()) / static_cast<double>(rec.attempts);
}

/// Sum over t of gamma^t * r_t, t from 0.
inline double discounted_return(std::span<const int> rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0,1)");
  double total = 0.0, weight = 1.0;
  for (int r : rewards) {
    total += weight * r;
    weight *= gamma;
  }
  return total;
}

/// Smallest e with episodes e..e+W-1 all at or under `max_errors`.
inline std::optional<int> episodes_to_criterion(const LearningCurve& curve, int window = 5,
                                                int max_errors = 0) {
  if (window < 1) throw std::invalid_argument("criterion window must be >= 1");
  int run = 0;
  for (std::size_t i = 0; i < curve.episodes.size(); ++i) {
    run = curve.episodes[i].errors <= max_errors ? run + 1 : 0;
    if (run == window) return static_cast<int>(i) - window + 2;
  }
  return std::nullopt;
}

/// Smallest e such that the trailing W-episode mean error rate stays within
/// `eps` of its minimum at every episode >= e. Error rate is errors/attempts.
inline std::optional<int> asymptote_point(const LearningCurve& curve, double eps = 0.05,
                                          int window = 20) {
  if (window < 1 || !(eps > 0.0)) throw std::invalid_argument("need window >= 1 and eps > 0");
  const auto n = static_cast<int>(curve.episodes.size());
  if (n < window) return std::nullopt;
  std::vector<double> rate(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& e = curve.episodes[static_cast<std::size_t>(i)];
    rate[static_cast<std::size_t>(i)] =
        e.attempts > 0 ? static_cast<double>(e.errors) / e.attempts : 0.0;
  }
  // moving[j] is the mean over episodes j-W+2 .. j+1 (0-based j >= W-1)
  std::vector<double> moving(static_cast<std::size_t>(n), 0.0);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    sum += rate[static_cast<std::size_t>(i)];
    if (i >= window) sum -= rate[static_cast<std::size_t>(i - window)];
    if (i >= window - 1) moving[static_cast<std::size_t>(i)] = sum / window;
  }
  const double floor =
      *std::min_element(moving.begin() + (window - 1), moving.end());
  int answer = 1;
  for (int i = window - 1; i < n; ++i)
    if (moving[static_cast<std::size_t>(i)] - floor > eps + 1e-12) answer = i + 2;
  return answer;
}

// ---------------------------------------------------------------------------
// Training

/// One attempt as seen by a transcript writer.
struct AttemptEvent {
  int episode = 0;
  int attempt = 0; // 1-based within the episode
  const Board* board_before = nullptr;
  MoveAttempt move;
  Outcome outcome;
};

using AttemptSink = std::function<void(const AttemptEvent&)>;

struct TrainingOptions {
  int max_attempts = 200; // per episode; an episode that hits the cap is not cleared
  unsigned threads = 0;   // 0: hardware concurrency
  /// Optional per-seed sink; each returned sink is only called from one thread.
  std::function<AttemptSink(std::uint64_t seed)> sink_for_seed;
  /// Optional; sees each trained agent before it is discarded.
  std::function<void(std::uint64_t seed, const Agent& agent)> on_agent_done;
};

inline constexpr std::uint64_t kAgentStream = 0;
inline constexpr std::uint64_t kPretrainStream = 0x5052455452414e4eULL;

/// Seed of the agent trained under run seed `seed`.
constexpr std::uint64_t agent_seed(std::uint64_t seed) noexcept {
  return derive_seed(seed, kAgentStream);
}

/// Board seed of episode `episode` (1-based) under run seed `seed`.
constexpr std::uint64_t episode_seed(std::uint64_t seed, int episode) noexcept {
  return derive_seed(seed, static_cast<std::uint64_t>(episode));
}

/// Plays one episode to CLEARED, STALEMATE or the attempt cap.
inline EpisodeRecord play_episode(Agent& agent, EpisodeState& state, int episode_index,
                                  int max_attempts, const AttemptSink& sink = {}) {
  EpisodeRecord rec;
  rec.episode = episode_index;
  std::vector<int> rewards;
  while (state.status == EpisodeStatus::InProgress && rec.attempts < max_attempts) {
    const Observation obs = observe_state(state);
    const MoveAttempt move = agent.select_move(obs);
    const Board before = state.board;
    const Outcome outcome = attempt_move(state, move);
    agent.observe(obs, move, outcome, observe_state(state));
    ++rec.attempts;
    rec.errors += outcome.accepted ? 0 : 1;
    rewards.push_back(outcome.reward);
    if (sink) sink({episode_index, rec.attempts, &before, move, outcome});
  }
  agent.end_episode();
  rec.reward_sum = rec.successes() - rec.errors;
  rec.discounted_return = discounted_return(rewards, state.params.gamma);
  rec.cleared = state.status == EpisodeStatus::Cleared;
  return rec;
}

/// Trains `agent` for `episodes` episodes whose boards come from the
/// sub-streams of `board_seed`.
inline std::vector<EpisodeRecord> train_agent(Agent& agent, const RuleAst& rule,
                                              const EpisodeParams& params, int episodes,
                                              std::uint64_t board_seed, int max_attempts,
                                              const AttemptSink& sink = {}) {
  std::vector<EpisodeRecord> out;
  out.reserve(static_cast<std::size_t>(std::max(episodes, 0)));
  for (int e = 1; e <= episodes; ++e) {
    EpisodeState state = new_episode(rule, params, episode_seed(board_seed, e));
    out.push_back(play_episode(agent, state, e, max_attempts, sink));
  }
  return out;
}

namespace detail {

// Runs fn(i) for i in [0, n) across threads; callers write results by index.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

} // namespace detail

/// One learning curve per seed, each from a fresh agent. Output order follows
/// `seeds` regardless of threading.
inline std::vector<LearningCurve> run_training(const RuleAst& rule, const std::string& rule_id,
                                               const AgentConfig& agent_config,
                                               const EpisodeParams& params, int episodes,
                                               std::span<const std::uint64_t> seeds,
                                               const TrainingOptions& options = {}) {
  if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
  agent_config.check();
  std::vector<LearningCurve> curves(seeds.size());
  detail::parallel_for(seeds.size(), options.threads, [&](std::size_t i) {
    AgentConfig cfg = agent_config;
    cfg.seed = agent_seed(seeds[i]);
    auto agent = new_agent(cfg);
    AttemptSink sink = options.sink_for_seed ? options.sink_for_seed(seeds[i]) : AttemptSink{};
    curves[i].rule_id = rule_id;
    curves[i].learner_id = std::string(agent_kind_name(cfg.kind));
    curves[i].seed = seeds[i];
    curves[i].episodes =
        train_agent(*agent, rule, params, episodes, seeds[i], options.max_attempts, sink);
    if (options.on_agent_done) options.on_agent_done(seeds[i], *agent);
  });
  return curves;
}

// ---------------------------------------------------------------------------
// Difficulty

enum class DifficultyMeasure : std::uint8_t { EpisodesToCriterion, AsymptotePoint };

struct CriterionSettings {
  int window = 5;
  int max_errors = 0;
  double asymptote_eps = 0.05;
  int asymptote_window = 20;
};

struct Difficulty {
  double value = 0.0;
  bool censored = false; // criterion never met; value is budget + 1
};

inline Difficulty difficulty_of(const LearningCurve& curve, DifficultyMeasure measure,
                                const CriterionSettings& settings = {}) {
  const auto found = measure == DifficultyMeasure::EpisodesToCriterion
                         ? episodes_to_criterion(curve, settings.window, settings.max_errors)
                         : asymptote_point(curve, settings.asymptote_eps,
                                           settings.asymptote_window);
  if (found) return {static_cast<double>(*found), false};
  return {static_cast<double>(curve.episodes.size()) + 1.0, true};
}

/// Difficulty samples per (rule, learner), all under one measure.
class DifficultyTable {
public:
  explicit DifficultyTable(DifficultyMeasure measure = DifficultyMeasure::EpisodesToCriterion)
      : measure_(measure) {}

  DifficultyMeasure measure() const noexcept { return measure_; }

  void add(const std::string& rule, const std::string& learner, double value) {
    samples_[{rule, learner}].push_back(value);
  }

  bool has(const std::string& rule, const std::string& learner) const {
    return samples_.contains({rule, learner});
  }

  const std::vector<double>& sample(const std::string& rule, const std::string& learner) const {
    auto it = samples_.find({rule, learner});
    if (it == samples_.end())
      throw std::out_of_range("no difficulty sample for rule '" + rule + "', learner '" +
                              learner + "'");
    return it->second;
  }

  std::set<std::string> rules() const {
    std::set<std::string> out;
    for (const auto& [key, values] : samples_) out.insert(key.first);
    return out;
  }

  std::set<std::string> learners() const {
    std::set<std::string> out;
    for (const auto& [key, values] : samples_) out.insert(key.second);
    return out;
  }

  /// Applies f to every sample value.
  template <class F>
  DifficultyTable transformed(F&& f) const {
    DifficultyTable t(measure_);
    t.samples_ = samples_;
    for (auto& [key, values] : t.samples_)
      for (double& v : values) v = f(v);
    return t;
  }

private:
  DifficultyMeasure measure_;
  std::map<std::pair<std::string, std::string>, std::vector<double>> samples_;
};

enum class Axis : std::uint8_t { X, Y };

struct InterestingPair {
  std::string rule_a;
  std::string rule_b;
  Axis harder_on_a = Axis::X; // the learner axis on which rule_a is harder
  double p_axis_x = 1.0;
  double p_axis_y = 1.0;

  friend bool operator==(const InterestingPair&, const InterestingPair&) = default;
};

/// Rule pairs whose difficulty ordering reverses between learners X and Y,
/// each direction supported by a one-sided rank-sum test at `alpha`.
/// Sorted by the larger of the two p-values.
inline std::vector<InterestingPair> detect_interesting_pairs(const DifficultyTable& table,
                                                             const std::string& learner_x,
                                                             const std::string& learner_y,
                                                             double alpha = 0.05) {
  const auto rules = table.rules();
  const std::vector<std::string> ids(rules.begin(), rules.end());
  for (const auto& r : ids) {
    table.sample(r, learner_x);
    table.sample(r, learner_y);
  }
  std::vector<InterestingPair> out;
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      const auto& a = ids[i];
      const auto& b = ids[j];
      const auto x = wilcoxon_rank_sum(table.sample(a, learner_x), table.sample(b, learner_x));
      const auto y = wilcoxon_rank_sum(table.sample(a, learner_y), table.sample(b, learner_y));
      if (x.p_greater < alpha && y.p_less < alpha)
        out.push_back({a, b, Axis::X, x.p_greater, y.p_less});
      else if (x.p_less < alpha && y.p_greater < alpha)
        out.push_back({a, b, Axis::Y, x.p_less, y.p_greater});
    }
  std::stable_sort(out.begin(), out.end(), [](const auto& l, const auto& r) {
    return std::max(l.p_axis_x, l.p_axis_y) < std::max(r.p_axis_x, r.p_axis_y);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Transfer

inline double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : (values[mid - 1] + values[mid]) / 2.0;
}

struct TransferOptions {
  int episodes_phase2 = 500; // budget on the target rule
  CriterionSettings criterion;
  TrainingOptions training;
};

/// Per-seed reduction in episodes-to-criterion on `rule_to` from pretraining
/// on `rule_from`. Both arms see the same target-rule boards, and the
/// pretrained agent restarts exploration from the fresh agent's stream.
inline std::vector<double> transfer_deltas(const RuleAst& rule_from, const RuleAst& rule_to,
                                           const AgentConfig& agent_config,
                                           const EpisodeParams& params, int episodes_phase1,
                                           std::span<const std::uint64_t> seeds,
                                           const TransferOptions& options = {}) {
  agent_config.check();
  std::vector<double> deltas(seeds.size());
  const int cap = options.training.max_attempts;
  detail::parallel_for(seeds.size(), options.training.threads, [&](std::size_t i) {
    const std::uint64_t seed = seeds[i];
    AgentConfig cfg = agent_config;
    cfg.seed = agent_seed(seed);
    auto score = [&](Agent& agent) {
      LearningCurve curve;
      curve.episodes =
          train_agent(agent, rule_to, params, options.episodes_phase2, seed, cap);
      return difficulty_of(curve, DifficultyMeasure::EpisodesToCriterion, options.criterion)
          .value;
    };
    auto naive = new_agent(cfg);
    auto pretrained = new_agent(cfg);
    train_agent(*pretrained, rule_from, params, episodes_phase1,
                derive_seed(seed, kPretrainStream), cap);
    pretrained->reset_exploration(cfg.seed);
    deltas[i] = score(*naive) - score(*pretrained);
  });
  return deltas;
}

/// Median over seeds of naive minus pretrained episodes-to-criterion;
/// positive means positive transfer.
inline double transfer_index(const RuleAst& rule_from, const RuleAst& rule_to,
                             const AgentConfig& agent_config, const EpisodeParams& params,
                             int episodes_phase1, std::span<const std::uint64_t> seeds,
                             const TransferOptions& options = {}) {
  return median(transfer_deltas(rule_from, rule_to, agent_config, params, episodes_phase1,
                                seeds, options));
}

} // namespace rulegame
