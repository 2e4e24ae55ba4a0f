// rulegame: command-line front end.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "rulegame/config.hpp"
#include "rulegame/counting.hpp"
#include "rulegame/harness.hpp"
#include "rulegame/rule_analysis.hpp"
#include "rulegame/rule_parser.hpp"
#include "rulegame/service.hpp"
#include "rulegame/transcript.hpp"

namespace fs = std::filesystem;
using namespace rulegame;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kUsage = 2;

/// Bad input from the user; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  try {
    return load_experiment_config(read_file(path));
  } catch (const ConfigError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

RuleAst load_rule(const std::string& path) {
  try {
    return parse_rule(read_file(path));
  } catch (const ParseError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

/// Parses and validates; rule errors are usage errors.
RuleAst load_valid_rule(const std::string& path, const EpisodeParams& params) {
  RuleAst rule = load_rule(path);
  const auto report = validate(rule, params);
  if (!report.ok) {
    std::string msg = path + ": invalid rule";
    for (const auto& e : report.errors) msg += "\n  " + e;
    throw UsageError(msg);
  }
  return rule;
}

std::string rule_id_of(const std::string& path) { return fs::path(path).stem().string(); }

void write_text_file(const std::string& path, const std::string& content) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + path);
}

// ---------------------------------------------------------------------------

struct ValidateArgs {
  std::vector<std::string> files;
  std::string config;
};

int cmd_validate(const ValidateArgs& a) {
  const auto cfg = load_config(a.config);
  bool all_ok = true;
  for (const auto& file : a.files) {
    const RuleAst rule = load_rule(file);
    const auto report = validate(rule, cfg.game);
    const auto size = rule_size(rule);
    std::cout << file << '\n'
              << "  canonical: " << canonical_form(rule) << '\n'
              << "  history: " << history_class_name(report.history) << '\n'
              << "  failure_independent: " << (report.failure_independent ? "true" : "false") << '\n'
              << "  size: terms=" << size.term_count << " codebook=" << size.codebook_count
              << " bytes=" << size.canonical_bytes << '\n';
    for (const auto& w : report.warnings) std::cout << "  warning: " << w << '\n';
    for (const auto& e : report.errors) std::cout << "  error: " << e << '\n';
    std::cout << "  " << (report.ok ? "ok" : "invalid") << '\n';
    all_ok = all_ok && report.ok;
  }
  return all_ok ? kOk : kUsage;
}

struct TrainArgs {
  std::string config;
  std::vector<std::string> rules;
  std::string out;
  std::string agent;
  int seeds = 0;
  int episodes = 0;
  long long first_seed = -1;
  int threads = -1;
  std::string transcripts_dir;
  std::string qtable_dir;
};

int cmd_train(const TrainArgs& a) {
  auto cfg = load_config(a.config);
  if (!a.agent.empty()) {
    try {
      cfg.agent.kind = parse_agent_kind(a.agent);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (a.seeds > 0) cfg.seed_count = a.seeds;
  if (a.episodes > 0) cfg.episodes = a.episodes;
  if (a.first_seed >= 0) cfg.first_seed = static_cast<std::uint64_t>(a.first_seed);
  if (a.threads >= 0) cfg.threads = static_cast<unsigned>(a.threads);

  std::vector<std::pair<std::string, RuleAst>> rules;
  std::set<std::string> ids;
  for (const auto& path : a.rules) {
    const std::string id = rule_id_of(path);
    if (!ids.insert(id).second) throw UsageError("duplicate rule id '" + id + "'");
    rules.emplace_back(id, load_valid_rule(path, cfg.game));
  }

  std::optional<TranscriptStore> store;
  if (!a.transcripts_dir.empty()) store.emplace(a.transcripts_dir);
  if (!a.qtable_dir.empty()) fs::create_directories(a.qtable_dir);

  const auto seeds = cfg.seeds();
  const std::string learner(agent_kind_name(cfg.agent.kind));
  std::vector<LearningCurve> all;
  for (const auto& [id, rule] : rules) {
    TrainingOptions options;
    options.max_attempts = cfg.max_attempts;
    options.threads = cfg.threads;
    const std::string hash = rule_hash(canonical_form(rule));
    if (store) {
      std::map<std::uint64_t, std::string> session_ids;
      for (auto seed : seeds) {
        const std::string sid = name_uuid(hash + "/" + learner + "/" + std::to_string(seed));
        if (store->exists(sid)) fs::remove(store->path_of(sid));
        store->create_session(
            make_session_record(sid, LearnerKind::Machine, learner, rule, cfg.game, seed));
        session_ids[seed] = sid;
      }
      options.sink_for_seed = [&store, session_ids](std::uint64_t seed) {
        return transcript_sink(*store, session_ids.at(seed));
      };
    }
    if (!a.qtable_dir.empty()) {
      options.on_agent_done = [&a, id = id](std::uint64_t seed, const Agent& agent) {
        if (auto q = dynamic_cast<const QLearningAgent<>*>(&agent)) {
          std::ostringstream csv;
          q->export_csv(csv);
          write_text_file((fs::path(a.qtable_dir) / (id + "_" + std::to_string(seed) + ".csv")).string(),
                          csv.str());
        }
      };
    }
    auto curves = run_training(rule, id, cfg.agent, cfg.game, cfg.episodes, seeds, options);

    int reached = 0;
    std::vector<double> difficulty;
    for (const auto& c : curves) {
      const auto d = difficulty_of(c, DifficultyMeasure::EpisodesToCriterion, cfg.criterion);
      reached += d.censored ? 0 : 1;
      difficulty.push_back(d.value);
    }
    std::cout << id << ": " << learner << ", " << curves.size() << " seeds x " << cfg.episodes
              << " episodes; criterion reached in " << reached << "/" << curves.size()
              << "; median episodes-to-criterion " << format_real(median(difficulty)) << '\n';
    for (auto& c : curves) all.push_back(std::move(c));
  }
  std::ostringstream csv;
  write_curves_csv(csv, all);
  write_text_file(a.out, csv.str());
  std::cout << "wrote " << a.out << '\n';
  return kOk;
}

struct PairsArgs {
  std::string x;
  std::string y;
  std::string out;
  std::string config;
  double alpha = -1.0;
  std::string measure;
};

int cmd_pairs(const PairsArgs& a) {
  auto cfg = load_config(a.config);
  if (a.alpha >= 0.0) {
    if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw UsageError("--alpha must be in (0,1)");
    cfg.alpha = a.alpha;
  }
  if (!a.measure.empty()) {
    try {
      cfg.measure = parse_measure(a.measure);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  auto load = [&](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read " + path);
    try {
      return read_difficulty_csv(in, cfg.measure, cfg.criterion);
    } catch (const ConfigError& e) {
      throw UsageError(path + ": " + e.what());
    }
  };
  const auto xs = load(a.x), ys = load(a.y);
  std::map<std::string, std::vector<double>> sx, sy;
  for (const auto& r : xs) sx[r.rule].push_back(r.difficulty);
  for (const auto& r : ys) sy[r.rule].push_back(r.difficulty);
  DifficultyTable table(cfg.measure);
  int shared = 0;
  for (const auto& [rule, values] : sx) {
    auto it = sy.find(rule);
    if (it == sy.end()) {
      std::cerr << "note: rule " << rule << " only in " << a.x << "; skipped\n";
      continue;
    }
    ++shared;
    for (double v : values) table.add(rule, "X", v);
    for (double v : it->second) table.add(rule, "Y", v);
  }
  for (const auto& [rule, values] : sy)
    if (!sx.contains(rule)) std::cerr << "note: rule " << rule << " only in " << a.y << "; skipped\n";
  if (shared == 0) throw UsageError("the two inputs share no rules");

  const auto pairs = detect_interesting_pairs(table, "X", "Y", cfg.alpha);
  std::ostringstream csv;
  write_pairs_csv(csv, pairs);
  write_text_file(a.out, csv.str());
  std::cout << shared << " rules compared, " << pairs.size() << " interesting pair"
            << (pairs.size() == 1 ? "" : "s") << " at alpha " << format_real(cfg.alpha) << '\n';
  for (const auto& p : pairs)
    std::cout << "  " << p.rule_a << " vs " << p.rule_b << ": " << p.rule_a << " harder for "
              << (p.harder_on_a == Axis::X ? "X" : "Y") << " (p_x " << format_real(p.p_axis_x)
              << ", p_y " << format_real(p.p_axis_y) << ")\n";
  std::cout << "wrote " << a.out << '\n';
  return kOk;
}

struct TransferArgs {
  std::string from;
  std::string to;
  std::string config;
  int phase1 = 200;
  int phase2 = 0;
  int seeds = 0;
  std::string out;
};

int cmd_transfer(const TransferArgs& a) {
  auto cfg = load_config(a.config);
  if (a.seeds > 0) cfg.seed_count = a.seeds;
  if (a.phase1 < 0) throw UsageError("--phase1 must be >= 0");
  const RuleAst from = load_valid_rule(a.from, cfg.game);
  const RuleAst to = load_valid_rule(a.to, cfg.game);
  TransferOptions options;
  options.episodes_phase2 = a.phase2 > 0 ? a.phase2 : cfg.episodes;
  options.criterion = cfg.criterion;
  options.training.max_attempts = cfg.max_attempts;
  options.training.threads = cfg.threads;
  const auto seeds = cfg.seeds();
  const auto deltas = transfer_deltas(from, to, cfg.agent, cfg.game, a.phase1, seeds, options);
  std::cout << "transfer " << rule_id_of(a.from) << " -> " << rule_id_of(a.to) << ": index "
            << format_real(median(deltas)) << " over " << deltas.size() << " seeds\n";
  if (!a.out.empty()) {
    std::ostringstream csv;
    csv << "seed,delta\n";
    for (std::size_t i = 0; i < seeds.size(); ++i) csv << seeds[i] << ',' << format_real(deltas[i]) << '\n';
    write_text_file(a.out, csv.str());
    std::cout << "wrote " << a.out << '\n';
  }
  return kOk;
}

int cmd_count(int length, int pieces, int colors) {
  BigInt n;
  try {
    n = count_initial_configs(length, pieces, colors);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::cout << n.str() << " ≈" << scientific(n) << '\n';
  return kOk;
}

int cmd_rulespace(int length, int colors) {
  BigInt n;
  try {
    n = rule_space_upper_bound(length, colors);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::cout << n.str() << " ≈" << scientific(n) << '\n';
  return kOk;
}

struct ReplayArgs {
  std::vector<std::string> paths;
  std::string strip_to;
};

int cmd_replay(const ReplayArgs& a) {
  std::vector<fs::path> files;
  for (const auto& p : a.paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.path().extension() == ".jsonl") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      files.emplace_back(p);
    } else {
      throw UsageError("no such file or directory: " + p);
    }
  }
  if (files.empty()) throw UsageError("no transcripts found");
  int diverged = 0;
  for (const auto& f : files) {
    const std::string content = read_file(f.string());
    Transcript t;
    try {
      t = parse_transcript(content);
    } catch (const MalformedRecord& e) {
      throw UsageError(f.string() + ": " + e.what());
    }
    ReplayReport report;
    try {
      report = replay(t);
    } catch (const std::invalid_argument& e) {
      throw UsageError(f.string() + ": " + e.what());
    }
    std::cout << t.header.session_id << ": " << report.episodes << " episodes, " << report.attempts
              << " attempts, " << report.divergences.size() << " divergences\n";
    for (const auto& d : report.divergences)
      std::cout << "  episode " << d.episode << " attempt " << d.attempt << ": " << d.detail << '\n';
    diverged += report.ok() ? 0 : 1;
    if (!a.strip_to.empty())
      write_text_file((fs::path(a.strip_to) / f.filename()).string(), strip_timestamps(content));
  }
  std::cout << files.size() << " sessions, " << diverged << " with divergences\n";
  return diverged == 0 ? kOk : kRuntimeFailure;
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8787;
  std::string rules_dir = "rules";
  std::string data_dir = "data";
  std::string static_dir = "app";
  std::string config;
  int episodes_target = 10;
};

httplib::Server* g_server = nullptr;

extern "C" void stop_server(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const ServeArgs& a) {
  const auto cfg = load_config(a.config);
  if (a.port < 0 || a.port > 65535) throw UsageError("--port must be in 0..65535");
  if (a.episodes_target < 1) throw UsageError("--episodes-target must be >= 1");
  ServiceConfig sc;
  sc.rules_dir = a.rules_dir;
  sc.data_dir = a.data_dir;
  sc.params = cfg.game;
  sc.default_episodes_target = a.episodes_target;
  SessionService service(sc);
  httplib::Server server;
  mount_routes(server, service, fs::path(a.static_dir));
  if (!server.bind_to_port(a.host, a.port)) {
    std::cerr << "error: cannot bind " << a.host << ":" << a.port << '\n';
    return kRuntimeFailure;
  }
  g_server = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  std::cout << "serving on http://" << a.host << ":" << a.port << "/v1 (rules " << a.rules_dir
            << ", data " << a.data_dir << ")" << std::endl;
  server.listen_after_bind();
  g_server = nullptr;
  return kOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hidden-rule board game: rules, training, statistics and a play server", "rulegame"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  ValidateArgs va;
  auto* validate_cmd = app.add_subcommand("validate", "Parse and check rule files");
  validate_cmd->add_option("files", va.files, "Rule files")->required()->check(CLI::ExistingFile);
  validate_cmd->add_option("--config", va.config, "Experiment config (for L, K and C)");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train learners and write learning curves as CSV");
  train_cmd->add_option("--config", ta.config, "Experiment config file");
  train_cmd->add_option("--rule", ta.rules, "Rule file (repeatable)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", ta.out, "Output curve CSV")->required();
  train_cmd->add_option("--agent", ta.agent, "Override agent kind (random|qlearn)");
  train_cmd->add_option("--seeds", ta.seeds, "Override seed count")->check(CLI::PositiveNumber);
  train_cmd->add_option("--first-seed", ta.first_seed, "Override first seed")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--episodes", ta.episodes, "Override episode count")->check(CLI::PositiveNumber);
  train_cmd->add_option("--threads", ta.threads, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--transcripts-dir", ta.transcripts_dir, "Write one transcript per seed here");
  train_cmd->add_option("--qtable-dir", ta.qtable_dir, "Write final Q-tables as CSV here");

  PairsArgs pa;
  auto* pairs_cmd = app.add_subcommand("pairs", "Find rule pairs whose difficulty order reverses between two learners");
  pairs_cmd->add_option("--x", pa.x, "Curve or difficulty CSV for learner X")->required()->check(CLI::ExistingFile);
  pairs_cmd->add_option("--y", pa.y, "Curve or difficulty CSV for learner Y")->required()->check(CLI::ExistingFile);
  pairs_cmd->add_option("--out", pa.out, "Output pair report CSV")->required();
  pairs_cmd->add_option("--config", pa.config, "Experiment config (criterion settings, alpha)");
  pairs_cmd->add_option("--alpha", pa.alpha, "One-sided significance level");
  pairs_cmd->add_option("--measure", pa.measure, "Difficulty measure for curve input (criterion|asymptote)");

  TransferArgs xa;
  auto* transfer_cmd = app.add_subcommand("transfer", "Measure transfer from one rule to another");
  transfer_cmd->add_option("--from", xa.from, "Pretraining rule file")->required()->check(CLI::ExistingFile);
  transfer_cmd->add_option("--to", xa.to, "Target rule file")->required()->check(CLI::ExistingFile);
  transfer_cmd->add_option("--config", xa.config, "Experiment config file");
  transfer_cmd->add_option("--phase1", xa.phase1, "Pretraining episodes")->capture_default_str();
  transfer_cmd->add_option("--phase2", xa.phase2, "Target-rule budget (default: config episodes)");
  transfer_cmd->add_option("--seeds", xa.seeds, "Override seed count")->check(CLI::PositiveNumber);
  transfer_cmd->add_option("--out", xa.out, "Per-seed deltas CSV");

  int count_l = 0, count_k = 0, count_c = 0;
  auto* count_cmd = app.add_subcommand("count", "Number of initial boards with K pieces");
  count_cmd->add_option("L", count_l, "Board length")->required();
  count_cmd->add_option("K", count_k, "Pieces")->required();
  count_cmd->add_option("C", count_c, "Colors")->required();

  int space_l = 0, space_c = 0;
  auto* space_cmd = app.add_subcommand("rulespace", "Upper bound on the number of distinct rules");
  space_cmd->add_option("L", space_l, "Board length")->required();
  space_cmd->add_option("C", space_c, "Colors")->required();

  ReplayArgs ra;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run transcripts through the engine and report divergences");
  replay_cmd->add_option("paths", ra.paths, "Transcript files or directories")->required();
  replay_cmd->add_option("--strip-timestamps", ra.strip_to, "Also write timestamp-free copies to this directory");

  ServeArgs sa;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP game server");
  serve_cmd->add_option("--host", sa.host, "Bind address")->envname("RULEGAME_HOST")->capture_default_str();
  serve_cmd->add_option("--port", sa.port, "Port")->envname("RULEGAME_PORT")->capture_default_str();
  serve_cmd->add_option("--rules-dir", sa.rules_dir, "Directory of .rule files")->envname("RULEGAME_RULES_DIR")->capture_default_str();
  serve_cmd->add_option("--data-dir", sa.data_dir, "Transcript directory")->envname("RULEGAME_DATA_DIR")->capture_default_str();
  serve_cmd->add_option("--static-dir", sa.static_dir, "Files served under /app/")->envname("RULEGAME_STATIC_DIR")->capture_default_str();
  serve_cmd->add_option("--config", sa.config, "Experiment config (board parameters)");
  serve_cmd->add_option("--episodes-target", sa.episodes_target, "Default episodes per session")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*validate_cmd) return cmd_validate(va);
    if (*train_cmd) return cmd_train(ta);
    if (*pairs_cmd) return cmd_pairs(pa);
    if (*transfer_cmd) return cmd_transfer(xa);
    if (*count_cmd) return cmd_count(count_l, count_k, count_c);
    if (*space_cmd) return cmd_rulespace(space_l, space_c);
    if (*replay_cmd) return cmd_replay(ra);
    if (*serve_cmd) return cmd_serve(sa);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsage;
}
