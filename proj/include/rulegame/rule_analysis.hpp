#pragma once

#include <set>
#include <string>
#include <variant>
#include <vector>

#include "rulegame/params.hpp"
#include "rulegame/rule.hpp"
#include "rulegame/rule_parser.hpp"

namespace rulegame {

struct ValidationReport {
  bool ok = true;
  HistoryClass history = HistoryClass::Static;
  // Always true: the language has no construct that reads rejected attempts.
  bool failure_independent = true;
  std::vector<std::string> warnings;
  std::vector<std::string> errors;
};

/// MDL-style size of a rule.
struct SizeMetric {
  int term_count = 0;     // AST nodes
  int codebook_count = 0; // distinct vocabulary symbols
  int canonical_bytes = 0;

  friend bool operator==(const SizeMetric&, const SizeMetric&) = default;
};

inline HistoryClass classify_history(const RuleAst& ast) {
  if (!ast.guards.empty()) return HistoryClass::ConfigGuarded;
  if (const auto* simple = std::get_if<SimpleBucket>(&ast.base.bucket))
    return *simple == SimpleBucket::Alternate ? HistoryClass::LastSuccess
                                              : HistoryClass::Static;
  const auto& map = std::get<ColorMap>(ast.base.bucket);
  bool alternates = map.fallback == SimpleBucket::Alternate;
  for (const auto& entry : map.entries)
    alternates = alternates || entry.second == SimpleBucket::Alternate;
  return alternates ? HistoryClass::LastSuccessPerColor : HistoryClass::Static;
}

namespace detail {

inline std::string trigger_text(const Trigger& t) {
  if (const auto* at = std::get_if<AtTrigger>(&t))
    return "at(" + std::to_string(at->position) + ", " + std::string(color_name(at->color)) + ")";
  return "config(" + std::get<ConfigTrigger>(t).pattern + ")";
}

inline int pattern_pieces(const std::string& pattern) {
  int n = 0;
  for (char ch : pattern) n += ch != '.';
  return n;
}

} // namespace detail

/// Deterministic serialization: lowercase keywords, single spaces, map entries
/// by color name, guards by trigger.
inline std::string canonical_form(const RuleAst& input) {
  RuleAst ast = input;
  normalize(ast);
  std::string out = "order=";
  out += order_keyword(ast.base.order);
  out += "; bucket=";
  if (const auto* simple = std::get_if<SimpleBucket>(&ast.base.bucket)) {
    out += simple_bucket_keyword(*simple);
  } else {
    const auto& map = std::get<ColorMap>(ast.base.bucket);
    out += "map(";
    for (const auto& [color, bucket] : map.entries) {
      out += color_name(color);
      out += ':';
      out += simple_bucket_keyword(bucket);
      out += ", ";
    }
    out += "default:";
    out += simple_bucket_keyword(map.fallback);
    out += ')';
  }
  for (const auto& g : ast.guards) {
    out += "; when ";
    out += detail::trigger_text(g.trigger);
    out += " then move=" + std::to_string(g.move_index) + ", bucket=";
    out += bucket_name(g.bucket);
  }
  return out;
}

inline SizeMetric rule_size(const RuleAst& ast) {
  SizeMetric size;
  std::set<std::string> vocabulary;
  size.term_count = 2; // rule node, order atom
  vocabulary.emplace(order_keyword(ast.base.order));
  if (const auto* simple = std::get_if<SimpleBucket>(&ast.base.bucket)) {
    size.term_count += 1;
    vocabulary.emplace(simple_bucket_keyword(*simple));
  } else {
    const auto& map = std::get<ColorMap>(ast.base.bucket);
    size.term_count += 1 + 2 * static_cast<int>(map.entries.size()) + 1;
    vocabulary.emplace("map");
    for (const auto& [color, bucket] : map.entries) {
      vocabulary.emplace(color_name(color));
      vocabulary.emplace(simple_bucket_keyword(bucket));
    }
    vocabulary.emplace(simple_bucket_keyword(map.fallback));
  }
  for (const auto& g : ast.guards) {
    // guard, trigger, trigger arguments, move index, bucket
    if (const auto* at = std::get_if<AtTrigger>(&g.trigger)) {
      size.term_count += 6;
      vocabulary.emplace("at");
      vocabulary.emplace(std::to_string(at->position));
      vocabulary.emplace(color_name(at->color));
    } else {
      size.term_count += 5;
      vocabulary.emplace("config");
      vocabulary.emplace(std::get<ConfigTrigger>(g.trigger).pattern);
    }
    vocabulary.emplace(std::to_string(g.move_index));
    vocabulary.emplace(bucket_name(g.bucket));
  }
  size.codebook_count = static_cast<int>(vocabulary.size());
  size.canonical_bytes = static_cast<int>(canonical_form(ast).size());
  return size;
}

/// Range-checks guards against the game parameters and flags guards that can
/// contradict the base clause or each other.
inline ValidationReport validate(const RuleAst& ast, const EpisodeParams& params) {
  ValidationReport report;
  report.history = classify_history(ast);

  for (Color c : ast.palette)
    if (static_cast<int>(c) >= params.colors)
      report.warnings.push_back("color " + std::string(color_name(c)) +
                                " never appears with C=" + std::to_string(params.colors));

  for (std::size_t i = 0; i < ast.guards.size(); ++i) {
    const auto& g = ast.guards[i];
    const std::string label = "guard " + detail::trigger_text(g.trigger);
    if (const auto* at = std::get_if<AtTrigger>(&g.trigger)) {
      if (at->position < 1 || at->position > params.length)
        report.errors.push_back(label + ": position out of range 1.." +
                                std::to_string(params.length));
    } else {
      const auto& pattern = std::get<ConfigTrigger>(g.trigger).pattern;
      if (static_cast<int>(pattern.size()) != params.length) {
        report.errors.push_back(label + ": pattern length " + std::to_string(pattern.size()) +
                                " differs from L=" + std::to_string(params.length));
      } else {
        int pieces = detail::pattern_pieces(pattern);
        if (pieces < params.k_min || pieces > params.k_max)
          report.warnings.push_back(label + ": piece count outside [Kmin,Kmax], never triggers");
        else if (g.move_index > pieces)
          report.warnings.push_back(label + ": move index exceeds the pattern's piece count");
      }
    }
    if (g.move_index < 1 || g.move_index > params.k_max)
      report.errors.push_back(label + ": move index " + std::to_string(g.move_index) +
                              " exceeds Kmax=" + std::to_string(params.k_max));
    else if (g.move_index > params.k_min && std::holds_alternative<AtTrigger>(g.trigger))
      report.warnings.push_back(label + ": dormant on boards with fewer than " +
                                std::to_string(g.move_index) + " pieces");

    // A fixed base bucket opposite to the guard bucket can never be satisfied.
    std::optional<SimpleBucket> base_bucket;
    if (const auto* simple = std::get_if<SimpleBucket>(&ast.base.bucket))
      base_bucket = *simple;
    else if (const auto* at = std::get_if<AtTrigger>(&g.trigger))
      base_bucket = std::get<ColorMap>(ast.base.bucket).lookup(at->color);
    if (base_bucket && ((*base_bucket == SimpleBucket::Left && g.bucket == Bucket::Right) ||
                        (*base_bucket == SimpleBucket::Right && g.bucket == Bucket::Left)))
      report.warnings.push_back(label + ": guard bucket contradicts the base bucket");

    if (ast.base.order != Order::Any)
      report.warnings.push_back(label + ": base order '" +
                                std::string(order_keyword(ast.base.order)) +
                                "' may force the guarded piece at a different move");

    for (std::size_t j = 0; j < i; ++j) {
      const auto* a = std::get_if<AtTrigger>(&ast.guards[j].trigger);
      const auto* b = std::get_if<AtTrigger>(&g.trigger);
      bool exclusive = a && b && a->position == b->position;
      if (!exclusive && ast.guards[j].move_index == g.move_index)
        report.warnings.push_back(label + " and guard " +
                                  detail::trigger_text(ast.guards[j].trigger) +
                                  " can both constrain move " + std::to_string(g.move_index));
    }
  }
  report.ok = report.errors.empty();
  return report;
}

} // namespace rulegame
