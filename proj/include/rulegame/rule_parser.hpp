#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "rulegame/rule.hpp"

namespace rulegame {

namespace detail {

inline bool guard_less(const ConfigGuard& a, const ConfigGuard& b) {
  if (a.trigger.index() != b.trigger.index())
    return a.trigger.index() < b.trigger.index();
  if (const auto* at = std::get_if<AtTrigger>(&a.trigger)) {
    const auto& bt = std::get<AtTrigger>(b.trigger);
    if (at->position != bt.position) return at->position < bt.position;
    if (at->color != bt.color) return color_name(at->color) < color_name(bt.color);
  } else {
    const auto& ap = std::get<ConfigTrigger>(a.trigger).pattern;
    const auto& bp = std::get<ConfigTrigger>(b.trigger).pattern;
    if (ap != bp) return ap < bp;
  }
  if (a.move_index != b.move_index) return a.move_index < b.move_index;
  return a.bucket < b.bucket;
}

// Two guards clash when they would constrain the same thing: AT guards on the
// same trigger, or CONFIG guards on the same pattern and move.
inline bool guards_clash(const ConfigGuard& a, const ConfigGuard& b) {
  if (a.trigger != b.trigger) return false;
  return std::holds_alternative<AtTrigger>(a.trigger) || a.move_index == b.move_index;
}

} // namespace detail

/// Sorts map entries by color name and guards by trigger, and recomputes the
/// palette. Parsing always yields a normalized AST.
inline void normalize(RuleAst& ast) {
  std::vector<bool> seen(kPaletteSize, false);
  if (auto* map = std::get_if<ColorMap>(&ast.base.bucket)) {
    std::sort(map->entries.begin(), map->entries.end(),
              [](const auto& a, const auto& b) {
                return color_name(a.first) < color_name(b.first);
              });
    for (const auto& entry : map->entries)
      seen[static_cast<std::size_t>(entry.first)] = true;
  }
  std::sort(ast.guards.begin(), ast.guards.end(), detail::guard_less);
  for (const auto& g : ast.guards) {
    if (const auto* at = std::get_if<AtTrigger>(&g.trigger)) {
      seen[static_cast<std::size_t>(at->color)] = true;
    } else {
      for (char ch : std::get<ConfigTrigger>(g.trigger).pattern)
        if (auto c = color_from_letter(ch)) seen[static_cast<std::size_t>(*c)] = true;
    }
  }
  ast.palette.clear();
  for (Color c : kPalette)
    if (seen[static_cast<std::size_t>(c)]) ast.palette.push_back(c);
}

namespace detail {

struct Token {
  enum class Kind { Word, Symbol, End } kind = Kind::End;
  std::string text; // words are lowercased; `raw` keeps the source spelling
  std::string raw;
  int line = 1;
  int column = 1;
};

inline bool is_word_char(char ch) {
  return std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-' ||
         ch == '_';
}

inline std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < src.size()) {
    char ch = src[i];
    if (src.substr(i, 2) == "--") {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      advance(1);
      continue;
    }
    Token tok;
    tok.line = line;
    tok.column = col;
    if (std::string_view("=;,():").find(ch) != std::string_view::npos) {
      tok.kind = Token::Kind::Symbol;
      tok.text = tok.raw = std::string(1, ch);
      advance(1);
    } else if (is_word_char(ch)) {
      std::size_t j = i;
      while (j < src.size() && is_word_char(src[j]) && src.substr(j, 2) != "--") ++j;
      tok.kind = Token::Kind::Word;
      tok.raw = std::string(src.substr(i, j - i));
      tok.text = tok.raw;
      std::transform(tok.text.begin(), tok.text.end(), tok.text.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      advance(j - i);
    } else {
      throw ParseError(line, col, std::string("unexpected character '") + ch + "'");
    }
    out.push_back(std::move(tok));
  }
  Token end;
  end.line = line;
  end.column = col;
  out.push_back(end);
  return out;
}

class Parser {
public:
  explicit Parser(std::string_view src) : tokens_(tokenize(src)) {}

  RuleAst rule() {
    RuleAst ast;
    ast.base = clause();
    while (accept(";")) {
      ConfigGuard g = guard();
      for (const auto& existing : ast.guards)
        if (guards_clash(existing, g))
          throw ParseError(last_.line, last_.column, "duplicate guard trigger");
      ast.guards.push_back(std::move(g));
    }
    if (peek().kind != Token::Kind::End)
      fail("expected ';' or end of rule");
    normalize(ast);
    return ast;
  }

private:
  const Token& peek() const { return tokens_[pos_]; }

  Token take() {
    last_ = tokens_[pos_];
    if (pos_ + 1 < tokens_.size()) ++pos_;
    return last_;
  }

  [[noreturn]] void fail(const std::string& expected) const {
    const Token& t = peek();
    std::string found = t.kind == Token::Kind::End ? "end of input" : "'" + t.raw + "'";
    throw ParseError(t.line, t.column, expected + ", found " + found);
  }

  bool accept(std::string_view text) {
    if (peek().kind != Token::Kind::End && peek().text == text) {
      take();
      return true;
    }
    return false;
  }

  void expect(std::string_view text) {
    if (!accept(text)) fail("expected '" + std::string(text) + "'");
  }

  Clause clause() {
    Clause c;
    expect("order");
    expect("=");
    c.order = order();
    expect(";");
    expect("bucket");
    expect("=");
    c.bucket = bucket_expr();
    return c;
  }

  Order order() {
    static constexpr Order all[] = {Order::Any, Order::LeftToRight, Order::RightToLeft,
                                    Order::OutsideInLeft, Order::OutsideInRight};
    if (peek().kind == Token::Kind::Word)
      for (Order o : all)
        if (peek().text == order_keyword(o)) {
          take();
          return o;
        }
    fail("expected order keyword (any, ltr, rtl, outside-in-left, outside-in-right)");
  }

  SimpleBucket simple() {
    static constexpr SimpleBucket all[] = {SimpleBucket::Any,     SimpleBucket::Left,
                                           SimpleBucket::Right,   SimpleBucket::Nearest,
                                           SimpleBucket::Farthest, SimpleBucket::Alternate};
    if (peek().kind == Token::Kind::Word)
      for (SimpleBucket b : all)
        if (peek().text == simple_bucket_keyword(b)) {
          take();
          return b;
        }
    fail("expected bucket keyword (any, left, right, nearest, farthest, alternate)");
  }

  BucketExpr bucket_expr() {
    if (!accept("map")) return simple();
    ColorMap map;
    expect("(");
    do {
      if (!map.entries.empty() && accept("default")) {
        expect(":");
        map.fallback = simple();
        expect(")");
        return map;
      }
      Color c = color();
      for (const auto& entry : map.entries)
        if (entry.first == c)
          throw ParseError(last_.line, last_.column,
                           "duplicate map entry for " + std::string(color_name(c)));
      expect(":");
      map.entries.emplace_back(c, simple());
    } while (accept(","));
    fail("expected ',' followed by 'default' entry");
  }

  Color color() {
    if (peek().kind == Token::Kind::Word) {
      if (auto c = color_from_name(peek().text)) {
        take();
        return *c;
      }
      if (std::all_of(peek().text.begin(), peek().text.end(),
                      [](unsigned char ch) { return std::isalpha(ch); })) {
        const Token& t = peek();
        throw ParseError(t.line, t.column, "unknown color name '" + t.raw + "'");
      }
    }
    fail("expected color (red, green, blue, yellow)");
  }

  int positive_int() {
    const Token& t = peek();
    if (t.kind == Token::Kind::Word && !t.text.empty() &&
        std::all_of(t.text.begin(), t.text.end(),
                    [](unsigned char ch) { return std::isdigit(ch); })) {
      int value = 0;
      auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), value);
      if (ec != std::errc() || value < 1)
        throw ParseError(t.line, t.column, "integer must be between 1 and 2^31-1");
      take();
      return value;
    }
    fail("expected positive integer");
  }

  ConfigGuard guard() {
    ConfigGuard g;
    expect("when");
    if (accept("at")) {
      AtTrigger at;
      expect("(");
      at.position = positive_int();
      expect(",");
      at.color = color();
      expect(")");
      g.trigger = at;
    } else if (accept("config")) {
      expect("(");
      const Token& t = peek();
      bool pattern = t.kind == Token::Kind::Word && !t.text.empty() &&
                     std::all_of(t.text.begin(), t.text.end(), [](char ch) {
                       return ch == '.' || color_from_letter(ch).has_value();
                     });
      if (!pattern) fail("expected board pattern over R, G, B, Y and '.'");
      ConfigTrigger cfg;
      for (char ch : take().text)
        cfg.pattern.push_back(ch == '.' ? '.' : color_letter(*color_from_letter(ch)));
      expect(")");
      g.trigger = std::move(cfg);
    } else {
      fail("expected trigger 'at' or 'config'");
    }
    expect("then");
    expect("move");
    expect("=");
    g.move_index = positive_int();
    expect(",");
    expect("bucket");
    expect("=");
    if (accept("left")) {
      g.bucket = Bucket::Left;
    } else if (accept("right")) {
      g.bucket = Bucket::Right;
    } else {
      fail("expected 'left' or 'right'");
    }
    return g;
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  Token last_;
};

} // namespace detail

/// Parses rule-language source. Keywords and colors are case-insensitive;
/// whitespace and `--` comments are ignored. Throws ParseError.
inline RuleAst parse_rule(std::string_view text) {
  return detail::Parser(text).rule();
}

} // namespace rulegame
