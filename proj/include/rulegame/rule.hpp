#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace rulegame {

// Game palette, in draw order: a game with C colors uses the first C.
enum class Color : std::uint8_t { Red, Green, Blue, Yellow };
inline constexpr std::size_t kPaletteSize = 4;
inline constexpr std::array<Color, kPaletteSize> kPalette{
    Color::Red, Color::Green, Color::Blue, Color::Yellow};

constexpr std::string_view color_name(Color c) noexcept {
  constexpr std::array<std::string_view, kPaletteSize> names{"red", "green",
                                                             "blue", "yellow"};
  return names[static_cast<std::size_t>(c)];
}

constexpr char color_letter(Color c) noexcept {
  return "RGBY"[static_cast<std::size_t>(c)];
}

constexpr std::optional<Color> color_from_letter(char ch) noexcept {
  switch (ch) {
  case 'R': case 'r': return Color::Red;
  case 'G': case 'g': return Color::Green;
  case 'B': case 'b': return Color::Blue;
  case 'Y': case 'y': return Color::Yellow;
  default: return std::nullopt;
  }
}

constexpr std::optional<Color> color_from_name(std::string_view name) noexcept {
  for (Color c : kPalette)
    if (color_name(c) == name) return c;
  return std::nullopt;
}

enum class Bucket : std::uint8_t { Left, Right };

constexpr std::string_view bucket_name(Bucket b) noexcept {
  return b == Bucket::Left ? "left" : "right";
}

constexpr Bucket opposite(Bucket b) noexcept {
  return b == Bucket::Left ? Bucket::Right : Bucket::Left;
}

enum class Order : std::uint8_t {
  Any,
  LeftToRight,
  RightToLeft,
  OutsideInLeft,  // odd-numbered moves take the leftmost piece, even the rightmost
  OutsideInRight, // mirror image
};

constexpr std::string_view order_keyword(Order o) noexcept {
  switch (o) {
  case Order::Any: return "any";
  case Order::LeftToRight: return "ltr";
  case Order::RightToLeft: return "rtl";
  case Order::OutsideInLeft: return "outside-in-left";
  case Order::OutsideInRight: return "outside-in-right";
  }
  return "?";
}

enum class SimpleBucket : std::uint8_t {
  Any,
  Left,
  Right,
  Nearest,
  Farthest,
  Alternate,
};

constexpr std::string_view simple_bucket_keyword(SimpleBucket b) noexcept {
  switch (b) {
  case SimpleBucket::Any: return "any";
  case SimpleBucket::Left: return "left";
  case SimpleBucket::Right: return "right";
  case SimpleBucket::Nearest: return "nearest";
  case SimpleBucket::Farthest: return "farthest";
  case SimpleBucket::Alternate: return "alternate";
  }
  return "?";
}

/// Per-color bucket choice with a mandatory fallback, so it is total over
/// colors. Entries never nest another map.
struct ColorMap {
  std::vector<std::pair<Color, SimpleBucket>> entries;
  SimpleBucket fallback = SimpleBucket::Any;

  SimpleBucket lookup(Color c) const noexcept {
    for (const auto& [color, bucket] : entries)
      if (color == c) return bucket;
    return fallback;
  }

  friend bool operator==(const ColorMap&, const ColorMap&) = default;
};

using BucketExpr = std::variant<SimpleBucket, ColorMap>;

struct Clause {
  Order order = Order::Any;
  BucketExpr bucket = SimpleBucket::Any;

  friend bool operator==(const Clause&, const Clause&) = default;
};

/// Fires when the initial board holds `color` at `position` (1-based).
struct AtTrigger {
  int position = 1;
  Color color = Color::Red;

  friend bool operator==(const AtTrigger&, const AtTrigger&) = default;
};

/// Fires when the initial board equals `pattern` exactly (letters R,G,B,Y and '.').
struct ConfigTrigger {
  std::string pattern;

  friend bool operator==(const ConfigTrigger&, const ConfigTrigger&) = default;
};

using Trigger = std::variant<AtTrigger, ConfigTrigger>;

struct ConfigGuard {
  Trigger trigger;
  int move_index = 1; // which successful move (1-based) is constrained
  Bucket bucket = Bucket::Right;

  friend bool operator==(const ConfigGuard&, const ConfigGuard&) = default;
};

/// A hidden rule: one base clause plus zero or more configuration guards.
/// `palette` lists every color the rule mentions, in game-palette order.
struct RuleAst {
  Clause base;
  std::vector<ConfigGuard> guards;
  std::vector<Color> palette;

  friend bool operator==(const RuleAst&, const RuleAst&) = default;
};

enum class HistoryClass : std::uint8_t {
  Static,
  LastSuccess,
  LastSuccessPerColor,
  ConfigGuarded,
};

constexpr std::string_view history_class_name(HistoryClass h) noexcept {
  switch (h) {
  case HistoryClass::Static: return "STATIC";
  case HistoryClass::LastSuccess: return "LAST_SUCCESS";
  case HistoryClass::LastSuccessPerColor: return "LAST_SUCCESS_PER_COLOR";
  case HistoryClass::ConfigGuarded: return "CONFIG_GUARDED";
  }
  return "?";
}

/// Rule-language syntax or lexical error, positioned at a 1-based line/column.
class ParseError : public std::runtime_error {
public:
  ParseError(int line, int column, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ", column " +
                           std::to_string(column) + ": " + message),
        line_(line), column_(column), message_(message) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }
  const std::string& message() const noexcept { return message_; }

private:
  int line_;
  int column_;
  std::string message_;
};

} // namespace rulegame
