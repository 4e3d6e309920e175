#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mano/util/result.hpp"
#include "mano/util/strings.hpp"

namespace mano::dsl {

enum class ActionKind : int {
  click = 0,
  left_double,
  right_single,
  right_double,
  drag,
  hotkey,
  type,
  scroll,
  scroll_menu,
  wait,
  call_user,
  finish,
};

inline constexpr int kNumActionKinds = 12;

inline constexpr std::array<std::string_view, kNumActionKinds> kVerbs = {
    "click", "left_double", "right_single", "right_double", "drag",      "hotkey",
    "type",  "scroll",      "scroll_menu",  "wait",         "call_user", "finish"};

constexpr std::string_view verb(ActionKind k) { return kVerbs[static_cast<int>(k)]; }

inline std::optional<ActionKind> kind_from_verb(std::string_view v) {
  for (int i = 0; i < kNumActionKinds; ++i)
    if (kVerbs[i] == v) return static_cast<ActionKind>(i);
  return std::nullopt;
}

constexpr bool is_click_family(ActionKind k) {
  return k == ActionKind::click || k == ActionKind::left_double || k == ActionKind::right_single ||
         k == ActionKind::right_double;
}
constexpr bool is_scroll_family(ActionKind k) {
  return k == ActionKind::scroll || k == ActionKind::scroll_menu;
}
constexpr bool has_point(ActionKind k) {
  return is_click_family(k) || is_scroll_family(k) || k == ActionKind::drag;
}

enum class Direction : int { up = 0, down, left, right };
inline constexpr int kNumDirections = 4;
inline constexpr std::array<std::string_view, kNumDirections> kDirectionNames = {"up", "down", "left",
                                                                                 "right"};

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct PointPayload {
  Point at;
  friend bool operator==(const PointPayload&, const PointPayload&) = default;
};
struct DragPayload {
  Point start;
  Point end;
  friend bool operator==(const DragPayload&, const DragPayload&) = default;
};
struct KeyPayload {
  std::string combo;
  friend bool operator==(const KeyPayload&, const KeyPayload&) = default;
};
struct TextPayload {
  std::string content;
  friend bool operator==(const TextPayload&, const TextPayload&) = default;
};
struct ScrollPayload {
  Point at;
  Direction direction = Direction::down;
  friend bool operator==(const ScrollPayload&, const ScrollPayload&) = default;
};
struct NoPayload {
  friend bool operator==(const NoPayload&, const NoPayload&) = default;
};

using Payload = std::variant<NoPayload, PointPayload, DragPayload, KeyPayload, TextPayload, ScrollPayload>;

/// A structured action; the payload alternative is fixed by the kind.
struct Action {
  ActionKind kind = ActionKind::finish;
  Payload payload = NoPayload{};

  static Action click_at(ActionKind k, Point p) { return {k, PointPayload{p}}; }
  static Action click(Point p) { return click_at(ActionKind::click, p); }
  static Action drag(Point a, Point b) { return {ActionKind::drag, DragPayload{a, b}}; }
  static Action hotkey(std::string combo) { return {ActionKind::hotkey, KeyPayload{std::move(combo)}}; }
  static Action type(std::string text) { return {ActionKind::type, TextPayload{std::move(text)}}; }
  static Action scroll(Point p, Direction d) { return {ActionKind::scroll, ScrollPayload{p, d}}; }
  static Action scroll_menu(Point p, Direction d) { return {ActionKind::scroll_menu, ScrollPayload{p, d}}; }
  static Action wait() { return {ActionKind::wait, NoPayload{}}; }
  static Action call_user() { return {ActionKind::call_user, NoPayload{}}; }
  static Action finish() { return {ActionKind::finish, NoPayload{}}; }

  /// The point the action lands on, if any (drag: its start).
  std::optional<Point> primary_point() const {
    if (auto* p = std::get_if<PointPayload>(&payload)) return p->at;
    if (auto* d = std::get_if<DragPayload>(&payload)) return d->start;
    if (auto* s = std::get_if<ScrollPayload>(&payload)) return s->at;
    return std::nullopt;
  }
  std::optional<std::string> text() const {
    if (auto* t = std::get_if<TextPayload>(&payload)) return t->content;
    if (auto* k = std::get_if<KeyPayload>(&payload)) return k->combo;
    return std::nullopt;
  }

  friend bool operator==(const Action&, const Action&) = default;
};

/// True when the payload alternative matches what the kind requires.
inline bool well_formed(const Action& a) {
  auto point_ok = [](Point p) { return p.x >= 0 && p.y >= 0; };
  if (is_click_family(a.kind)) {
    auto* p = std::get_if<PointPayload>(&a.payload);
    return p && point_ok(p->at);
  }
  switch (a.kind) {
    case ActionKind::drag: {
      auto* d = std::get_if<DragPayload>(&a.payload);
      return d && point_ok(d->start) && point_ok(d->end);
    }
    case ActionKind::hotkey: return std::holds_alternative<KeyPayload>(a.payload);
    case ActionKind::type: return std::holds_alternative<TextPayload>(a.payload);
    case ActionKind::scroll:
    case ActionKind::scroll_menu: {
      auto* s = std::get_if<ScrollPayload>(&a.payload);
      return s && point_ok(s->at);
    }
    default: return std::holds_alternative<NoPayload>(a.payload);
  }
}

enum class FormatErrorCode {
  missing_section,
  duplicate_section,
  section_order,
  empty_action,
  unknown_verb,
  malformed_box,
  wrong_arity,
  bad_argument,
  trailing_input,
  syntax,
};

inline std::string_view to_string(FormatErrorCode c) {
  switch (c) {
    case FormatErrorCode::missing_section: return "missing-section";
    case FormatErrorCode::duplicate_section: return "duplicate-section";
    case FormatErrorCode::section_order: return "section-order";
    case FormatErrorCode::empty_action: return "empty-action";
    case FormatErrorCode::unknown_verb: return "unknown-verb";
    case FormatErrorCode::malformed_box: return "malformed-box";
    case FormatErrorCode::wrong_arity: return "wrong-arity";
    case FormatErrorCode::bad_argument: return "bad-argument";
    case FormatErrorCode::trailing_input: return "trailing-input";
    case FormatErrorCode::syntax: return "syntax";
  }
  return "unknown";
}

struct FormatError {
  FormatErrorCode code;
  std::string detail;
};

inline constexpr std::string_view kBoxStart = "<|box_start|>";
inline constexpr std::string_view kBoxEnd = "<|box_end|>";
inline constexpr int kMaxCoordinate = 100000;

namespace detail {

inline void append_box(std::string& out, Point p) {
  out += '\'';
  out += kBoxStart;
  out += '(' + std::to_string(p.x) + ',' + std::to_string(p.y) + ')';
  out += kBoxEnd;
  out += '\'';
}

inline void append_quoted(std::string& out, std::string_view s) {
  out += '\'';
  for (char c : s) {
    if (c == '\\' || c == '\'') {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  out += '\'';
}

inline bool valid_combo(std::string_view combo) {
  if (combo.empty()) return false;
  bool token_open = false;
  for (char c : combo) {
    if (c == '+') {
      if (!token_open) return false;
      token_open = false;
    } else if (std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) ||
               c == '_') {
      token_open = true;
    } else {
      return false;
    }
  }
  return token_open;
}

// Recursive-descent cursor over one action string.
class Cursor {
 public:
  explicit Cursor(std::string_view s) : s_(s) {}

  void skip_ws() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
  }
  bool at_end() {
    skip_ws();
    return i_ >= s_.size();
  }
  bool peek(char c) {
    skip_ws();
    return i_ < s_.size() && s_[i_] == c;
  }
  bool eat(char c) {
    if (!peek(c)) return false;
    ++i_;
    return true;
  }
  bool eat_literal(std::string_view lit) {
    skip_ws();
    if (s_.substr(i_, lit.size()) != lit) return false;
    i_ += lit.size();
    return true;
  }
  std::string identifier() {
    skip_ws();
    std::size_t b = i_;
    while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_')) ++i_;
    return std::string(s_.substr(b, i_ - b));
  }
  std::optional<int> integer() {
    skip_ws();
    std::size_t b = i_;
    long long v = 0;
    while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) {
      v = v * 10 + (s_[i_] - '0');
      if (v > kMaxCoordinate) return std::nullopt;
      ++i_;
    }
    if (i_ == b) return std::nullopt;
    return static_cast<int>(v);
  }
  std::optional<std::string> quoted() {
    if (!eat('\'')) return std::nullopt;
    std::string out;
    while (i_ < s_.size()) {
      char c = s_[i_++];
      if (c == '\'') return out;
      if (c == '\\') {
        if (i_ >= s_.size()) return std::nullopt;
        char e = s_[i_++];
        if (e == 'n')
          out += '\n';
        else if (e == '\\' || e == '\'')
          out += e;
        else
          return std::nullopt;
      } else {
        out += c;
      }
    }
    return std::nullopt;
  }
  std::size_t position() const { return i_; }

 private:
  std::string_view s_;
  std::size_t i_ = 0;
};

inline FormatError fail(FormatErrorCode c, std::string detail) { return {c, std::move(detail)}; }

inline Result<Point, FormatError> parse_box(Cursor& cur) {
  auto bad = [](std::string d) { return fail(FormatErrorCode::malformed_box, std::move(d)); };
  if (!cur.eat('\'')) return bad("expected quote before box");
  if (!cur.eat_literal(kBoxStart)) return bad("expected <|box_start|>");
  if (!cur.eat('(')) return bad("expected '(' in box");
  auto x = cur.integer();
  if (!x) return bad("expected x coordinate");
  if (!cur.eat(',')) return bad("expected ',' between coordinates");
  auto y = cur.integer();
  if (!y) return bad("expected y coordinate");
  if (!cur.eat(')')) return bad("expected ')' in box");
  if (!cur.eat_literal(kBoxEnd)) return bad("expected <|box_end|>");
  if (!cur.eat('\'')) return bad("expected quote after box");
  return Point{*x, *y};
}

// Parses `name=` and reports wrong-arity if the expected keyword is absent.
inline std::optional<FormatError> expect_keyword(Cursor& cur, std::string_view name) {
  auto save = cur;
  auto id = cur.identifier();
  if (id != name) {
    cur = save;
    if (cur.peek(')') || id.empty())
      return fail(FormatErrorCode::wrong_arity, "missing argument '" + std::string(name) + "'");
    return fail(FormatErrorCode::wrong_arity, "unexpected argument '" + id + "'");
  }
  if (!cur.eat('=')) return fail(FormatErrorCode::syntax, "expected '=' after " + std::string(name));
  return std::nullopt;
}

inline std::optional<FormatError> expect_close(Cursor& cur) {
  if (cur.eat(')')) return std::nullopt;
  if (cur.peek(',')) return fail(FormatErrorCode::wrong_arity, "too many arguments");
  auto probe = cur;
  if (auto id = probe.identifier(); !id.empty() && probe.eat('='))
    return fail(FormatErrorCode::wrong_arity, "unexpected argument '" + id + "'");
  return fail(FormatErrorCode::syntax, "expected ')'");
}

}  // namespace detail

/// Canonical string form of an action.
inline std::string serialize(const Action& a) {
  std::string out(verb(a.kind));
  out += '(';
  if (auto* p = std::get_if<PointPayload>(&a.payload)) {
    out += "start_box=";
    detail::append_box(out, p->at);
  } else if (auto* d = std::get_if<DragPayload>(&a.payload)) {
    out += "start_box=";
    detail::append_box(out, d->start);
    out += ", end_box=";
    detail::append_box(out, d->end);
  } else if (auto* k = std::get_if<KeyPayload>(&a.payload)) {
    out += "key=";
    detail::append_quoted(out, k->combo);
  } else if (auto* t = std::get_if<TextPayload>(&a.payload)) {
    out += "content=";
    detail::append_quoted(out, t->content);
  } else if (auto* s = std::get_if<ScrollPayload>(&a.payload)) {
    out += "start_box=";
    detail::append_box(out, s->at);
    out += ", direction=";
    detail::append_quoted(out, kDirectionNames[static_cast<int>(s->direction)]);
  }
  out += ')';
  return out;
}

/// Parses one action in the template grammar (see docs/grammar.md).
inline Result<Action, FormatError> parse_action(std::string_view text) {
  using detail::fail;
  detail::Cursor cur(text);
  if (cur.at_end()) return fail(FormatErrorCode::empty_action, "empty action");
  const auto name = cur.identifier();
  if (name.empty()) return fail(FormatErrorCode::syntax, "expected action verb");
  const auto kind = kind_from_verb(name);
  if (!kind) return fail(FormatErrorCode::unknown_verb, "unknown verb '" + name + "'");
  if (!cur.eat('(')) return fail(FormatErrorCode::syntax, "expected '(' after verb");

  Action action{*kind, NoPayload{}};
  auto read_box_arg = [&](std::string_view key) -> Result<Point, FormatError> {
    if (auto e = detail::expect_keyword(cur, key)) return *e;
    return detail::parse_box(cur);
  };

  if (is_click_family(*kind)) {
    auto p = read_box_arg("start_box");
    if (!p) return p.error();
    action.payload = PointPayload{*p};
  } else if (*kind == ActionKind::drag) {
    auto a = read_box_arg("start_box");
    if (!a) return a.error();
    if (!cur.eat(',')) return fail(FormatErrorCode::wrong_arity, "drag needs start_box and end_box");
    auto b = read_box_arg("end_box");
    if (!b) return b.error();
    action.payload = DragPayload{*a, *b};
  } else if (*kind == ActionKind::hotkey) {
    if (auto e = detail::expect_keyword(cur, "key")) return *e;
    auto s = cur.quoted();
    if (!s) return fail(FormatErrorCode::syntax, "expected quoted key combo");
    if (!detail::valid_combo(*s)) return fail(FormatErrorCode::bad_argument, "invalid key combo '" + *s + "'");
    action.payload = KeyPayload{*s};
  } else if (*kind == ActionKind::type) {
    if (auto e = detail::expect_keyword(cur, "content")) return *e;
    auto s = cur.quoted();
    if (!s) return fail(FormatErrorCode::syntax, "expected quoted content");
    action.payload = TextPayload{*s};
  } else if (is_scroll_family(*kind)) {
    auto p = read_box_arg("start_box");
    if (!p) return p.error();
    if (!cur.eat(',')) return fail(FormatErrorCode::wrong_arity, "scroll needs start_box and direction");
    if (auto e = detail::expect_keyword(cur, "direction")) return *e;
    auto s = cur.quoted();
    if (!s) return fail(FormatErrorCode::syntax, "expected quoted direction");
    std::optional<Direction> dir;
    for (int i = 0; i < kNumDirections; ++i)
      if (kDirectionNames[i] == *s) dir = static_cast<Direction>(i);
    if (!dir) return fail(FormatErrorCode::bad_argument, "invalid direction '" + *s + "'");
    action.payload = ScrollPayload{*p, *dir};
  }
  if (auto e = detail::expect_close(cur)) return *e;
  if (!cur.at_end()) return fail(FormatErrorCode::trailing_input, "unexpected text after action");
  return action;
}

/// Thought / Action Desp / Action, in template order.
struct Utterance {
  std::string thought;
  std::string summary;
  std::string action_text;
  Action action;
};

inline constexpr std::string_view kThoughtHeader = "Thought:";
inline constexpr std::string_view kSummaryHeader = "Action Desp:";
inline constexpr std::string_view kActionHeader = "Action:";

inline std::string serialize(const Utterance& u) {
  return std::string(kThoughtHeader) + " " + u.thought + "\n" + std::string(kSummaryHeader) + " " + u.summary +
         "\n" + std::string(kActionHeader) + " " + serialize(u.action);
}

inline Utterance make_utterance(std::string thought, std::string summary, Action action) {
  auto text = serialize(action);
  return {std::move(thought), std::move(summary), std::move(text), std::move(action)};
}

/// Parses the three-section template. Headers must start a line.
inline Result<Utterance, FormatError> parse_utterance(std::string_view text) {
  using detail::fail;
  struct Hit {
    std::size_t pos;
    std::size_t len;
  };
  std::array<std::string_view, 3> headers = {kThoughtHeader, kSummaryHeader, kActionHeader};
  std::array<std::vector<Hit>, 3> hits;
  std::size_t line = 0;
  while (line <= text.size()) {
    const auto body = text.substr(line);
    for (int h = 0; h < 3; ++h)
      if (starts_with(body, headers[h])) hits[h].push_back({line, headers[h].size()});
    const auto nl = text.find('\n', line);
    if (nl == std::string_view::npos) break;
    line = nl + 1;
  }
  for (int h = 0; h < 3; ++h) {
    if (hits[h].empty())
      return fail(FormatErrorCode::missing_section, "missing '" + std::string(headers[h]) + "' section");
    if (hits[h].size() > 1)
      return fail(FormatErrorCode::duplicate_section, "repeated '" + std::string(headers[h]) + "' section");
  }
  if (!(hits[0][0].pos < hits[1][0].pos && hits[1][0].pos < hits[2][0].pos))
    return fail(FormatErrorCode::section_order, "sections must appear as Thought, Action Desp, Action");
  // Text preceding the first header is not part of the template.
  if (!trim(text.substr(0, hits[0][0].pos)).empty())
    return fail(FormatErrorCode::section_order, "text before the Thought section");

  auto section = [&](int h, std::size_t end) {
    const auto b = hits[h][0].pos + hits[h][0].len;
    return std::string(trim(text.substr(b, end - b)));
  };
  Utterance u;
  u.thought = section(0, hits[1][0].pos);
  u.summary = section(1, hits[2][0].pos);
  u.action_text = section(2, text.size());
  auto action = parse_action(u.action_text);
  if (!action) return action.error();
  u.action = *action;
  return u;
}

}  // namespace mano::dsl
