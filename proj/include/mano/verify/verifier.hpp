#pragma once

#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "mano/dsl/action.hpp"
#include "mano/world/world.hpp"

namespace mano::verifier {

using world::ElementKind;
using world::Observation;
using world::ObservedElement;

inline constexpr std::string_view kMarkCorrect = "\xE2\x9C\x85";    // U+2705
inline constexpr std::string_view kMarkIncorrect = "\xE2\x9D\x8C";  // U+274C

enum class Outcome { correct, incorrect };
enum class Diagnostic { none, description_error, execution_error };

inline std::string_view to_string(Diagnostic d) {
  switch (d) {
    case Diagnostic::none: return "none";
    case Diagnostic::description_error: return "description-error";
    case Diagnostic::execution_error: return "execution-error";
  }
  return "none";
}

struct Verdict {
  Outcome outcome = Outcome::incorrect;
  Diagnostic diagnostic = Diagnostic::description_error;

  bool correct() const { return outcome == Outcome::correct; }
  std::string_view mark() const { return correct() ? kMarkCorrect : kMarkIncorrect; }

  static Verdict ok() { return {Outcome::correct, Diagnostic::none}; }
  static Verdict fail(Diagnostic d) { return {Outcome::incorrect, d}; }

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

struct HistoryEntry {
  std::string summary;
  std::string mark;
  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

/// Append-only trace of summaries with verification marks.
struct History {
  std::vector<HistoryEntry> entries;
  std::size_t size() const { return entries.size(); }
  friend bool operator==(const History&, const History&) = default;
};

inline History augment(History history, std::string summary, const Verdict& v) {
  history.entries.push_back({std::move(summary), std::string(v.mark())});
  return history;
}

struct VerifyInput {
  Observation pre;
  Observation post;
  std::string prompt;
  std::string summary;
  History history;
};

// ---------------------------------------------------------------------------
// Effects

enum class EffectType {
  any,           // wait / call_user / finish: nothing specific is promised
  popup_closed,
  pressed,       // a button handler fired; label = button text
  focused,       // label = box label
  text_set,      // content = typed text
  menu_opened,   // label = dropdown label
  menu_scrolled, // label = dropdown label, content = direction
  selected,      // label = option text
  navigated,     // label = link text
  page_scrolled, // content = direction
  unverifiable,
};

struct EffectSpec {
  EffectType type = EffectType::unverifiable;
  std::string label;
  std::string content;
  friend bool operator==(const EffectSpec&, const EffectSpec&) = default;
};

/// Summary templates, in registry order. `{}` slots are single-quoted labels.
struct SummaryTemplate {
  EffectType effect;
  const char* pattern;  // ECMAScript regex over the whole summary
};

inline const std::vector<SummaryTemplate>& summary_templates() {
  static const std::vector<SummaryTemplate> t = {
      {EffectType::popup_closed, R"(click the close button of the popup)"},
      {EffectType::pressed, R"((?:click|press|select) the '?([^']+?)'? button)"},
      {EffectType::focused, R"(click the '?([^']+?)'? box)"},
      {EffectType::text_set, R"(type '((?:[^'\\]|\\.)*)' into the '?([^']+?)'? box)"},
      {EffectType::menu_opened, R"(open the '?([^']+?)'? dropdown)"},
      {EffectType::menu_scrolled, R"(scroll the '?([^']+?)'? menu (up|down|left|right))"},
      {EffectType::selected, R"(select the '?([^']+?)'? option)"},
      {EffectType::navigated, R"(open the '?([^']+?)'? link)"},
      {EffectType::any, R"(wait for the page to update)"},
      {EffectType::any, R"(ask the user for help)"},
      {EffectType::any, R"(finish the task)"},
      {EffectType::page_scrolled, R"(scroll the page (up|down|left|right))"},
  };
  return t;
}

inline int num_summary_templates() { return static_cast<int>(summary_templates().size()); }

/// Structured expectation read from a templated summary.
inline EffectSpec expected_effect(std::string_view summary, const Observation& /*pre*/) {
  static const auto compiled = [] {
    std::vector<std::regex> out;
    for (const auto& t : summary_templates()) out.emplace_back(t.pattern, std::regex::ECMAScript | std::regex::icase);
    return out;
  }();
  const std::string s = normalize_space(summary);
  std::smatch m;
  for (std::size_t i = 0; i < compiled.size(); ++i) {
    if (!std::regex_match(s, m, compiled[i])) continue;
    EffectSpec e;
    e.type = summary_templates()[i].effect;
    switch (e.type) {
      case EffectType::text_set:
        e.content = m[1].str();
        e.label = m[2].str();
        break;
      case EffectType::menu_scrolled:
        e.label = m[1].str();
        e.content = to_lower(m[2].str());
        break;
      case EffectType::page_scrolled: e.content = to_lower(m[1].str()); break;
      case EffectType::pressed:
      case EffectType::focused:
      case EffectType::menu_opened:
      case EffectType::selected:
      case EffectType::navigated: e.label = m[1].str(); break;
      default: break;
    }
    return e;
  }
  return {};
}

/// Index of the registered template the summary matches, if any.
inline std::optional<int> summary_template_id(std::string_view summary) {
  static const auto compiled = [] {
    std::vector<std::regex> out;
    for (const auto& t : summary_templates()) out.emplace_back(t.pattern, std::regex::ECMAScript | std::regex::icase);
    return out;
  }();
  const std::string s = normalize_space(summary);
  for (std::size_t i = 0; i < compiled.size(); ++i)
    if (std::regex_match(s, compiled[i])) return static_cast<int>(i);
  return std::nullopt;
}

namespace detail {

inline std::string base_label(const std::string& text) {
  auto pos = text.find(':');
  return pos == std::string::npos ? text : text.substr(0, pos);
}

inline const ObservedElement* status_line(const Observation& o) { return o.find("status"); }

// The dropdown whose option list is `container` (same column, directly above).
inline const ObservedElement* owner_dropdown(const Observation& o, const ObservedElement& container) {
  const ObservedElement* best = nullptr;
  for (const auto& e : o.elements)
    if (e.kind == ElementKind::dropdown && e.bbox.bottom() <= container.bbox.y &&
        e.bbox.x >= container.bbox.x && e.bbox.x < container.bbox.right())
      if (!best || e.bbox.y > best->bbox.y) best = &e;
  return best;
}

inline bool same_label(std::string_view a, std::string_view b) {
  return to_lower(normalize_space(a)) == to_lower(normalize_space(b));
}

}  // namespace detail

/// Effects that explain the change from `pre` to `post`.
inline std::vector<EffectSpec> observed_effects(const Observation& pre, const Observation& post) {
  std::vector<EffectSpec> out;
  if (pre.has_popup() && !post.has_popup()) out.push_back({EffectType::popup_closed, "", ""});

  if (pre.page != post.page) {
    // The link that led here: the one naming the new page, else any link visible before.
    const std::string_view page = starts_with(post.page, "page_") ? std::string_view(post.page).substr(5) : post.page;
    for (const auto& e : pre.elements)
      if (e.kind == ElementKind::link && to_lower(e.text) == page) out.push_back({EffectType::navigated, e.text, post.page});
    if (out.empty() || out.back().type != EffectType::navigated)
      for (const auto& e : pre.elements)
        if (e.kind == ElementKind::link) out.push_back({EffectType::navigated, e.text, post.page});
    if (out.empty() || out.back().type != EffectType::navigated) out.push_back({EffectType::navigated, "", post.page});
    return out;
  }

  const auto* s0 = detail::status_line(pre);
  const auto* s1 = detail::status_line(post);
  if (s0 && s1 && s0->text != s1->text) {
    const std::string& t = s1->text;
    const std::string suffix = " done";
    if (t.size() > suffix.size() && t.compare(t.size() - suffix.size(), suffix.size(), suffix) == 0)
      out.push_back({EffectType::pressed, t.substr(0, t.size() - suffix.size()), ""});
    else if (t == "Logged in" || t == "Missing credentials")
      out.push_back({EffectType::pressed, "Login", ""});
  }

  for (const auto& e1 : post.elements) {
    const auto* e0 = pre.find(e1.id);
    if (e1.kind == ElementKind::textbox) {
      if (e1.focused && !(e0 && e0->focused)) out.push_back({EffectType::focused, e1.text, ""});
      if (e0 && e0->text != e1.text) out.push_back({EffectType::text_set, e1.text, e1.text});
    }
    if (e1.kind == ElementKind::dropdown && e0 && e0->text != e1.text) {
      const auto pos = e1.text.find(": ");
      if (pos != std::string::npos) out.push_back({EffectType::selected, e1.text.substr(pos + 2), ""});
    }
    if (e1.kind == ElementKind::scroll_container) {
      const auto* dd = detail::owner_dropdown(post, e1);
      const std::string label = dd ? detail::base_label(dd->text) : e1.id;
      if (!e0) out.push_back({EffectType::menu_opened, label, ""});
      else if (e0->scroll_offset != e1.scroll_offset)
        out.push_back({EffectType::menu_scrolled, label, e1.scroll_offset > e0->scroll_offset ? "down" : "up"});
    }
  }
  return out;
}

inline bool satisfies(const EffectSpec& expected, const EffectSpec& seen) {
  if (expected.type != seen.type) return false;
  switch (expected.type) {
    case EffectType::popup_closed: return true;
    case EffectType::text_set: return normalize_space(expected.content) == normalize_space(seen.content);
    case EffectType::menu_scrolled:
      return detail::same_label(expected.label, seen.label) && expected.content == seen.content;
    case EffectType::page_scrolled: return expected.content == seen.content;
    case EffectType::navigated:
    case EffectType::pressed:
    case EffectType::focused:
    case EffectType::menu_opened:
    case EffectType::selected: return detail::same_label(expected.label, seen.label);
    default: return false;
  }
}

/// Judges one step from its pre/post observations and declared summary.
inline Verdict verify(const VerifyInput& x) {
  const EffectSpec expected = expected_effect(x.summary, x.pre);
  if (expected.type == EffectType::unverifiable) return Verdict::fail(Diagnostic::description_error);
  if (expected.type == EffectType::any) return Verdict::ok();
  const auto seen = observed_effects(x.pre, x.post);
  for (const auto& s : seen)
    if (satisfies(expected, s)) return Verdict::ok();
  if (!seen.empty()) return Verdict::fail(Diagnostic::description_error);
  return Verdict::fail(Diagnostic::execution_error);
}

// ---------------------------------------------------------------------------
// Rule-drafted descriptions

/// Element an action at `p` would land on, judged from the observation alone.
inline const ObservedElement* element_at(const Observation& obs, dsl::Point p) {
  const bool modal = obs.has_popup();
  const ObservedElement* hit = nullptr;
  for (const auto& e : obs.elements) {
    if (modal && !e.in_popup) continue;
    if (e.clickable && e.bbox.contains(p)) hit = &e;
  }
  return hit;
}

inline std::string squote(const std::string& s) { return "'" + s + "'"; }

/// Describes the effect a click on `e` is meant to have, using the summary templates.
inline std::string describe_click(const ObservedElement& e) {
  if (e.in_popup && e.kind == ElementKind::button) return "click the close button of the popup";
  switch (e.kind) {
    case ElementKind::button: return "click the " + squote(e.text) + " button";
    case ElementKind::textbox: return "click the " + squote(e.text) + " box";
    case ElementKind::dropdown: return "open the " + squote(detail::base_label(e.text)) + " dropdown";
    case ElementKind::option: return "select the " + squote(e.text) + " option";
    case ElementKind::link: return "open the " + squote(e.text) + " link";
    default: return "click the " + squote(e.text.empty() ? e.id : e.text) + " element";
  }
}

/// Rule-based Action Desp for an action taken on `pre`.
inline std::string describe(const dsl::Action& a, const Observation& pre) {
  using dsl::ActionKind;
  switch (a.kind) {
    case ActionKind::click: {
      const auto* e = element_at(pre, *a.primary_point());
      return e ? describe_click(*e) : "click an empty area";
    }
    case ActionKind::type: {
      std::string label = "unknown";
      for (const auto& e : pre.elements)
        if (e.focused) label = e.text;
      std::string content;
      for (char c : *a.text()) {
        if (c == '\'' || c == '\\') content += '\\';
        if (c != '\n') content += c;
      }
      return "type " + squote(content) + " into the " + squote(label) + " box";
    }
    case ActionKind::scroll_menu: {
      const auto& sp = std::get<dsl::ScrollPayload>(a.payload);
      std::string label = "unknown";
      for (const auto& e : pre.elements)
        if (e.kind == ElementKind::scroll_container && e.bbox.contains(sp.at))
          if (const auto* dd = detail::owner_dropdown(pre, e)) label = detail::base_label(dd->text);
      return "scroll the " + squote(label) + " menu " + std::string(dsl::kDirectionNames[static_cast<int>(sp.direction)]);
    }
    case ActionKind::scroll: {
      const auto& sp = std::get<dsl::ScrollPayload>(a.payload);
      return "scroll the page " + std::string(dsl::kDirectionNames[static_cast<int>(sp.direction)]);
    }
    case ActionKind::wait: return "wait for the page to update";
    case ActionKind::call_user: return "ask the user for help";
    case ActionKind::finish: return "finish the task";
    default: return std::string(dsl::verb(a.kind)) + " on the screen";
  }
}

/// Thought text for a summary; templated since free-form reasoning is not modeled.
inline std::string thought_for(std::string_view instruction, std::string_view summary) {
  return "The task is: " + std::string(instruction) + " Next I will " + std::string(summary) + ".";
}

/// Reads the label the summary commits to, used to draft corrections.
inline std::string draft_correction(const Observation& pre, const Observation& post, const dsl::Action& a) {
  const auto seen = observed_effects(pre, post);
  if (seen.empty()) return describe(a, pre);
  const auto& e = seen.front();
  switch (e.type) {
    case EffectType::popup_closed: return "click the close button of the popup";
    case EffectType::pressed: return "click the " + squote(e.label) + " button";
    case EffectType::focused: return "click the " + squote(e.label) + " box";
    case EffectType::text_set: return "type " + squote(e.content) + " into the " + squote(e.label) + " box";
    case EffectType::menu_opened: return "open the " + squote(e.label) + " dropdown";
    case EffectType::menu_scrolled: return "scroll the " + squote(e.label) + " menu " + e.content;
    case EffectType::selected: return "select the " + squote(e.label) + " option";
    case EffectType::navigated: return "open the " + squote(e.label) + " link";
    default: return describe(a, pre);
  }
}

}  // namespace mano::verifier
