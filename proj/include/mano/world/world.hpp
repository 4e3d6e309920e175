#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "mano/dsl/action.hpp"
#include "mano/util/result.hpp"
#include "mano/util/strings.hpp"
#include "mano/world/element.hpp"

namespace mano::world {

using dsl::Action;
using dsl::ActionKind;

/// Distance-thresholded point target; `tau` in pixels.
struct PointTarget {
  Point at;
  double tau = 5.0;
  friend bool operator==(const PointTarget&, const PointTarget&) = default;
};

using GtTarget = std::variant<std::monostate, Rect, PointTarget, std::string>;

struct GtStep {
  ActionKind type = ActionKind::finish;
  GtTarget target;
  /// Fingerprint of the screen this step was certified on (0 when unknown).
  std::uint64_t state_fingerprint = 0;
  friend bool operator==(const GtStep&, const GtStep&) = default;
};

enum class Family : int { custom = 0, click_button, search, dropdown, navigate_click, login };
inline constexpr std::array<std::string_view, 6> kFamilyNames = {"custom",   "click-button",   "search",
                                                                 "dropdown", "navigate-click", "login"};

/// Generator bookkeeping the expert planner needs; ids refer to elements of the world.
struct TaskSpec {
  Family family = Family::custom;
  std::string target;     // element that completes the task (button, option, login button)
  std::string textbox;    // search box
  std::string word;       // text to type
  std::string dropdown;   // dropdown id
  std::string list;       // its option list container
  std::string link;       // navigation link
  std::string page;       // page holding the target
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct WorldState {
  Screen screen;
  double clock = 0.0;
  int episode_step = 0;
  bool awaiting_user = false;
  bool done = false;

  int horizon = 1;
  std::string goal;
  bool goal_reached = false;

  std::string page;                      // id of the page in screen.root
  std::map<std::string, Element> pages;  // other pages, keyed by id
  std::optional<Element> popup_template;
  std::optional<int> popup_at;           // episode step at which the popup is injected
  int user_wait_steps = 2;
  int user_waits = 0;
  std::map<std::string, std::string> user_fill;  // textbox id -> text the user provides
  std::set<std::string> facts;
  int scroll_step_px = 90;
  int menu_scroll_rows = 1;
  TaskSpec spec;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct Task {
  std::string instruction;
  int horizon = 1;
  std::vector<GtStep> gt;
  std::string goal;  // registered terminal check, e.g. "fact:pressed:btn3"
  TaskSpec spec;
  std::uint64_t world_seed = 0;
  std::uint64_t state_seed = 0;
  WorldState initial;  // S0 the ground truth was certified from
  friend bool operator==(const Task&, const Task&) = default;
};

struct TransitionEvents {
  std::optional<std::string> target;  // element that received the action
  EffectKind effect = EffectKind::none;
  bool noop = true;
  bool popup_injected = false;
  bool goal_reached = false;
  bool horizon_reached = false;
  std::string diff;  // short human-readable state-diff summary
};

// ---------------------------------------------------------------------------
// Goal predicates

inline bool goal_satisfied(const WorldState& s) {
  if (starts_with(s.goal, "fact:")) return s.facts.count(s.goal.substr(5)) > 0;
  if (starts_with(s.goal, "page:")) return s.page == s.goal.substr(5);
  return false;
}

inline bool valid_goal_id(std::string_view goal) {
  return (starts_with(goal, "fact:") && goal.size() > 5) || (starts_with(goal, "page:") && goal.size() > 5);
}

// ---------------------------------------------------------------------------
// Observation

struct ObservedElement {
  std::string id;
  ElementKind kind = ElementKind::static_text;
  Rect bbox;
  std::string text;
  bool placeholder = false;  // `text` is the placeholder of an empty box
  bool focused = false;
  bool in_popup = false;
  bool clickable = false;
  int scroll_offset = 0;
  friend bool operator==(const ObservedElement&, const ObservedElement&) = default;
};

/// Structured stand-in for a screenshot: visible elements plus a kind raster.
struct Observation {
  int width = 0;
  int height = 0;
  std::string page;
  int grid_cols = 8;
  int grid_rows = 8;
  std::vector<ObservedElement> elements;
  std::vector<std::uint16_t> raster;  // per cell, bit k set when a visible element of kind k overlaps it

  const ObservedElement* find(std::string_view id) const {
    for (const auto& e : elements)
      if (e.id == id) return &e;
    return nullptr;
  }
  bool has_popup() const {
    for (const auto& e : elements)
      if (e.in_popup) return true;
    return false;
  }
  Rect cell_rect(int cell) const {
    const int cw = width / grid_cols, ch = height / grid_rows;
    return {(cell % grid_cols) * cw, (cell / grid_cols) * ch, cw, ch};
  }
  Point cell_center(int cell) const { return cell_rect(cell).center(); }
  int cell_of(Point p) const {
    const int cw = width / grid_cols, ch = height / grid_rows;
    const int cx = std::clamp(p.x / cw, 0, grid_cols - 1), cy = std::clamp(p.y / ch, 0, grid_rows - 1);
    return cy * grid_cols + cx;
  }

  friend bool operator==(const Observation&, const Observation&) = default;
};

inline Observation observe(const WorldState& state, int grid_cols = 8, int grid_rows = 8) {
  Observation obs;
  obs.width = state.screen.viewport_width;
  obs.height = state.screen.viewport_height;
  obs.page = state.page;
  obs.grid_cols = grid_cols;
  obs.grid_rows = grid_rows;
  obs.raster.assign(static_cast<std::size_t>(grid_cols * grid_rows), 0);
  for (const auto& p : layout(state.screen)) {
    if (!is_visible(p)) continue;
    if (!p.in_popup && p.depth == 0) continue;  // the page container itself
    const Element& e = *p.element;
    ObservedElement o;
    o.id = e.id;
    o.kind = e.kind;
    o.bbox = p.bbox;
    o.text = e.text.empty() ? e.placeholder : e.text;
    o.placeholder = e.text.empty() && !e.placeholder.empty();
    o.focused = !state.screen.focused.empty() && state.screen.focused == e.id;
    o.in_popup = p.in_popup;
    o.clickable = accepts_click(e);
    if (e.kind == ElementKind::scroll_container) {
      auto it = state.screen.scroll_offsets.find(e.id);
      o.scroll_offset = it == state.screen.scroll_offsets.end() ? 0 : it->second;
    }
    const Rect visible = detail::intersect(p.bbox, p.clip);
    for (int cell = 0; cell < grid_cols * grid_rows; ++cell)
      if (visible.intersects(obs.cell_rect(cell))) obs.raster[cell] |= static_cast<std::uint16_t>(1u << static_cast<int>(e.kind));
    obs.elements.push_back(std::move(o));
  }
  return obs;
}

/// Canonical line-oriented serialization; equal observations give equal strings.
inline std::string serialize(const Observation& obs) {
  std::string out = "obs " + std::to_string(obs.width) + "x" + std::to_string(obs.height) + " page=" + obs.page +
                    " grid=" + std::to_string(obs.grid_cols) + "x" + std::to_string(obs.grid_rows) + "\n";
  for (const auto& e : obs.elements) {
    out += e.id + " " + std::string(to_string(e.kind)) + " " + std::to_string(e.bbox.x) + "," +
           std::to_string(e.bbox.y) + "," + std::to_string(e.bbox.width) + "," + std::to_string(e.bbox.height) +
           (e.placeholder ? " placeholder" : "") + (e.focused ? " focused" : "") + (e.in_popup ? " popup" : "") + (e.clickable ? " clickable" : "") +
           " scroll=" + std::to_string(e.scroll_offset) + " text=" + e.text + "\n";
  }
  out += "raster";
  for (auto r : obs.raster) out += " " + std::to_string(r);
  out += "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Fingerprints

namespace detail {

inline void canonical(const Element& e, std::string& out) {
  out += '{';
  out += e.id;
  out += '|';
  out += std::to_string(static_cast<int>(e.kind));
  out += '|' + std::to_string(e.bbox.x) + ',' + std::to_string(e.bbox.y) + ',' + std::to_string(e.bbox.width) + ',' +
         std::to_string(e.bbox.height);
  out += '|';
  out += e.text;
  out += '|';
  out += e.placeholder;
  out += '|';
  out += e.style.display_none ? 'n' : '-';
  out += e.style.visibility_hidden ? 'h' : '-';
  out += std::to_string(e.style.opacity);
  for (const auto& c : e.children) canonical(c, out);
  out += '}';
}

}  // namespace detail

/// Canonical serialization of a screen; the simulated clock is not part of it.
inline std::string canonical_screen(const Screen& s) {
  std::string out = std::to_string(s.viewport_width) + "x" + std::to_string(s.viewport_height) + ";";
  detail::canonical(s.root, out);
  out += ";scroll:";
  for (const auto& [k, v] : s.scroll_offsets) out += k + "=" + std::to_string(v) + ",";
  out += ";popup:";
  if (s.pending_popup) detail::canonical(*s.pending_popup, out);
  out += ";focus:" + s.focused;
  return out;
}

inline std::uint64_t fingerprint(const Screen& s) { return fnv1a(canonical_screen(s)); }
inline std::uint64_t fingerprint(const WorldState& s) { return fingerprint(s.screen); }

// ---------------------------------------------------------------------------
// Transitions

namespace detail {

inline Element* find_in_state(WorldState& s, std::string_view id) {
  if (auto* e = find_element(s.screen.root, id)) return e;
  if (s.screen.pending_popup)
    if (auto* e = find_element(*s.screen.pending_popup, id)) return e;
  return nullptr;
}

// Topmost visible element at `p` that reacts to clicks. The popup is modal.
inline std::optional<std::string> hit_test(const Screen& screen, Point p) {
  const auto placed = layout(screen);
  std::optional<std::string> hit;
  for (const auto& pl : placed) {
    if (screen.pending_popup && !pl.in_popup) continue;
    if (!is_visible(pl) || !accepts_click(*pl.element)) continue;
    if (pl.bbox.contains(p) && pl.clip.contains(p)) hit = pl.element->id;
  }
  return hit;
}

inline std::optional<std::string> scroll_target(const Screen& screen, Point p, bool menus_only) {
  std::optional<std::string> hit;
  for (const auto& pl : layout(screen)) {
    const Element& e = *pl.element;
    if (e.kind != ElementKind::scroll_container || !is_visible(pl)) continue;
    if (screen.pending_popup && !pl.in_popup) continue;
    if (menus_only && e.row_height <= 0) continue;
    if (pl.bbox.contains(p)) hit = e.id;
  }
  return hit;
}

inline int max_scroll(const Element& container) {
  int bottom = container.bbox.bottom();
  for_each_element(container, [&](const Element& c) { bottom = std::max(bottom, c.bbox.bottom()); });
  return std::max(0, bottom - container.bbox.bottom());
}

inline std::string base_label(const std::string& text) {
  auto pos = text.find(':');
  return pos == std::string::npos ? text : text.substr(0, pos);
}

inline void set_status(WorldState& s, const std::string& text) {
  if (auto* st = find_element(s.screen.root, "status")) st->text = text;
}

inline std::string apply_click(WorldState& s, const std::string& id, EffectKind& fired) {
  Element* e = find_in_state(s, id);
  if (!e) return "";
  if (e->kind == ElementKind::textbox && e->editable) {
    fired = EffectKind::focus;
    s.screen.focused = e->id;
    return "focused " + e->id;
  }
  fired = e->effect.kind;
  switch (e->effect.kind) {
    case EffectKind::none: return "";
    case EffectKind::navigate: {
      const std::string target = e->effect.target;
      auto it = s.pages.find(target);
      if (it == s.pages.end()) return "";
      Element next = std::move(it->second);
      s.pages.erase(it);
      s.pages[s.page] = std::move(s.screen.root);
      s.screen.root = std::move(next);
      s.page = target;
      s.screen.focused.clear();
      s.facts.insert("visited:" + target);
      return "navigated to " + target;
    }
    case EffectKind::toggle_list: {
      Element* list = find_in_state(s, e->effect.target);
      if (!list) return "";
      list->style.display_none = !list->style.display_none;
      s.screen.scroll_offsets[list->id] = 0;
      return list->style.display_none ? "closed " + list->id : "opened " + list->id;
    }
    case EffectKind::select_option: {
      const std::string option_text = e->text;
      Element* dd = find_in_state(s, e->effect.target);
      if (!dd) return "";
      dd->text = base_label(dd->text) + ": " + option_text;
      if (dd->effect.kind == EffectKind::toggle_list)
        if (Element* list = find_in_state(s, dd->effect.target)) list->style.display_none = true;
      s.facts.insert("selected:" + dd->id + ":" + option_text);
      return "selected " + option_text + " in " + dd->id;
    }
    case EffectKind::submit: {
      s.facts.insert("pressed:" + e->id);
      set_status(s, e->text + " done");
      return "pressed " + e->id;
    }
    case EffectKind::login: {
      bool filled = true;
      for_each_element(s.screen.root, [&](const Element& c) {
        if (c.kind == ElementKind::textbox && c.editable && c.text.empty()) filled = false;
      });
      if (!filled) {
        set_status(s, "Missing credentials");
        return "login rejected";
      }
      s.facts.insert("login:" + e->id);
      set_status(s, "Logged in");
      return "logged in";
    }
    case EffectKind::close_popup: {
      s.screen.pending_popup.reset();
      return "closed popup";
    }
    case EffectKind::focus: {
      s.screen.focused = e->id;
      return "focused " + e->id;
    }
  }
  return "";
}

inline void maybe_inject_popup(WorldState& s, TransitionEvents* ev) {
  if (s.popup_at && *s.popup_at == s.episode_step && s.popup_template && !s.screen.pending_popup) {
    s.screen.pending_popup = s.popup_template;
    s.popup_at.reset();
    if (ev) ev->popup_injected = true;
  }
}

}  // namespace detail

/// Called after constructing an initial state: injects a popup scheduled for step 0.
inline void settle_initial(WorldState& s) {
  detail::maybe_inject_popup(s, nullptr);
  if (goal_satisfied(s)) s.goal_reached = true;
}

/// Advances the world by one action. Throws on transitions after `done`.
inline TransitionEvents step(WorldState& s, const Action& action) {
  if (s.done) throw Error("step() on a finished episode");
  if (!dsl::well_formed(action)) throw Error("step() with a malformed action");
  TransitionEvents ev;
  std::string diff;

  auto note_target = [&](const std::optional<std::string>& id) { ev.target = id; };

  if (s.awaiting_user) {
    if (action.kind == ActionKind::wait) {
      s.clock += 5.0;
      if (++s.user_waits >= s.user_wait_steps) {
        s.awaiting_user = false;
        for (const auto& [id, text] : s.user_fill)
          if (auto* e = find_element(s.screen.root, id)) e->text = text;
        diff = "user returned control";
      } else {
        diff = "waiting for user";
      }
    } else if (action.kind == ActionKind::finish) {
      s.done = true;
      diff = "finished";
    } else {
      diff = "ignored while awaiting user";
    }
  } else {
    switch (action.kind) {
      case ActionKind::click: {
        auto hit = detail::hit_test(s.screen, *action.primary_point());
        note_target(hit);
        if (hit) diff = detail::apply_click(s, *hit, ev.effect);
        break;
      }
      case ActionKind::left_double:
      case ActionKind::right_single:
      case ActionKind::right_double:
      case ActionKind::drag:
        note_target(detail::hit_test(s.screen, *action.primary_point()));
        break;
      case ActionKind::hotkey: break;
      case ActionKind::type: {
        if (s.screen.pending_popup || s.screen.focused.empty()) break;
        Element* box = find_element(s.screen.root, s.screen.focused);
        if (!box || !box->editable) break;
        std::string content = *action.text();
        while (!content.empty() && content.back() == '\n') content.pop_back();
        note_target(box->id);
        box->text = content;
        s.facts.insert("submitted:" + box->id + ":" + content);
        diff = "typed '" + content + "' into " + box->id;
        break;
      }
      case ActionKind::scroll:
      case ActionKind::scroll_menu: {
        const auto& sp = std::get<dsl::ScrollPayload>(action.payload);
        const bool menu = action.kind == ActionKind::scroll_menu;
        auto id = detail::scroll_target(s.screen, sp.at, menu);
        if (!id) break;
        const Element* c = detail::find_in_state(s, *id);
        int sign = 0;
        if (sp.direction == dsl::Direction::down) sign = 1;
        if (sp.direction == dsl::Direction::up) sign = -1;
        if (sign == 0) break;
        const int amount = menu ? s.menu_scroll_rows * c->row_height : s.scroll_step_px;
        int& off = s.screen.scroll_offsets[*id];
        const int before = off;
        off = std::clamp(off + sign * amount, 0, detail::max_scroll(*c));
        note_target(*id);
        if (off != before) diff = "scrolled " + *id + " to " + std::to_string(off);
        break;
      }
      case ActionKind::wait:
        s.clock += 5.0;
        break;
      case ActionKind::call_user:
        s.awaiting_user = true;
        s.user_waits = 0;
        diff = "called user";
        break;
      case ActionKind::finish:
        s.done = true;
        diff = "finished";
        break;
    }
  }

  ev.noop = diff.empty();
  ev.diff = diff;
  ++s.episode_step;
  detail::maybe_inject_popup(s, &ev);
  if (!s.goal_reached && goal_satisfied(s)) {
    s.goal_reached = true;
    ev.goal_reached = true;
    s.done = true;
  }
  if (s.episode_step >= s.horizon) {
    ev.horizon_reached = true;
    s.done = true;
  }
  return ev;
}

/// Consumes one step without acting (used when an utterance cannot be parsed).
inline TransitionEvents skip_step(WorldState& s) {
  if (s.done) throw Error("skip_step() on a finished episode");
  TransitionEvents ev;
  ++s.episode_step;
  detail::maybe_inject_popup(s, &ev);
  if (s.episode_step >= s.horizon) {
    ev.horizon_reached = true;
    s.done = true;
  }
  return ev;
}

}  // namespace mano::world
