#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mano/dsl/action.hpp"

namespace mano::world {

using dsl::Point;

struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  int right() const { return x + width; }
  int bottom() const { return y + height; }
  Point center() const { return {x + width / 2, y + height / 2}; }

  /// Boundary-inclusive containment.
  bool contains(Point p) const { return p.x >= x && p.x <= right() && p.y >= y && p.y <= bottom(); }
  /// Positive-area overlap.
  bool intersects(const Rect& o) const {
    return x < o.right() && o.x < right() && y < o.bottom() && o.y < bottom();
  }
  Rect shifted(int dx, int dy) const { return {x + dx, y + dy, width, height}; }

  friend bool operator==(const Rect&, const Rect&) = default;
};

enum class ElementKind : int {
  button = 0,
  textbox,
  link,
  dropdown,
  option,
  modal_popup,
  scroll_container,
  canvas_region,
  static_text,
};

inline constexpr int kNumElementKinds = 9;
inline constexpr std::array<std::string_view, kNumElementKinds> kElementKindNames = {
    "button", "textbox", "link", "dropdown", "option", "modal-popup", "scroll-container", "canvas-region",
    "static-text"};

constexpr std::string_view to_string(ElementKind k) { return kElementKindNames[static_cast<int>(k)]; }

inline std::optional<ElementKind> element_kind_from_string(std::string_view s) {
  for (int i = 0; i < kNumElementKinds; ++i)
    if (kElementKindNames[i] == s) return static_cast<ElementKind>(i);
  return std::nullopt;
}

struct Style {
  bool display_none = false;
  bool visibility_hidden = false;
  double opacity = 1.0;
  friend bool operator==(const Style&, const Style&) = default;
};

/// What a click on the element does.
enum class EffectKind : int {
  none = 0,
  navigate,       // target: page id
  toggle_list,    // target: scroll-container id holding the options
  select_option,  // target: dropdown id
  submit,         // records a press and updates the status line
  login,          // submit that requires every textbox on the page to be filled
  close_popup,
  focus,          // implicit for editable textboxes
};

inline constexpr std::array<std::string_view, 8> kEffectNames = {
    "none", "navigate", "toggle-list", "select-option", "submit", "login", "close-popup", "focus"};

struct Effect {
  EffectKind kind = EffectKind::none;
  std::string target;
  friend bool operator==(const Effect&, const Effect&) = default;
};

struct Element {
  std::string id;
  ElementKind kind = ElementKind::static_text;
  Rect bbox;
  std::string text;
  std::string placeholder;        // shown while `text` is empty
  Style style;
  bool has_click_listener = false;
  bool editable = false;
  std::string aria_role;          // non-empty means the element carries an ARIA role
  bool component = false;         // encapsulated interactive component (web-component style)
  int row_height = 0;             // scroll containers acting as menus scroll by rows
  Effect effect;
  std::vector<Element> children;

  friend bool operator==(const Element&, const Element&) = default;
};

template <typename F>
void for_each_element(const Element& e, F&& f) {
  f(e);
  for (const auto& c : e.children) for_each_element(c, f);
}

template <typename F>
void for_each_element_mut(Element& e, F&& f) {
  f(e);
  for (auto& c : e.children) for_each_element_mut(c, f);
}

inline Element* find_element(Element& root, std::string_view id) {
  if (root.id == id) return &root;
  for (auto& c : root.children)
    if (auto* hit = find_element(c, id)) return hit;
  return nullptr;
}

inline const Element* find_element(const Element& root, std::string_view id) {
  return find_element(const_cast<Element&>(root), id);
}

/// The GUI state visible to the agent: page tree, scroll offsets, optional interruption.
struct Screen {
  Element root;
  int viewport_width = 1280;
  int viewport_height = 720;
  std::map<std::string, int> scroll_offsets;
  std::optional<Element> pending_popup;
  std::string focused;  // id of the focused textbox, empty when none

  Rect viewport() const { return {0, 0, viewport_width, viewport_height}; }

  friend bool operator==(const Screen&, const Screen&) = default;
};

/// Element placement after ancestor scrolling and style inheritance.
struct Placed {
  const Element* element = nullptr;
  Rect bbox;          // absolute, after scroll offsets
  Rect clip;          // intersection of the viewport and ancestor scroll containers
  Style style;        // inherited (display/visibility propagate, opacity multiplies)
  bool in_popup = false;
  int depth = 0;
};

namespace detail {

inline Rect intersect(const Rect& a, const Rect& b) {
  const int x0 = std::max(a.x, b.x), y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.right(), b.right()), y1 = std::min(a.bottom(), b.bottom());
  return {x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
}

inline void place(const Screen& screen, const Element& e, int dy, Rect clip, Style inherited, bool in_popup,
                  int depth, std::vector<Placed>& out) {
  Style s;
  s.display_none = inherited.display_none || e.style.display_none;
  s.visibility_hidden = inherited.visibility_hidden || e.style.visibility_hidden;
  s.opacity = inherited.opacity * e.style.opacity;
  const Rect box = e.bbox.shifted(0, -dy);
  out.push_back({&e, box, clip, s, in_popup, depth});
  int child_dy = dy;
  Rect child_clip = clip;
  if (e.kind == ElementKind::scroll_container) {
    auto it = screen.scroll_offsets.find(e.id);
    if (it != screen.scroll_offsets.end()) child_dy += it->second;
    child_clip = intersect(clip, box);
  }
  for (const auto& c : e.children) place(screen, c, child_dy, child_clip, s, in_popup, depth + 1, out);
}

}  // namespace detail

/// Every element of the page (then the popup) in document order with its effective geometry.
inline std::vector<Placed> layout(const Screen& screen) {
  std::vector<Placed> out;
  detail::place(screen, screen.root, 0, screen.viewport(), Style{}, false, 0, out);
  if (screen.pending_popup) detail::place(screen, *screen.pending_popup, 0, screen.viewport(), Style{}, true, 0, out);
  return out;
}

/// Visible iff not display-none, not visibility-hidden, opacity > 0 and the box meets the clip region.
inline bool is_visible(const Placed& p) {
  return !p.style.display_none && !p.style.visibility_hidden && p.style.opacity > 0.0 && p.bbox.intersects(p.clip);
}

/// Kinds that respond to clicks by themselves.
inline bool is_interactive_kind(ElementKind k) {
  return k == ElementKind::button || k == ElementKind::textbox || k == ElementKind::link ||
         k == ElementKind::dropdown || k == ElementKind::option;
}

inline bool accepts_click(const Element& e) {
  return is_interactive_kind(e.kind) || e.has_click_listener || e.component || !e.aria_role.empty() ||
         e.effect.kind != EffectKind::none;
}

}  // namespace mano::world
