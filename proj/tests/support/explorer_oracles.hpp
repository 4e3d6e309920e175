#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <tuple>
#include <vector>

#include "mano/explore/explorer.hpp"

namespace mano::oracle {

struct OracleHit {
  std::string id;
  int reason = 0;
  world::Rect visible;
  auto key() const { return std::tie(id, reason, visible.x, visible.y, visible.width, visible.height); }
  friend bool operator<(const OracleHit& a, const OracleHit& b) { return a.key() < b.key(); }
  friend bool operator==(const OracleHit& a, const OracleHit& b) { return a.key() == b.key(); }
};

namespace detail {

inline void walk(const world::Screen& s, const world::Element& e, int dy, world::Rect clip, bool hidden, double opacity,
                 std::vector<OracleHit>& out) {
  hidden = hidden || e.style.display_none || e.style.visibility_hidden;
  opacity *= e.style.opacity;
  const world::Rect box{e.bbox.x, e.bbox.y - dy, e.bbox.width, e.bbox.height};
  // Criteria, each checked independently; the reported reason is the lowest index that holds.
  std::vector<int> reasons;
  const auto k = e.kind;
  if (k == world::ElementKind::button || k == world::ElementKind::textbox || k == world::ElementKind::link ||
      k == world::ElementKind::dropdown || k == world::ElementKind::option)
    reasons.push_back(0);
  if (!e.aria_role.empty()) reasons.push_back(1);
  if (e.has_click_listener) reasons.push_back(2);
  if (e.component) reasons.push_back(3);
  const int x0 = std::max(box.x, clip.x), y0 = std::max(box.y, clip.y);
  const int x1 = std::min(box.x + box.width, clip.x + clip.width), y1 = std::min(box.y + box.height, clip.y + clip.height);
  const bool in_view = x1 > x0 && y1 > y0;
  const bool styled_out = hidden || !(opacity > 0.0);
  const bool tiny = box.width <= 1 || box.height <= 1;
  if (!reasons.empty() && in_view && !styled_out && !tiny)
    out.push_back({e.id, reasons.front(), {x0, y0, x1 - x0, y1 - y0}});
  int cdy = dy;
  world::Rect cclip = clip;
  if (e.kind == world::ElementKind::scroll_container) {
    if (auto it = s.scroll_offsets.find(e.id); it != s.scroll_offsets.end()) cdy += it->second;
    cclip = {x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
  }
  for (const auto& c : e.children) walk(s, c, cdy, cclip, hidden, opacity, out);
}

}  // namespace detail

/// Exhaustive re-check of every element against the four criteria and three filter tiers.
inline std::vector<OracleHit> brute_force_interactives(const world::Screen& s) {
  std::vector<OracleHit> out;
  const world::Rect vp{0, 0, s.viewport_width, s.viewport_height};
  detail::walk(s, s.root, 0, vp, false, 1.0, out);
  if (s.pending_popup) detail::walk(s, *s.pending_popup, 0, vp, false, 1.0, out);
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<OracleHit> as_hits(const std::vector<explore::InteractiveElement>& v) {
  std::vector<OracleHit> out;
  for (const auto& e : v) out.push_back({e.id, static_cast<int>(e.reason), e.bbox});
  std::sort(out.begin(), out.end());
  return out;
}

/// States reachable within `cap` actions, trying a click at every lattice point,
/// page and menu scrolls at every lattice point, and typing the probe text.
inline std::set<std::uint64_t> brute_force_reachable(world::WorldState start, int cap, int lattice = 20,
                                                     const std::string& probe = "test") {
  start.horizon = 1 << 30;
  std::map<std::uint64_t, int> depth;
  std::deque<world::WorldState> queue;
  depth[world::fingerprint(start)] = 0;
  queue.push_back(start);
  while (!queue.empty()) {
    world::WorldState s = std::move(queue.front());
    queue.pop_front();
    const int d = depth[world::fingerprint(s)];
    if (d >= cap || s.done) continue;
    std::vector<dsl::Action> actions;
    for (int y = lattice / 2; y < s.screen.viewport_height; y += lattice)
      for (int x = lattice / 2; x < s.screen.viewport_width; x += lattice) {
        actions.push_back(dsl::Action::click({x, y}));
        for (auto dir : {dsl::Direction::down, dsl::Direction::up}) {
          actions.push_back(dsl::Action::scroll({x, y}, dir));
          actions.push_back(dsl::Action::scroll_menu({x, y}, dir));
        }
      }
    actions.push_back(dsl::Action::type(probe));
    for (const auto& a : actions) {
      world::WorldState n = s;
      world::step(n, a);
      const auto fp = world::fingerprint(n);
      if (depth.count(fp)) continue;
      depth[fp] = d + 1;
      queue.push_back(std::move(n));
    }
  }
  std::set<std::uint64_t> out;
  for (const auto& [fp, _] : depth) out.insert(fp);
  return out;
}

}  // namespace mano::oracle
