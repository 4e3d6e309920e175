#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mano/world/world.hpp"

namespace mano::oracle {

using world::Element;
using world::ElementKind;
using world::WorldState;

inline Element bare_page(const std::string& id) {
  Element root;
  root.id = id;
  root.bbox = {0, 0, 1280, 720};
  return root;
}

inline Element link_to(const std::string& id, const std::string& target, int slot) {
  Element l;
  l.id = id;
  l.kind = ElementKind::link;
  l.text = target;
  l.bbox = {20 + 160 * (slot % 8), 20 + 90 * (slot / 8), 140, 70};
  l.effect = {world::EffectKind::navigate, target};
  return l;
}

/// Pages with the given outgoing links; the first page is shown.
inline std::pair<WorldState, world::Task> link_world(const std::vector<std::pair<std::string, std::vector<std::string>>>& graph) {
  WorldState s;
  for (const auto& [page, targets] : graph) {
    Element root = bare_page(page);
    for (std::size_t i = 0; i < targets.size(); ++i)
      root.children.push_back(link_to(page + "_to_" + targets[i], targets[i], static_cast<int>(i)));
    if (page == graph.front().first) s.screen.root = std::move(root);
    else s.pages[page] = std::move(root);
  }
  s.page = graph.front().first;
  s.goal = "page:" + graph.back().first;
  s.horizon = 1000;
  world::Task t;
  t.instruction = "Explore.";
  t.horizon = 1000;
  t.goal = s.goal;
  t.initial = s;
  return {s, t};
}

/// P0 -> P1 -> ... -> Pn, one "next" link per page.
inline std::pair<WorldState, world::Task> chain_world(int n) {
  std::vector<std::pair<std::string, std::vector<std::string>>> g;
  for (int i = 0; i <= n; ++i) {
    std::vector<std::string> next;
    if (i < n) next.push_back("P" + std::to_string(i + 1));
    g.push_back({"P" + std::to_string(i), next});
  }
  return link_world(g);
}

/// A <-> B.
inline std::pair<WorldState, world::Task> cycle_world() { return link_world({{"A", {"B"}}, {"B", {"A"}}}); }

/// Twenty pages as a binary tree with "home" and "up" links back.
inline std::pair<WorldState, world::Task> tree_world(int pages = 20) {
  std::vector<std::pair<std::string, std::vector<std::string>>> g;
  for (int i = 0; i < pages; ++i) {
    std::vector<std::string> out;
    for (int c : {2 * i + 1, 2 * i + 2})
      if (c < pages) out.push_back("P" + std::to_string(c));
    if (i > 0) out.push_back("P0");
    if (i > 2) out.push_back("P" + std::to_string((i - 1) / 2));
    g.push_back({"P" + std::to_string(i), out});
  }
  return link_world(g);
}

/// Hand-built screen covering every extraction criterion and filter tier.
inline world::Screen edge_case_screen() {
  world::Screen s;
  s.root = bare_page("edge");
  auto add = [&](Element e) { s.root.children.push_back(std::move(e)); };
  Element b;
  b.id = "ok_button";
  b.kind = ElementKind::button;
  b.text = "Go";
  b.bbox = {10, 10, 100, 40};
  b.effect = {world::EffectKind::submit, ""};
  add(b);
  Element pixel = b;
  pixel.id = "pixel";
  pixel.kind = ElementKind::canvas_region;
  pixel.component = true;
  pixel.bbox = {200, 10, 1, 1};
  add(pixel);
  Element thin = b;
  thin.id = "thin";
  thin.bbox = {220, 10, 1, 40};
  add(thin);
  Element ghost = b;
  ghost.id = "ghost";
  ghost.style.opacity = 0.0;
  add(ghost);
  Element hidden = b;
  hidden.id = "hidden";
  hidden.style.visibility_hidden = true;
  add(hidden);
  Element none = b;
  none.id = "none";
  none.style.display_none = true;
  add(none);
  Element off = b;
  off.id = "offscreen";
  off.bbox = {1300, 10, 100, 40};
  add(off);
  Element aria;
  aria.id = "aria";
  aria.kind = ElementKind::static_text;
  aria.aria_role = "tab";
  aria.bbox = {10, 100, 100, 40};
  add(aria);
  Element listener;
  listener.id = "listener";
  listener.kind = ElementKind::static_text;
  listener.text = "Card";
  listener.has_click_listener = true;
  listener.bbox = {200, 100, 100, 40};
  add(listener);
  Element comp;
  comp.id = "widget";
  comp.kind = ElementKind::canvas_region;
  comp.component = true;
  comp.bbox = {400, 100, 100, 40};
  add(comp);
  Element text;
  text.id = "plain";
  text.kind = ElementKind::static_text;
  text.text = "Welcome";
  text.bbox = {600, 100, 100, 40};
  add(text);
  Element list;
  list.id = "menu";
  list.kind = ElementKind::scroll_container;
  list.bbox = {10, 200, 200, 90};
  list.row_height = 45;
  for (int i = 0; i < 4; ++i) {
    Element o;
    o.id = "opt" + std::to_string(i);
    o.kind = ElementKind::option;
    o.text = "Option " + std::to_string(i);
    o.bbox = {10, 200 + 45 * i, 200, 45};
    list.children.push_back(o);
  }
  add(list);
  Element faded;
  faded.id = "faded_box";
  faded.bbox = {700, 300, 200, 200};
  faded.style.opacity = 0.0;
  Element inner = b;
  inner.id = "inside_faded";
  inner.bbox = {710, 310, 100, 40};
  faded.children.push_back(inner);
  add(faded);
  s.scroll_offsets["menu"] = 45;
  Element popup = bare_page("popup");
  popup.kind = ElementKind::modal_popup;
  popup.bbox = {400, 200, 400, 200};
  Element close = b;
  close.id = "popup_close";
  close.text = "Close";
  close.bbox = {700, 210, 80, 40};
  close.effect = {world::EffectKind::close_popup, ""};
  popup.children.push_back(close);
  s.pending_popup = popup;
  return s;
}

}  // namespace mano::oracle
