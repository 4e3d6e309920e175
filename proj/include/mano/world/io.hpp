#pragma once

#include <json.hpp>
#include <string>

#include "mano/dsl/action.hpp"
#include "mano/world/generator.hpp"
#include "mano/world/world.hpp"

// JSON schema for worlds, tasks and configs. Rects and points are arrays
// ([x, y, w, h] and [x, y]); enums are their kebab-case names; actions use
// the canonical DSL string.

namespace mano::dsl {

inline void to_json(nlohmann::json& j, const Point& p) { j = nlohmann::json::array({p.x, p.y}); }
inline void from_json(const nlohmann::json& j, Point& p) {
  p.x = j.at(0).get<int>();
  p.y = j.at(1).get<int>();
}

inline void to_json(nlohmann::json& j, const Action& a) { j = serialize(a); }
inline void from_json(const nlohmann::json& j, Action& a) {
  auto r = parse_action(j.get<std::string>());
  if (!r) throw Error("bad action in JSON: " + r.error().detail);
  a = *r;
}

inline void to_json(nlohmann::json& j, ActionKind k) { j = std::string(verb(k)); }
inline void from_json(const nlohmann::json& j, ActionKind& k) {
  auto v = kind_from_verb(j.get<std::string>());
  if (!v) throw Error("unknown action kind: " + j.get<std::string>());
  k = *v;
}

}  // namespace mano::dsl

namespace mano::world {

namespace io_detail {

template <typename E, std::size_t N>
std::string name_of(E e, const std::array<std::string_view, N>& names) {
  return std::string(names.at(static_cast<std::size_t>(e)));
}

template <typename E, std::size_t N>
E parse_name(const nlohmann::json& j, const std::array<std::string_view, N>& names, const char* what) {
  const auto s = j.get<std::string>();
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return static_cast<E>(i);
  throw Error(std::string("unknown ") + what + ": " + s);
}

}  // namespace io_detail

inline void to_json(nlohmann::json& j, const Rect& r) { j = nlohmann::json::array({r.x, r.y, r.width, r.height}); }
inline void from_json(const nlohmann::json& j, Rect& r) {
  r = {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
  if (r.width < 0 || r.height < 0) throw Error("negative rect size");
}

inline void to_json(nlohmann::json& j, ElementKind k) { j = io_detail::name_of(k, kElementKindNames); }
inline void from_json(const nlohmann::json& j, ElementKind& k) {
  k = io_detail::parse_name<ElementKind>(j, kElementKindNames, "element kind");
}

inline void to_json(nlohmann::json& j, Family f) { j = io_detail::name_of(f, kFamilyNames); }
inline void from_json(const nlohmann::json& j, Family& f) { f = io_detail::parse_name<Family>(j, kFamilyNames, "family"); }

inline void to_json(nlohmann::json& j, const Element& e) {
  j = nlohmann::json{{"id", e.id}, {"kind", e.kind}, {"bbox", e.bbox}};
  if (!e.text.empty()) j["text"] = e.text;
  if (!e.placeholder.empty()) j["placeholder"] = e.placeholder;
  if (e.style.display_none) j["display_none"] = true;
  if (e.style.visibility_hidden) j["visibility_hidden"] = true;
  if (e.style.opacity != 1.0) j["opacity"] = e.style.opacity;
  if (e.has_click_listener) j["click_listener"] = true;
  if (e.editable) j["editable"] = true;
  if (!e.aria_role.empty()) j["aria_role"] = e.aria_role;
  if (e.component) j["component"] = true;
  if (e.row_height) j["row_height"] = e.row_height;
  if (e.effect.kind != EffectKind::none)
    j["effect"] = {{"kind", io_detail::name_of(e.effect.kind, kEffectNames)}, {"target", e.effect.target}};
  if (!e.children.empty()) j["children"] = e.children;
}

inline void from_json(const nlohmann::json& j, Element& e) {
  e = Element{};
  e.id = j.at("id").get<std::string>();
  e.kind = j.at("kind").get<ElementKind>();
  e.bbox = j.at("bbox").get<Rect>();
  e.text = j.value("text", "");
  e.placeholder = j.value("placeholder", "");
  e.style.display_none = j.value("display_none", false);
  e.style.visibility_hidden = j.value("visibility_hidden", false);
  e.style.opacity = j.value("opacity", 1.0);
  if (e.style.opacity < 0.0 || e.style.opacity > 1.0) throw Error("opacity out of range for " + e.id);
  e.has_click_listener = j.value("click_listener", false);
  e.editable = j.value("editable", false);
  e.aria_role = j.value("aria_role", "");
  e.component = j.value("component", false);
  e.row_height = j.value("row_height", 0);
  if (j.contains("effect")) {
    const auto& fx = j.at("effect");
    e.effect.kind = io_detail::parse_name<EffectKind>(fx.at("kind"), kEffectNames, "effect");
    e.effect.target = fx.value("target", "");
  }
  if (j.contains("children")) e.children = j.at("children").get<std::vector<Element>>();
}

inline void to_json(nlohmann::json& j, const Screen& s) {
  j = nlohmann::json{{"root", s.root},
                     {"viewport", {s.viewport_width, s.viewport_height}},
                     {"scroll_offsets", s.scroll_offsets},
                     {"focused", s.focused}};
  j["pending_popup"] = s.pending_popup ? nlohmann::json(*s.pending_popup) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, Screen& s) {
  s = Screen{};
  s.root = j.at("root").get<Element>();
  s.viewport_width = j.at("viewport").at(0).get<int>();
  s.viewport_height = j.at("viewport").at(1).get<int>();
  if (s.viewport_width <= 0 || s.viewport_height <= 0) throw Error("viewport must be positive");
  s.scroll_offsets = j.value("scroll_offsets", std::map<std::string, int>{});
  s.focused = j.value("focused", "");
  if (j.contains("pending_popup") && !j.at("pending_popup").is_null())
    s.pending_popup = j.at("pending_popup").get<Element>();
  for (const auto& [id, off] : s.scroll_offsets) {
    (void)off;
    const Element* c = find_element(s.root, id);
    if (!c || c->kind != ElementKind::scroll_container)
      throw Error("scroll offset for unknown container: " + id);
  }
}

inline void to_json(nlohmann::json& j, const PointTarget& p) { j = {{"at", p.at}, {"tau", p.tau}}; }

inline void to_json(nlohmann::json& j, const GtStep& g) {
  j = nlohmann::json{{"type", g.type}, {"state_fingerprint", g.state_fingerprint}};
  if (auto* r = std::get_if<Rect>(&g.target)) j["bbox"] = *r;
  if (auto* p = std::get_if<PointTarget>(&g.target)) j["point"] = *p;
  if (auto* t = std::get_if<std::string>(&g.target)) j["text"] = *t;
}

inline void from_json(const nlohmann::json& j, GtStep& g) {
  g = GtStep{};
  g.type = j.at("type").get<ActionKind>();
  g.state_fingerprint = j.value("state_fingerprint", std::uint64_t{0});
  const int populated = j.contains("bbox") + j.contains("point") + j.contains("text");
  if (populated > 1) throw Error("ground-truth step has more than one target");
  if (j.contains("bbox")) g.target = j.at("bbox").get<Rect>();
  if (j.contains("point")) {
    PointTarget p{j.at("point").at("at").get<Point>(), j.at("point").value("tau", 5.0)};
    if (!(p.tau > 0)) throw Error("tau must be positive");
    g.target = p;
  }
  if (j.contains("text")) g.target = j.at("text").get<std::string>();
}

inline void to_json(nlohmann::json& j, const TaskSpec& t) {
  j = {{"family", t.family}, {"target", t.target},     {"textbox", t.textbox}, {"word", t.word},
       {"dropdown", t.dropdown}, {"list", t.list}, {"link", t.link},       {"page", t.page}};
}

inline void from_json(const nlohmann::json& j, TaskSpec& t) {
  t.family = j.value("family", Family::custom);
  t.target = j.value("target", "");
  t.textbox = j.value("textbox", "");
  t.word = j.value("word", "");
  t.dropdown = j.value("dropdown", "");
  t.list = j.value("list", "");
  t.link = j.value("link", "");
  t.page = j.value("page", "");
}

inline void to_json(nlohmann::json& j, const WorldState& s) {
  j = nlohmann::json{{"screen", s.screen},
                     {"clock", s.clock},
                     {"episode_step", s.episode_step},
                     {"awaiting_user", s.awaiting_user},
                     {"done", s.done},
                     {"horizon", s.horizon},
                     {"goal", s.goal},
                     {"goal_reached", s.goal_reached},
                     {"page", s.page},
                     {"pages", s.pages},
                     {"user_wait_steps", s.user_wait_steps},
                     {"user_waits", s.user_waits},
                     {"user_fill", s.user_fill},
                     {"facts", s.facts},
                     {"scroll_step_px", s.scroll_step_px},
                     {"menu_scroll_rows", s.menu_scroll_rows},
                     {"spec", s.spec}};
  j["popup_template"] = s.popup_template ? nlohmann::json(*s.popup_template) : nlohmann::json(nullptr);
  j["popup_at"] = s.popup_at ? nlohmann::json(*s.popup_at) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, WorldState& s) {
  s = WorldState{};
  s.screen = j.at("screen").get<Screen>();
  s.clock = j.value("clock", 0.0);
  s.episode_step = j.value("episode_step", 0);
  s.awaiting_user = j.value("awaiting_user", false);
  s.done = j.value("done", false);
  s.horizon = j.at("horizon").get<int>();
  if (s.horizon < 1) throw Error("horizon must be >= 1");
  s.goal = j.at("goal").get<std::string>();
  if (!valid_goal_id(s.goal)) throw Error("unregistered goal predicate: " + s.goal);
  s.goal_reached = j.value("goal_reached", false);
  s.page = j.value("page", "");
  s.pages = j.value("pages", std::map<std::string, Element>{});
  if (j.contains("popup_template") && !j.at("popup_template").is_null())
    s.popup_template = j.at("popup_template").get<Element>();
  if (j.contains("popup_at") && !j.at("popup_at").is_null()) s.popup_at = j.at("popup_at").get<int>();
  s.user_wait_steps = j.value("user_wait_steps", 2);
  s.user_waits = j.value("user_waits", 0);
  s.user_fill = j.value("user_fill", std::map<std::string, std::string>{});
  s.facts = j.value("facts", std::set<std::string>{});
  s.scroll_step_px = j.value("scroll_step_px", 90);
  s.menu_scroll_rows = j.value("menu_scroll_rows", 1);
  if (j.contains("spec")) s.spec = j.at("spec").get<TaskSpec>();
}

inline void to_json(nlohmann::json& j, const Task& t) {
  j = nlohmann::json{{"instruction", t.instruction}, {"horizon", t.horizon},       {"gt", t.gt},
                     {"goal", t.goal},               {"spec", t.spec},             {"world_seed", t.world_seed},
                     {"state_seed", t.state_seed},   {"initial", t.initial}};
}

inline void from_json(const nlohmann::json& j, Task& t) {
  t = Task{};
  t.instruction = j.at("instruction").get<std::string>();
  t.horizon = j.at("horizon").get<int>();
  t.gt = j.value("gt", std::vector<GtStep>{});
  t.goal = j.at("goal").get<std::string>();
  if (t.horizon < 1) throw Error("horizon must be >= 1");
  if (static_cast<int>(t.gt.size()) > t.horizon) throw Error("ground truth longer than horizon");
  if (!valid_goal_id(t.goal)) throw Error("unregistered goal predicate: " + t.goal);
  if (j.contains("spec")) t.spec = j.at("spec").get<TaskSpec>();
  t.world_seed = j.value("world_seed", std::uint64_t{0});
  t.state_seed = j.value("state_seed", std::uint64_t{0});
  if (j.contains("initial")) t.initial = j.at("initial").get<WorldState>();
}

inline void to_json(nlohmann::json& j, const WorldConfig& c) {
  j = nlohmann::json{{"viewport", {c.viewport_width, c.viewport_height}},
                     {"grid", {c.grid_cols, c.grid_rows}},
                     {"horizon_slack", c.horizon_slack},
                     {"popup_probability", c.popup_probability},
                     {"buttons", {c.min_buttons, c.max_buttons}},
                     {"distractors", {c.min_distractors, c.max_distractors}},
                     {"options", {c.min_options, c.max_options}},
                     {"visible_rows", c.visible_rows},
                     {"force_menu_scroll", c.force_menu_scroll},
                     {"user_wait_steps", c.user_wait_steps},
                     {"scroll_step_px", c.scroll_step_px},
                     {"menu_scroll_rows", c.menu_scroll_rows},
                     {"family_weights", c.family_weights}};
  j["horizon"] = c.horizon ? nlohmann::json(*c.horizon) : nlohmann::json(nullptr);
}

/// Missing keys keep their defaults; the result is validated.
inline void from_json(const nlohmann::json& j, WorldConfig& c) {
  c = WorldConfig{};
  auto pair = [&](const char* key, int& a, int& b) {
    if (!j.contains(key)) return;
    a = j.at(key).at(0).get<int>();
    b = j.at(key).at(1).get<int>();
  };
  pair("viewport", c.viewport_width, c.viewport_height);
  pair("grid", c.grid_cols, c.grid_rows);
  pair("buttons", c.min_buttons, c.max_buttons);
  pair("distractors", c.min_distractors, c.max_distractors);
  pair("options", c.min_options, c.max_options);
  if (j.contains("horizon") && !j.at("horizon").is_null()) c.horizon = j.at("horizon").get<int>();
  c.horizon_slack = j.value("horizon_slack", c.horizon_slack);
  c.popup_probability = j.value("popup_probability", c.popup_probability);
  c.visible_rows = j.value("visible_rows", c.visible_rows);
  c.force_menu_scroll = j.value("force_menu_scroll", c.force_menu_scroll);
  c.user_wait_steps = j.value("user_wait_steps", c.user_wait_steps);
  c.scroll_step_px = j.value("scroll_step_px", c.scroll_step_px);
  c.menu_scroll_rows = j.value("menu_scroll_rows", c.menu_scroll_rows);
  if (j.contains("family_weights")) c.family_weights = j.at("family_weights").get<std::array<double, 5>>();
  validate(c);
}

inline void to_json(nlohmann::json& j, const ObservedElement& e) {
  j = {{"id", e.id},         {"kind", e.kind},         {"bbox", e.bbox},          {"text", e.text},
       {"placeholder", e.placeholder}, {"focused", e.focused}, {"in_popup", e.in_popup}, {"clickable", e.clickable}, {"scroll_offset", e.scroll_offset}};
}

inline void from_json(const nlohmann::json& j, ObservedElement& e) {
  e.id = j.at("id").get<std::string>();
  e.kind = j.at("kind").get<ElementKind>();
  e.bbox = j.at("bbox").get<Rect>();
  e.text = j.value("text", "");
  e.placeholder = j.value("placeholder", false);
  e.focused = j.value("focused", false);
  e.in_popup = j.value("in_popup", false);
  e.clickable = j.value("clickable", false);
  e.scroll_offset = j.value("scroll_offset", 0);
}

inline void to_json(nlohmann::json& j, const Observation& o) {
  j = {{"width", o.width}, {"height", o.height}, {"page", o.page},         {"grid", {o.grid_cols, o.grid_rows}},
       {"elements", o.elements}, {"raster", o.raster}};
}

inline void from_json(const nlohmann::json& j, Observation& o) {
  o.width = j.at("width").get<int>();
  o.height = j.at("height").get<int>();
  o.page = j.value("page", "");
  o.grid_cols = j.at("grid").at(0).get<int>();
  o.grid_rows = j.at("grid").at(1).get<int>();
  o.elements = j.at("elements").get<std::vector<ObservedElement>>();
  o.raster = j.at("raster").get<std::vector<std::uint16_t>>();
}

}  // namespace mano::world
