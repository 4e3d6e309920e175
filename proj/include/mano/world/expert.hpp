#pragma once

#include <optional>
#include <vector>

#include "mano/world/world.hpp"

namespace mano::world {

struct ExpertStep {
  Action action;
  GtStep gt;
};

namespace detail {

inline std::optional<Placed> placed_visible(const Screen& screen, std::string_view id) {
  for (const auto& p : layout(screen))
    if (p.element->id == id && is_visible(p)) return p;
  return std::nullopt;
}

inline ExpertStep click_step(const WorldState& s, const Placed& p) {
  const Rect box = intersect(p.bbox, p.clip);
  return {Action::click(box.center()), GtStep{ActionKind::click, box, fingerprint(s)}};
}

}  // namespace detail

/// Next step of the generator's construction trace from `s`, or nullopt when the
/// task is finished or the state is off the certified path.
inline std::optional<ExpertStep> expert_step(const WorldState& s) {
  if (s.done || s.goal_reached) return std::nullopt;
  const std::uint64_t fp = fingerprint(s);
  // Input is ignored while the user has control, popup or not.
  if (s.awaiting_user) return ExpertStep{Action::wait(), GtStep{ActionKind::wait, {}, fp}};
  if (s.screen.pending_popup) {
    std::optional<ExpertStep> out;
    for (const auto& p : layout(s.screen))
      if (p.in_popup && is_visible(p) && p.element->effect.kind == EffectKind::close_popup)
        out = detail::click_step(s, p);
    return out;
  }

  const TaskSpec& t = s.spec;
  auto click_id = [&](const std::string& id) -> std::optional<ExpertStep> {
    auto p = detail::placed_visible(s.screen, id);
    if (!p) return std::nullopt;
    return detail::click_step(s, *p);
  };

  switch (t.family) {
    case Family::click_button: return click_id(t.target);
    case Family::search:
      if (s.screen.focused != t.textbox) return click_id(t.textbox);
      return ExpertStep{Action::type(t.word), GtStep{ActionKind::type, t.word, fp}};
    case Family::dropdown: {
      auto list = detail::placed_visible(s.screen, t.list);
      if (!list) return click_id(t.dropdown);
      const Element* opt = find_element(s.screen.root, t.target);
      if (!opt) return std::nullopt;
      auto placed = layout(s.screen);
      for (const auto& p : placed) {
        if (p.element != opt) continue;
        const Rect& lb = list->bbox;
        const Rect clipped = detail::intersect(lb, list->clip);
        const bool inside = p.bbox.y >= lb.y && p.bbox.bottom() <= lb.bottom();
        if (inside) return detail::click_step(s, p);
        const auto dir = p.bbox.y < lb.y ? dsl::Direction::up : dsl::Direction::down;
        return ExpertStep{Action::scroll_menu(clipped.center(), dir),
                          GtStep{ActionKind::scroll_menu, clipped, fp}};
      }
      return std::nullopt;
    }
    case Family::navigate_click:
      if (s.page != t.page) return click_id(t.link);
      return click_id(t.target);
    case Family::login: {
      bool empty = false;
      for_each_element(s.screen.root, [&](const Element& c) {
        if (c.kind == ElementKind::textbox && c.editable && c.text.empty()) empty = true;
      });
      if (empty) return ExpertStep{Action::call_user(), GtStep{ActionKind::call_user, {}, fp}};
      return click_id(t.target);
    }
    case Family::custom: return std::nullopt;
  }
  return std::nullopt;
}

struct ExpertTrace {
  std::vector<ExpertStep> steps;
  std::vector<WorldState> states;  // states[i] is the state before steps[i]; one extra final state
  bool reached_goal = false;
};

/// Rolls the planner forward from `start` (ignoring its horizon) for at most `limit` steps.
inline ExpertTrace expert_trace(WorldState start, int limit = 64) {
  ExpertTrace trace;
  start.horizon = std::max(start.horizon, start.episode_step + limit + 1);
  trace.states.push_back(start);
  WorldState s = start;
  for (int i = 0; i < limit; ++i) {
    if (s.goal_reached) break;
    auto next = expert_step(s);
    if (!next) break;
    step(s, next->action);
    trace.steps.push_back(*next);
    trace.states.push_back(s);
  }
  trace.reached_goal = s.goal_reached;
  return trace;
}

/// Remaining planner steps to the goal from `s`, when the planner can reach it.
inline std::optional<int> distance_to_goal(const WorldState& s, int limit = 64) {
  if (s.goal_reached) return 0;
  WorldState probe = s;
  probe.done = false;
  auto tr = expert_trace(std::move(probe), limit);
  if (!tr.reached_goal) return std::nullopt;
  return static_cast<int>(tr.steps.size());
}

}  // namespace mano::world
