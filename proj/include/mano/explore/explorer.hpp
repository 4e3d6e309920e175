#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mano/trajectory.hpp"
#include "mano/world/expert.hpp"
#include "mano/world/pool.hpp"

namespace mano::explore {

using world::Element;
using world::ElementKind;
using world::Rect;
using world::Screen;
using world::WorldState;

enum class Reason { semantic_tag, aria_attribute, click_listener, encapsulated_component };

inline constexpr std::array<std::string_view, 4> kReasonNames = {"semantic-tag", "aria-attribute", "click-listener",
                                                                 "encapsulated-component"};

inline std::string_view to_string(Reason r) { return kReasonNames[static_cast<int>(r)]; }

struct InteractiveElement {
  std::string id;
  Reason reason = Reason::semantic_tag;
  Rect bbox;  // visible part, after scrolling and clipping
  std::string label;
  bool in_popup = false;
  friend bool operator==(const InteractiveElement&, const InteractiveElement&) = default;
};

/// Kinds whose tag alone marks them interactive.
inline bool semantic_tag(ElementKind k) {
  return k == ElementKind::button || k == ElementKind::textbox || k == ElementKind::link ||
         k == ElementKind::dropdown || k == ElementKind::option;
}

/// First matching criterion, checked in the order tag, ARIA, listener, component.
inline std::optional<Reason> interactive_reason(const Element& e) {
  if (semantic_tag(e.kind)) return Reason::semantic_tag;
  if (!e.aria_role.empty()) return Reason::aria_attribute;
  if (e.has_click_listener) return Reason::click_listener;
  if (e.component) return Reason::encapsulated_component;
  return std::nullopt;
}

/// Elements at or below 1 px in either dimension count as negligible.
inline bool negligible(const Rect& r) { return r.width <= 1 || r.height <= 1; }

inline std::string effect_phrase(const Element& e) {
  switch (e.effect.kind) {
    case world::EffectKind::navigate: return "opens " + e.effect.target;
    case world::EffectKind::toggle_list: return "toggles a list";
    case world::EffectKind::select_option: return "selects an option";
    case world::EffectKind::submit: return "submits form";
    case world::EffectKind::login: return "submits login";
    case world::EffectKind::close_popup: return "closes popup";
    case world::EffectKind::focus: return "focuses input";
    case world::EffectKind::none: break;
  }
  if (e.kind == ElementKind::textbox && e.editable) return "text input";
  return "";
}

/// Deterministic "kind: text (effect)" label; unlabeled elements fall back to the kind.
inline std::string annotate(const Element& e) {
  const std::string kind(world::to_string(e.kind));
  std::string text = !e.text.empty() ? e.text : !e.placeholder.empty() ? e.placeholder : e.aria_role;
  const std::string effect = effect_phrase(e);
  if (text.empty()) return kind + " (" + (effect.empty() ? "interactive area" : effect) + ")";
  return kind + ": " + text + (effect.empty() ? "" : " (" + effect + ")");
}

/// Candidates by the four criteria, then the viewport, style and dimension filter tiers.
inline std::vector<InteractiveElement> extract_interactives(const Screen& screen) {
  std::vector<InteractiveElement> out;
  for (const auto& p : world::layout(screen)) {
    const auto reason = interactive_reason(*p.element);
    if (!reason) continue;
    const Rect visible = world::detail::intersect(p.bbox, p.clip);
    if (!p.bbox.intersects(p.clip)) continue;
    if (p.style.display_none || p.style.visibility_hidden || p.style.opacity <= 0.0) continue;
    if (negligible(p.bbox)) continue;
    out.push_back({p.element->id, *reason, visible, annotate(*p.element), p.in_popup});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.bbox.y, a.bbox.x, a.id) < std::tie(b.bbox.y, b.bbox.x, b.id);
  });
  return out;
}

// ---------------------------------------------------------------------------
// DFS exploration

struct ExplorationNode {
  std::uint64_t fingerprint = 0;
  int depth = 0;
  std::string parent_element;  // empty at the root
  std::string parent_action;
};

struct ExploreConfig {
  int max_depth = 10;
  int budget = 10000;  // node expansions
  std::string probe_text = "test";
};

struct ExploreResult {
  std::vector<TrajectoryRecord> trajectories;  // one per DFS leaf
  std::vector<ExplorationNode> nodes;          // first discovery of each state
  int expansions = 0;
  bool budget_exhausted = false;
};

struct Edge {
  std::string element;
  dsl::Action action;
};

/// Actions the explorer tries in a state: clicks on interactives (popup first when
/// one is open), typing into a focused box, and scrolling scroll containers.
inline std::vector<Edge> candidate_edges(const WorldState& s, const ExploreConfig& cfg) {
  std::vector<Edge> out;
  if (s.awaiting_user) return out;
  const bool modal = s.screen.pending_popup.has_value();
  for (const auto& ie : extract_interactives(s.screen)) {
    if (modal && !ie.in_popup) continue;
    out.push_back({ie.id, dsl::Action::click(ie.bbox.center())});
  }
  if (!modal && !s.screen.focused.empty()) out.push_back({s.screen.focused, dsl::Action::type(cfg.probe_text)});
  for (const auto& p : world::layout(s.screen)) {
    const Element& e = *p.element;
    if (e.kind != ElementKind::scroll_container || !world::is_visible(p)) continue;
    if (modal && !p.in_popup) continue;
    if (world::detail::max_scroll(e) == 0) continue;
    const auto at = world::detail::intersect(p.bbox, p.clip).center();
    for (auto dir : {dsl::Direction::down, dsl::Direction::up}) {
      out.push_back({e.id, dsl::Action::scroll(at, dir)});
      if (e.row_height > 0) out.push_back({e.id, dsl::Action::scroll_menu(at, dir)});
    }
  }
  return out;
}

namespace detail {

struct Frame {
  WorldState state;
  world::Observation obs;
  std::uint64_t fp = 0;
};

}  // namespace detail

/// Depth-first search over (state, action) edges from the factory's initial state.
/// A state is expanded again only when reached at a strictly smaller depth, and
/// fingerprints already on the current path are pruned.
inline ExploreResult dfs_explore(const std::function<std::pair<WorldState, world::Task>()>& factory,
                                 const ExploreConfig& cfg = {}) {
  if (cfg.budget <= 0) throw Error("exploration budget must be positive");
  if (cfg.max_depth < 0) throw Error("max depth must be non-negative");
  auto [start, task] = factory();
  start.horizon = 1 << 30;
  start.done = false;
  ExploreResult res;
  std::map<std::uint64_t, int> best_depth;
  std::map<std::uint64_t, std::size_t> node_index;
  std::vector<detail::Frame> path;
  std::vector<Edge> taken;
  std::set<std::uint64_t> on_path;

  auto emit = [&] {
    TrajectoryRecord t;
    t.task = task;
    t.provenance = Provenance::explorer;
    verifier::History hist;
    for (std::size_t i = 0; i < taken.size(); ++i) {
      StepRecord st;
      st.pre = path[i].obs;
      st.fingerprint = path[i].fp;
      st.action = taken[i].action;
      st.summary = verifier::describe(taken[i].action, st.pre);
      st.utterance = dsl::serialize(
          dsl::make_utterance(verifier::thought_for(task.instruction, st.summary), st.summary, taken[i].action));
      st.reward = reward::total_reward(st.utterance, st.action, world::aligned_gt(task, static_cast<int>(i), st.fingerprint));
      st.has_gt = world::aligned_gt(task, static_cast<int>(i), st.fingerprint).has_value();
      st.verdict = verifier::verify({st.pre, path[i + 1].obs, task.instruction, st.summary, hist});
      hist = verifier::augment(std::move(hist), st.summary, st.verdict);
      t.steps.push_back(std::move(st));
    }
    t.final_obs = path.back().obs;
    t.final_fingerprint = path.back().fp;
    t.goal_reached = path.back().state.goal_reached;
    t.awaiting_user = path.back().state.awaiting_user;
    char buf[48];
    std::snprintf(buf, sizeof buf, "explore-%zu", res.trajectories.size());
    t.id = buf;
    res.trajectories.push_back(std::move(t));
  };

  std::function<void(int)> visit = [&](int depth) {
    const auto& here = path.back();
    bool extended = false;
    if (depth < cfg.max_depth && !here.state.done) {
      if (res.expansions >= cfg.budget) {
        res.budget_exhausted = true;
      } else {
        ++res.expansions;
        for (const auto& edge : candidate_edges(here.state, cfg)) {
          WorldState next = path.back().state;
          world::step(next, edge.action);
          const auto fp = world::fingerprint(next);
          if (on_path.count(fp)) continue;
          auto it = best_depth.find(fp);
          if (it != best_depth.end() && it->second <= depth + 1) continue;
          const ExplorationNode node{fp, depth + 1, edge.element, dsl::serialize(edge.action)};
          if (it == best_depth.end()) {
            node_index[fp] = res.nodes.size();
            res.nodes.push_back(node);
          } else {
            res.nodes[node_index[fp]] = node;
          }
          best_depth[fp] = depth + 1;
          auto obs = world::observe(next);
          path.push_back({std::move(next), std::move(obs), fp});
          taken.push_back(edge);
          on_path.insert(fp);
          visit(depth + 1);
          on_path.erase(fp);
          taken.pop_back();
          path.pop_back();
          extended = true;
          if (res.budget_exhausted) break;
        }
      }
    }
    if (!extended && !taken.empty()) emit();
  };

  const auto fp0 = world::fingerprint(start);
  auto obs0 = world::observe(start);
  path.push_back({start, std::move(obs0), fp0});
  on_path.insert(fp0);
  best_depth[fp0] = 0;
  node_index[fp0] = 0;
  res.nodes.push_back({fp0, 0, "", ""});
  visit(0);
  return res;
}

// ---------------------------------------------------------------------------
// Quality scoring

struct QualityScore {
  double completeness = 0.0;
  double intent_clarity = 0.0;
  double coherence = 0.0;
  double quality = 0.0;
};

/// Mean of completeness, intent clarity and coherence.
inline QualityScore score_trajectory(const TrajectoryRecord& t) {
  QualityScore q;
  const bool dangling_call = t.awaiting_user || (!t.steps.empty() && t.steps.back().action &&
                                                 t.steps.back().action->kind == dsl::ActionKind::call_user);
  q.completeness = t.goal_reached && !dangling_call ? 1.0 : 0.0;
  if (t.steps.empty()) {
    q.intent_clarity = 1.0;
    q.coherence = 1.0;
  } else {
    int clear = 0, coherent = 0;
    std::set<std::uint64_t> seen;
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
      const auto& s = t.steps[i];
      if (verifier::summary_template_id(s.summary)) ++clear;
      seen.insert(s.fingerprint);
      const std::uint64_t post_fp = i + 1 < t.steps.size() ? t.steps[i + 1].fingerprint : t.final_fingerprint;
      const int post_dist = i + 1 < t.steps.size() ? t.steps[i + 1].distance : t.final_distance;
      const bool revisit = seen.count(post_fp) > 0;
      // Where the planner distance is known, strict progress excuses a repeated
      // screen (waiting on the user leaves the screen unchanged).
      const bool known = s.distance >= 0 && post_dist >= 0;
      const bool ok = known ? post_dist < s.distance || (post_dist == s.distance && !revisit) : !revisit;
      if (ok) ++coherent;
    }
    const double n = static_cast<double>(t.steps.size());
    q.intent_clarity = clear / n;
    q.coherence = coherent / n;
  }
  q.quality = (q.completeness + q.intent_clarity + q.coherence) / 3.0;
  return q;
}

inline bool retain(const TrajectoryRecord& t, double threshold) { return score_trajectory(t).quality >= threshold; }

}  // namespace mano::explore
