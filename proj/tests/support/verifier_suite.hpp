#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mano/verify/verifier.hpp"
#include "mano/world/expert.hpp"
#include "mano/world/generator.hpp"

namespace mano::oracle {

/// One step with its label taken from the simulator's transition events.
struct LabeledStep {
  verifier::VerifyInput input;
  verifier::Diagnostic label = verifier::Diagnostic::none;
  std::string origin;
};

namespace detail {

// A point on screen where the simulator reports the click did nothing.
inline std::optional<dsl::Point> dead_point(const world::WorldState& s) {
  const auto obs = world::observe(s);
  for (int y = 15; y < obs.height; y += 30)
    for (int x = 15; x < obs.width; x += 30) {
      world::WorldState copy = s;
      const auto ev = world::step(copy, dsl::Action::click({x, y}));
      if (ev.noop && !ev.popup_injected && !ev.target && !ev.horizon_reached) return dsl::Point{x, y};
    }
  return std::nullopt;
}

}  // namespace detail

/// `total` steps split between correct steps, description errors (summary names an
/// element the simulator did not act on) and execution errors (declared step, click
/// landed on nothing); correct steps take the remainder.
inline std::vector<LabeledStep> verifier_suite(int total) {
  using verifier::Diagnostic;
  std::vector<LabeledStep> out;
  const int per_error = total / 3;
  const int want_ok = total - 2 * per_error;
  int n_ok = 0, n_desc = 0, n_exec = 0;
  world::WorldConfig cfg;
  for (std::uint64_t seed = 500; n_ok + n_desc + n_exec < total && seed < 5000; ++seed) {
    auto [state, task] = world::generate_world(seed, cfg);
    verifier::History h;
    while (auto e = world::expert_step(state)) {
      const auto pre = world::observe(state);
      const auto summary = verifier::describe(e->action, pre);

      const auto promised = verifier::expected_effect(summary, pre).type;
      if (n_exec < per_error && promised != verifier::EffectType::any) {
        if (auto p = detail::dead_point(state)) {
          world::WorldState copy = state;
          world::step(copy, dsl::Action::click(*p));
          out.push_back({{pre, world::observe(copy), task.instruction, summary, h}, Diagnostic::execution_error,
                         "seed " + std::to_string(seed) + " dead click"});
          ++n_exec;
        }
      }

      world::WorldState next = state;
      const auto ev = world::step(next, e->action);
      const auto post = world::observe(next);
      if (!ev.noop && ev.target) {
        if (n_desc < per_error) {
          const bool modal = pre.has_popup();
          for (const auto& other : pre.elements) {
            if (!other.clickable || other.id == *ev.target || (modal && !other.in_popup)) continue;
            const auto wrong = verifier::describe_click(other);
            if (wrong == summary || verifier::expected_effect(wrong, pre).type == verifier::EffectType::unverifiable)
              continue;
            out.push_back({{pre, post, task.instruction, wrong, h}, Diagnostic::description_error,
                           "seed " + std::to_string(seed) + " acted on " + *ev.target + ", declared " + other.id});
            ++n_desc;
            break;
          }
        }
        if (n_ok < want_ok) {
          out.push_back({{pre, post, task.instruction, summary, h}, Diagnostic::none,
                         "seed " + std::to_string(seed) + " expert"});
          ++n_ok;
        }
      }
      h = verifier::augment(h, summary, verifier::Verdict::ok());
      state = std::move(next);
      if (state.done) break;
    }
  }
  return out;
}

}  // namespace mano::oracle
