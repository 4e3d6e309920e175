#pragma once

#include <set>
#include <string>
#include <vector>

#include "mano/datacycle/datacycle.hpp"
#include "mano/world/generator.hpp"

namespace mano::oracle {

/// Expert driver that misdescribes the steps in `wrong` while still acting correctly.
inline world::Driver misdescribing_expert(std::set<int> wrong) {
  return [wrong](const world::AgentView& v, Rng& rng) {
    auto turn = world::expert_driver()(v, rng);
    if (!wrong.count(v.step)) return turn;
    auto u = dsl::parse_utterance(turn.utterance).value();
    u.summary = "click the 'Nonexistent widget' button";
    u.thought = verifier::thought_for(v.task.instruction, u.summary);
    turn.utterance = dsl::serialize(u);
    return turn;
  };
}

struct LabeledTrajectory {
  TrajectoryRecord record;
  datacycle::Destination expected;
  std::string label;
};

/// Trajectories whose destination is known from how they were produced.
inline std::vector<LabeledTrajectory> labeled_trajectories(int worlds = 6) {
  using datacycle::Destination;
  std::vector<LabeledTrajectory> out;
  for (int w = 0; w < worlds; ++w) {
    auto task = world::generate_world(static_cast<std::uint64_t>(100 + w), world::WorldConfig{}).second;
    const auto n = static_cast<int>(task.gt.size());
    out.push_back({world::rollout(task, world::expert_driver(), 1), Destination::sft_pool, "expert"});
    out.push_back({world::rollout(task, misdescribing_expert({0}), 2), Destination::review_queue, "one-wrong-summary"});
    if (n > 2)
      out.push_back({world::rollout(task, misdescribing_expert({0, n - 1}), 3), Destination::review_queue,
                     "two-wrong-summaries"});
    world::Driver stall = [](const world::AgentView& v, Rng&) {
      const dsl::Action a = dsl::Action::scroll({v.obs.width / 2, v.obs.height / 2}, dsl::Direction::up);
      return world::AgentTurn{dsl::serialize(dsl::make_utterance("Waiting.", "scroll the page up", a)), {}, {}};
    };
    out.push_back({world::rollout(task, stall, 4), Destination::negative_pool, "horizon-exhausted"});
    world::Driver give_up = [](const world::AgentView& v, Rng& rng) {
      if (v.step == 1) return world::AgentTurn{dsl::serialize(dsl::make_utterance("Done.", "finish the task", dsl::Action::finish())), {}, {}};
      return misdescribing_expert({0})(v, rng);
    };
    out.push_back({world::rollout(task, give_up, 5), Destination::negative_pool, "wrong-summary-no-goal"});
    world::Driver crash = [](const world::AgentView& v, Rng& rng) {
      if (v.step == 1) throw Error("driver crashed");
      return world::expert_driver()(v, rng);
    };
    out.push_back({world::rollout(task, crash, 6), Destination::negative_pool, "driver-fault"});
  }
  return out;
}

/// The first rows of the SFT data layout written out literally, then the general
/// row for step i >= 3: all summaries, observations for the last two earlier steps.
inline std::string expected_row(int i) {
  static const std::vector<std::string> literal = {
      "p_s p_u o_0",
      "p_s p_u o_0 s_0 o_1",
      "p_s p_u o_0 s_0 o_1 s_1 o_2",
      "p_s p_u s_0 o_1 s_1 o_2 s_2 o_3",
      "p_s p_u s_0 s_1 o_2 s_2 o_3 s_3 o_4",
  };
  if (i < static_cast<int>(literal.size())) return literal[static_cast<std::size_t>(i)];
  std::string row = "p_s p_u";
  for (int k = 0; k <= i - 3; ++k) row += " s_" + std::to_string(k);
  for (int k = i - 2; k <= i - 1; ++k) row += " o_" + std::to_string(k) + " s_" + std::to_string(k);
  return row + " o_" + std::to_string(i);
}

}  // namespace mano::oracle
