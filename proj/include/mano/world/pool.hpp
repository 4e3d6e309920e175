#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

#include "mano/trajectory.hpp"
#include "mano/util/rng.hpp"
#include "mano/world/expert.hpp"

namespace mano::world {

/// Everything an agent has seen in the episode so far.
struct AgentHistory {
  std::vector<Observation> observations;           // pre-observations of earlier steps
  std::vector<std::optional<ActionKind>> actions;  // nullopt when the utterance did not parse
  verifier::History verdicts;                      // summaries with marks
};

struct AgentView {
  const Task& task;
  const Observation& obs;
  const AgentHistory& history;
  int step = 0;
  const WorldState& state;  // privileged; only oracle drivers read it
};

struct AgentTurn {
  std::string utterance;
  std::vector<double> features;
  std::vector<int> choice;
};

using Driver = std::function<AgentTurn(const AgentView&, Rng&)>;

struct RolloutOptions {
  reward::RewardWeights weights;
  Provenance provenance = Provenance::online_rl;
  bool track_distance = false;  // planner distance per state, for coherence scoring
};

/// Ground truth applies at step t only while the agent is still on the certified path.
inline std::optional<GtStep> aligned_gt(const Task& task, int t, std::uint64_t fp) {
  if (t < 0 || t >= static_cast<int>(task.gt.size())) return std::nullopt;
  if (task.gt[t].state_fingerprint != fp) return std::nullopt;
  return task.gt[t];
}

inline std::string trajectory_id(const Task& task, std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "w%llu-s%llu-r%016llx", static_cast<unsigned long long>(task.world_seed),
                static_cast<unsigned long long>(task.state_seed), static_cast<unsigned long long>(seed));
  return buf;
}

/// Runs one episode of `task` to termination (finish, goal or horizon).
inline TrajectoryRecord rollout(const Task& task, const Driver& driver, std::uint64_t seed,
                                const RolloutOptions& opt = {}) {
  TrajectoryRecord rec;
  rec.id = trajectory_id(task, seed);
  rec.task = task;
  rec.seed = seed;
  rec.provenance = opt.provenance;
  Rng rng(seed);
  WorldState s = task.initial;
  s.horizon = task.horizon;
  AgentHistory hist;
  Observation obs = observe(s);
  auto distance = [&](const WorldState& st) {
    if (!opt.track_distance) return -1;
    auto d = distance_to_goal(st);
    return d ? *d : -1;
  };

  try {
    while (!s.done) {
      StepRecord step_rec;
      step_rec.pre = obs;
      step_rec.fingerprint = fingerprint(s);
      step_rec.distance = distance(s);
      AgentTurn turn = driver(AgentView{task, obs, hist, s.episode_step, s}, rng);
      step_rec.utterance = turn.utterance;
      step_rec.features = std::move(turn.features);
      step_rec.choice = std::move(turn.choice);

      const auto gt = aligned_gt(task, s.episode_step, step_rec.fingerprint);
      step_rec.has_gt = gt.has_value();
      auto parsed = dsl::parse_utterance(turn.utterance);
      if (parsed) {
        step_rec.action = parsed->action;
        step_rec.summary = parsed->summary;
        step(s, parsed->action);
      } else {
        skip_step(s);
      }
      step_rec.reward = reward::total_reward(turn.utterance, step_rec.action, gt, opt.weights);
      Observation post = observe(s);
      step_rec.verdict = verifier::verify({obs, post, task.instruction, step_rec.summary, hist.verdicts});

      hist.observations.push_back(obs);
      hist.actions.push_back(step_rec.action ? std::optional(step_rec.action->kind) : std::nullopt);
      hist.verdicts = verifier::augment(std::move(hist.verdicts), step_rec.summary, step_rec.verdict);
      rec.steps.push_back(std::move(step_rec));
      obs = std::move(post);
    }
  } catch (const std::exception& e) {
    rec.fault = true;
    rec.error = e.what();
  }
  rec.final_obs = obs;
  rec.final_fingerprint = fingerprint(s);
  rec.final_distance = distance(s);
  rec.goal_reached = s.goal_reached;
  rec.awaiting_user = s.awaiting_user;
  return rec;
}

struct PoolOptions {
  std::uint64_t seed = 0;
  RolloutOptions rollout;
};

/// Seed used for the i-th task of a pool run.
inline std::uint64_t pool_seed(std::uint64_t base, std::size_t index) { return derive_seed(base, index); }

/// Advances `n` environments concurrently over `tasks`; output order follows `tasks`.
inline std::vector<TrajectoryRecord> pool_run(int n, const std::vector<Task>& tasks, const Driver& driver,
                                              const PoolOptions& opt = {}) {
  if (n < 1) throw Error("pool_run needs at least one environment");
  std::vector<TrajectoryRecord> out(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++)
      out[i] = rollout(tasks[i], driver, pool_seed(opt.seed, i), opt.rollout);
  };
  const int threads = std::min<int>(n, static_cast<int>(std::max<std::size_t>(tasks.size(), 1)));
  if (threads == 1) {
    worker();
    return out;
  }
  std::vector<std::thread> pool;
  for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return out;
}

/// Oracle turn following the planner from the true state, with rule-drafted summaries.
inline AgentTurn expert_turn(const WorldState& s, const Task& task) {
  auto e = expert_step(s);
  const dsl::Action a = e ? e->action : dsl::Action::finish();
  const Observation obs = observe(s);
  const std::string summary = verifier::describe(a, obs);
  return {dsl::serialize(dsl::make_utterance(verifier::thought_for(task.instruction, summary), summary, a)), {}, {}};
}

inline Driver expert_driver() {
  return [](const AgentView& v, Rng&) { return expert_turn(v.state, v.task); };
}

}  // namespace mano::world
