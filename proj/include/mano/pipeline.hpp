#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <vector>

#include "mano/grpo/grpo.hpp"
#include "mano/policy/policy.hpp"
#include "mano/world/generator.hpp"
#include "mano/world/pool.hpp"

namespace mano::pipeline {

using policy::PolicyConfig;
using policy::PolicyParams;

/// Seed namespaces keeping the evaluation suite disjoint from training tasks.
inline constexpr std::uint64_t kSuiteStream = 0x5017e;
inline constexpr std::uint64_t kSftStream = 0x5f7;
inline constexpr std::uint64_t kOfflineStream = 0x0ff;
inline constexpr std::uint64_t kOnlineStream = 0x0a1;
inline constexpr std::uint64_t kEvalStream = 0xe7a1;

struct StageConfig {
  PolicyConfig policy;
  world::WorldConfig world;
  std::uint64_t suite_seed = 2024;
  int suite_size = 50;
  int eval_episodes = 4;  // sampled episodes per suite task

  int sft_tasks = 40;
  int sft_steps = 200;
  double sft_lr = 0.05;

  grpo::TrainConfig grpo;
  int offline_tasks = 40;
  int online_rounds = 20;
  int online_tasks = 24;
  int threads = 1;
};

inline std::vector<world::Task> make_tasks(std::uint64_t base, std::uint64_t stream, int n,
                                           const world::WorldConfig& wc) {
  std::vector<world::Task> out;
  for (int i = 0; i < n; ++i) out.push_back(world::generate_world(derive_seed(derive_seed(base, stream), i), wc).second);
  return out;
}

/// Easier worlds for starved online rounds: fewer distractors and popups per relax level.
inline world::WorldConfig relaxed(world::WorldConfig wc, int relax) {
  if (relax <= 0) return wc;
  wc.popup_probability = std::max(0.0, wc.popup_probability - 0.15 * relax);
  wc.max_distractors = std::max(wc.min_distractors, wc.max_distractors - relax);
  return wc;
}

inline std::vector<world::Task> suite(const StageConfig& c) {
  return make_tasks(c.suite_seed, kSuiteStream, c.suite_size, c.world);
}

/// Fraction of sampled episodes on `tasks` that reach the goal.
inline double success_rate(const world::Driver& driver, const std::vector<world::Task>& tasks, int episodes,
                           std::uint64_t seed, int threads = 1) {
  if (tasks.empty() || episodes < 1) throw Error("success rate needs tasks and episodes");
  std::vector<world::Task> expanded;
  for (const auto& t : tasks)
    for (int k = 0; k < episodes; ++k) expanded.push_back(t);
  world::PoolOptions po;
  po.seed = seed;
  const auto trajs = world::pool_run(threads, expanded, driver, po);
  int ok = 0;
  for (const auto& t : trajs) ok += t.goal_reached ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(trajs.size());
}

inline double success_rate(const PolicyParams& p, const std::vector<world::Task>& tasks, int episodes,
                           std::uint64_t seed, int threads = 1) {
  return success_rate(policy::make_driver(std::make_shared<const PolicyParams>(p)), tasks, episodes, seed, threads);
}

/// Full-batch Adam on the SFT loss.
inline PolicyParams sft_train(PolicyParams p, const std::vector<policy::SftExample>& data, int steps, double lr) {
  grpo::Optimizer opt(grpo::OptimizerKind::adam, lr);
  for (int i = 0; i < steps; ++i) opt.step(p.theta, policy::sft_loss_and_grad(p, data).grad);
  return p;
}

inline std::vector<TrajectoryRecord> expert_rollouts(const std::vector<world::Task>& tasks, std::uint64_t seed,
                                                     int threads = 1) {
  world::PoolOptions po;
  po.seed = seed;
  po.rollout.provenance = Provenance::sft_seed;
  return world::pool_run(threads, tasks, world::expert_driver(), po);
}

/// Groups of G-1 policy samples plus one expert demonstration per task.
inline std::vector<grpo::RolloutGroup> offline_dataset(const PolicyParams& p, const std::vector<world::Task>& tasks,
                                                       grpo::TrainConfig cfg, std::uint64_t seed) {
  const int g = cfg.group_size;
  cfg.group_size = g - 1;
  auto groups = grpo::sample_groups(p, tasks, cfg, derive_seed(seed, 1), Provenance::explorer);
  const auto experts = expert_rollouts(tasks, derive_seed(seed, 2), cfg.threads);
  for (std::size_t i = 0; i < groups.size(); ++i) groups[i].members.push_back(experts[i]);
  return groups;
}

struct StageResult {
  double random = 0, sft = 0, offline = 0, online = 0;
  PolicyParams sft_params, offline_params, online_params;
};

/// random -> SFT -> SFT+offline -> SFT+offline+online, evaluated on the fixed suite.
inline StageResult run_stages(const StageConfig& c, std::uint64_t seed) {
  const auto eval_tasks = suite(c);
  const auto eval_seed = derive_seed(seed, kEvalStream);
  PolicyConfig pc = c.policy;
  pc.init_seed = seed;
  StageResult r;
  r.random = success_rate(PolicyParams(pc), eval_tasks, c.eval_episodes, eval_seed, c.threads);

  const auto sft_tasks = make_tasks(seed, kSftStream, c.sft_tasks, c.world);
  const auto demos = expert_rollouts(sft_tasks, seed, c.threads);
  r.sft_params = sft_train(PolicyParams(pc), policy::sft_examples(pc, demos), c.sft_steps, c.sft_lr);
  r.sft = success_rate(r.sft_params, eval_tasks, c.eval_episodes, eval_seed, c.threads);

  grpo::TrainConfig gc = c.grpo;
  gc.threads = c.threads;
  gc.seed = derive_seed(seed, kOnlineStream);
  const auto off_tasks = make_tasks(seed, kOfflineStream, c.offline_tasks, c.world);
  r.offline_params = grpo::offline_train(r.sft_params, offline_dataset(r.sft_params, off_tasks, gc, seed), gc).params;
  r.offline = success_rate(r.offline_params, eval_tasks, c.eval_episodes, eval_seed, c.threads);

  grpo::OnlineConfig oc;
  oc.rounds = c.online_rounds;
  const world::WorldConfig wc = c.world;
  const int per_round = c.online_tasks;
  grpo::TaskFactory factory = [seed, wc, per_round](int round, int relax) {
    return make_tasks(derive_seed(seed, static_cast<std::uint64_t>(round)), kOnlineStream + relax, per_round, relaxed(wc, relax));
  };
  r.online_params = grpo::online_train(r.offline_params, factory, gc, oc).params;
  r.online = success_rate(r.online_params, eval_tasks, c.eval_episodes, eval_seed, c.threads);
  return r;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw Error("median of empty list");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace mano::pipeline
