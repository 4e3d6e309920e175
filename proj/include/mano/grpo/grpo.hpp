#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mano/policy/policy.hpp"
#include "mano/trajectory.hpp"
#include "mano/world/pool.hpp"

namespace mano::grpo {

using policy::FeatureVector;
using policy::PolicyParams;
using policy::StructuredOutput;

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  int group_size = 8;
  double clip_eps = 0.2;
  int ref_refresh = 1;       // batches between reference snapshots
  double std_floor = 1e-6;
  int epochs = 1;            // optimization passes per batch
  int batch_groups = 16;     // groups per batch
  double learning_rate = 0.05;
  OptimizerKind optimizer = OptimizerKind::adam;
  bool reward_to_go = false;
  int threads = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (group_size < 2) throw Error("group size must be >= 2");
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw Error("clip epsilon must lie in (0,1)");
    if (!(std_floor > 0.0)) throw Error("std floor must be positive");
    if (ref_refresh < 1 || epochs < 1 || batch_groups < 1) throw Error("refresh, epochs and batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
    if (threads < 1) throw Error("threads must be >= 1");
  }
};

/// Trajectories sampled for the same task from the same initial state.
struct RolloutGroup {
  std::string task_id;
  std::vector<TrajectoryRecord> members;

  std::vector<double> returns() const {
    std::vector<double> r;
    for (const auto& m : members) r.push_back(m.total_return());
    return r;
  }
};

inline std::string task_key(const world::Task& t) {
  return "w" + std::to_string(t.world_seed) + "-s" + std::to_string(t.state_seed);
}

/// (R_k - mean) / max(std, floor), population statistics.
inline std::vector<double> group_advantages(std::span<const double> returns, double std_floor) {
  if (returns.size() < 2) throw Error("group advantages need at least two returns");
  const auto [lo, hi] = std::minmax_element(returns.begin(), returns.end());
  if (*lo == *hi) return std::vector<double>(returns.size(), 0.0);
  const double n = static_cast<double>(returns.size());
  const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  const double sd = std::max(std::sqrt(var / n), std_floor);
  std::vector<double> out;
  for (double r : returns) out.push_back((r - mean) / sd);
  return out;
}

inline double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

inline double clipped_surrogate(double ratio, double adv, double eps) {
  return std::min(ratio * adv, clip(ratio, 1.0 - eps, 1.0 + eps) * adv);
}

/// True when the clipped branch is strictly the minimum, so the term has no gradient.
inline bool surrogate_clipped(double ratio, double adv, double eps) {
  return (adv > 0.0 && ratio > 1.0 + eps) || (adv < 0.0 && ratio < 1.0 - eps);
}

// ---------------------------------------------------------------------------
// Prepared batches

struct PreparedStep {
  FeatureVector features;
  StructuredOutput out;
  double advantage = 0.0;
  double ref_log_prob = 0.0;
};

struct PreparedGroup {
  std::string task_id;
  std::vector<PreparedStep> steps;
};

/// Per-step advantages of each member: outcome-style by default, return-to-go when configured.
inline std::vector<std::vector<double>> member_advantages(const RolloutGroup& g, const TrainConfig& cfg) {
  const auto returns = g.returns();
  const auto adv = group_advantages(returns, cfg.std_floor);
  std::vector<std::vector<double>> out;
  if (!cfg.reward_to_go) {
    for (std::size_t k = 0; k < g.members.size(); ++k) out.emplace_back(g.members[k].steps.size(), adv[k]);
    return out;
  }
  const double n = static_cast<double>(returns.size());
  const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  const double sd = std::max(std::sqrt(var / n), cfg.std_floor);
  for (const auto& m : g.members) {
    std::vector<double> a(m.steps.size());
    double togo = 0.0;
    for (std::size_t t = m.steps.size(); t-- > 0;) {
      togo += m.steps[t].reward.total;
      a[t] = (togo - mean) / sd;
    }
    out.push_back(std::move(a));
  }
  return out;
}

/// Features, taken outputs, advantages and reference log-probs of every replayable step.
inline PreparedGroup prepare_group(const RolloutGroup& g, const PolicyParams& ref, const TrainConfig& cfg) {
  if (g.members.size() < 2) throw Error("rollout group " + g.task_id + " has fewer than two members");
  PreparedGroup pg;
  pg.task_id = g.task_id;
  const auto adv = member_advantages(g, cfg);
  for (std::size_t k = 0; k < g.members.size(); ++k) {
    const auto& m = g.members[k];
    const auto feats = policy::replay_features(ref.config(), m);
    const auto outs = policy::replay_outputs(ref.config(), m);
    for (std::size_t t = 0; t < m.steps.size(); ++t) {
      if (!outs[t]) continue;
      PreparedStep s{feats[t], *outs[t], adv[k][t], 0.0};
      s.ref_log_prob = policy::log_prob(ref, s.features, s.out);
      pg.steps.push_back(std::move(s));
    }
  }
  return pg;
}

struct StepMetrics {
  double loss = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double mean_advantage = 0.0;
  std::size_t steps = 0;
  bool aborted = false;
  std::string offending_group;
};

struct GrpoLoss {
  double loss = 0.0;
  std::vector<double> grad;
  StepMetrics metrics;
};

/// Negated mean clipped surrogate over all (member, step) pairs, and its gradient.
inline GrpoLoss grpo_loss_and_grad(const PolicyParams& params, std::span<const PreparedGroup> groups,
                                   const TrainConfig& cfg) {
  GrpoLoss r;
  r.grad.assign(params.size(), 0.0);
  std::size_t n = 0;
  for (const auto& g : groups) n += g.steps.size();
  if (n == 0) return r;
  const double inv = 1.0 / static_cast<double>(n);
  std::size_t clipped = 0;
  for (const auto& g : groups) {
    double group_loss = 0.0;
    for (const auto& s : g.steps) {
      const double ratio = std::exp(policy::log_prob(params, s.features, s.out) - s.ref_log_prob);
      const double term = clipped_surrogate(ratio, s.advantage, cfg.clip_eps);
      group_loss -= term * inv;
      r.metrics.mean_ratio += ratio * inv;
      r.metrics.mean_advantage += s.advantage * inv;
      if (surrogate_clipped(ratio, s.advantage, cfg.clip_eps)) {
        ++clipped;
        continue;
      }
      if (s.advantage != 0.0) policy::add_log_prob_grad(params, s.features, s.out, -inv * s.advantage * ratio, r.grad);
    }
    if (!std::isfinite(group_loss)) {
      r.metrics.aborted = true;
      r.metrics.offending_group = g.task_id;
      r.loss = group_loss;
      return r;
    }
    r.loss += group_loss;
  }
  r.metrics.loss = r.loss;
  r.metrics.clip_fraction = static_cast<double>(clipped) * inv;
  r.metrics.steps = n;
  params.apply_freeze(r.grad);
  return r;
}

// ---------------------------------------------------------------------------
// Optimizers

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}

  void step(std::vector<double>& theta, const std::vector<double>& grad) {
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr_ * grad[i];
      return;
    }
    if (m_.size() != theta.size()) {
      m_.assign(theta.size(), 0.0);
      v_.assign(theta.size(), 0.0);
      t_ = 0;
    }
    ++t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, t_), c2 = 1.0 - std::pow(b2, t_);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i];
      if (g == 0.0 && m_[i] == 0.0 && v_[i] == 0.0) continue;
      m_[i] = b1 * m_[i] + (1 - b1) * g;
      v_[i] = b2 * v_[i] + (1 - b2) * g * g;
      theta[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
    }
  }

 private:
  OptimizerKind kind_;
  double lr_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

/// One optimization pass on the negated clipped surrogate; `ref` stays fixed.
inline std::pair<PolicyParams, StepMetrics> grpo_step(const PolicyParams& params, const PolicyParams& ref,
                                                      const std::vector<RolloutGroup>& groups, const TrainConfig& cfg,
                                                      Optimizer* opt = nullptr) {
  cfg.validate();
  std::vector<PreparedGroup> prepared;
  for (const auto& g : groups) prepared.push_back(prepare_group(g, ref, cfg));
  Optimizer local(cfg.optimizer, cfg.learning_rate);
  Optimizer& o = opt ? *opt : local;
  auto r = grpo_loss_and_grad(params, prepared, cfg);
  PolicyParams next = params;
  if (r.metrics.aborted) return {next, r.metrics};
  o.step(next.theta, r.grad);
  return {next, r.metrics};
}

// ---------------------------------------------------------------------------
// Metrics log

struct MetricsRow {
  std::string stage;
  int step = 0;
  StepMetrics m;
};

inline void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "stage,step,loss,mean_ratio,clip_fraction,mean_advantage,steps,aborted\n";
  for (const auto& r : rows)
    out << r.stage << ',' << r.step << ',' << r.m.loss << ',' << r.m.mean_ratio << ',' << r.m.clip_fraction << ','
        << r.m.mean_advantage << ',' << r.m.steps << ',' << (r.m.aborted ? 1 : 0) << '\n';
}

// ---------------------------------------------------------------------------
// Offline and online training

/// Default difficulty filter: drop groups with no return spread at either extreme.
inline bool informative_group(const RolloutGroup& g) {
  if (g.members.empty()) return false;
  bool all_zero = true, all_max = true;
  for (const auto& m : g.members) {
    const double r = m.total_return();
    const double best = static_cast<double>(m.task.gt.size());
    if (std::abs(r) > 1e-12) all_zero = false;
    if (std::abs(r - best) > 1e-9) all_max = false;
  }
  return !all_zero && !all_max;
}

using GroupFilter = std::function<bool(const RolloutGroup&)>;

inline std::vector<RolloutGroup> group_by_task(const std::vector<TrajectoryRecord>& trajs) {
  std::vector<RolloutGroup> out;
  for (const auto& t : trajs) {
    const auto key = task_key(t.task);
    auto it = std::find_if(out.begin(), out.end(), [&](const RolloutGroup& g) { return g.task_id == key; });
    if (it == out.end()) out.push_back({key, {t}});
    else it->members.push_back(t);
  }
  return out;
}

struct TrainResult {
  PolicyParams params;
  std::vector<MetricsRow> metrics;
};

/// Iterates grpo_step over stored groups in batches, refreshing the reference
/// snapshot every `ref_refresh` batches.
inline TrainResult offline_train(const PolicyParams& start, const std::vector<RolloutGroup>& dataset,
                                 const TrainConfig& cfg, const std::string& stage = "offline") {
  cfg.validate();
  if (dataset.empty()) throw Error("offline training needs a non-empty dataset");
  TrainResult res{start, {}};
  Optimizer opt(cfg.optimizer, cfg.learning_rate);
  PolicyParams ref = start;
  int batch = 0, step = 0;
  for (std::size_t b = 0; b < dataset.size(); b += static_cast<std::size_t>(cfg.batch_groups), ++batch) {
    if (batch % cfg.ref_refresh == 0) ref = res.params;
    const auto end = std::min(dataset.size(), b + static_cast<std::size_t>(cfg.batch_groups));
    std::vector<PreparedGroup> prepared;
    for (std::size_t i = b; i < end; ++i) prepared.push_back(prepare_group(dataset[i], ref, cfg));
    for (int e = 0; e < cfg.epochs; ++e) {
      auto r = grpo_loss_and_grad(res.params, prepared, cfg);
      res.metrics.push_back({stage, step++, r.metrics});
      if (r.metrics.aborted) throw Error("non-finite GRPO loss in group " + r.metrics.offending_group);
      opt.step(res.params.theta, r.grad);
    }
  }
  return res;
}

/// Produces the tasks of an online round; `relax` grows when a round was starved.
using TaskFactory = std::function<std::vector<world::Task>(int round, int relax)>;

struct OnlineConfig {
  int rounds = 4;
  int max_relax = 1;
};

struct OnlineResult {
  PolicyParams params;
  std::vector<TrajectoryRecord> collected;
  std::vector<MetricsRow> metrics;
  std::vector<std::string> warnings;
};

/// Samples G rollouts per task with the current policy.
inline std::vector<RolloutGroup> sample_groups(const PolicyParams& params, const std::vector<world::Task>& tasks,
                                               const TrainConfig& cfg, std::uint64_t seed,
                                               Provenance prov = Provenance::online_rl) {
  std::vector<world::Task> expanded;
  for (const auto& t : tasks)
    for (int k = 0; k < cfg.group_size; ++k) expanded.push_back(t);
  world::PoolOptions po;
  po.seed = seed;
  po.rollout.provenance = prov;
  auto trajs = world::pool_run(cfg.threads, expanded, policy::make_driver(std::make_shared<const PolicyParams>(params)), po);
  std::vector<RolloutGroup> groups;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    RolloutGroup g{task_key(tasks[i]), {}};
    for (int k = 0; k < cfg.group_size; ++k) g.members.push_back(std::move(trajs[i * cfg.group_size + k]));
    groups.push_back(std::move(g));
  }
  return groups;
}

/// Online sampling with offline filtering: each round samples groups with the
/// current policy, keeps the ones passing `filter`, and optimizes on them.
inline OnlineResult online_train(const PolicyParams& start, const TaskFactory& factory, const TrainConfig& cfg,
                                 const OnlineConfig& ocfg, const GroupFilter& filter = informative_group) {
  cfg.validate();
  OnlineResult res{start, {}, {}, {}};
  for (int round = 0; round < ocfg.rounds; ++round) {
    std::vector<RolloutGroup> kept;
    for (int relax = 0; relax <= ocfg.max_relax; ++relax) {
      const auto tasks = factory(round, relax);
      auto groups = sample_groups(res.params, tasks, cfg, derive_seed(cfg.seed, static_cast<std::uint64_t>(round * 16 + relax)));
      for (auto& g : groups) {
        for (const auto& m : g.members) res.collected.push_back(m);
        if (filter(g)) kept.push_back(std::move(g));
      }
      if (!kept.empty()) break;
      res.warnings.push_back("round " + std::to_string(round) + ": every group filtered out (relax " +
                             std::to_string(relax) + ")");
    }
    if (kept.empty()) continue;
    auto r = offline_train(res.params, kept, cfg, "online");
    res.params = std::move(r.params);
    for (auto& m : r.metrics) {
      m.step += static_cast<int>(res.metrics.size());
      res.metrics.push_back(m);
    }
  }
  return res;
}

}  // namespace mano::grpo
