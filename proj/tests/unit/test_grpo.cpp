#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mano/grpo/grpo.hpp"
#include "policy_oracles.hpp"

using namespace mano;
using namespace mano::grpo;
using mano::oracle::GradInstance;
using policy::PolicyConfig;

namespace {

double fd_sft(const GradInstance& inst, std::uint64_t seed, std::size_t cap) {
  const auto lg = policy::sft_loss_and_grad(inst.params, inst.sft);
  std::vector<policy::FeatureVector> feats;
  for (const auto& e : inst.sft) feats.push_back(e.features);
  const auto active = oracle::active_indices(inst.params, feats);
  EXPECT_TRUE(oracle::zero_outside(lg.grad, active));
  Rng rng(seed);
  PolicyParams probe = inst.params;
  auto f = [&](const std::vector<double>& th) {
    probe.theta = th;
    return policy::sft_loss_and_grad(probe, inst.sft).loss;
  };
  return oracle::check_gradient(f, inst.params.theta, lg.grad, oracle::sample_indices(active, cap, rng)).max_rel_error;
}

double fd_grpo(const GradInstance& inst, const PolicyParams& at, std::uint64_t seed, std::size_t cap) {
  TrainConfig cfg;
  std::vector<PreparedGroup> prepared;
  std::vector<policy::FeatureVector> feats;
  for (const auto& g : inst.groups) {
    prepared.push_back(prepare_group(g, inst.params, cfg));
    for (const auto& s : prepared.back().steps) feats.push_back(s.features);
  }
  const auto lg = grpo_loss_and_grad(at, prepared, cfg);
  const auto active = oracle::active_indices(at, feats);
  EXPECT_TRUE(oracle::zero_outside(lg.grad, active));
  Rng rng(seed);
  PolicyParams probe = at;
  auto f = [&](const std::vector<double>& th) {
    probe.theta = th;
    return grpo_loss_and_grad(probe, prepared, cfg).loss;
  };
  return oracle::check_gradient(f, at.theta, lg.grad, oracle::sample_indices(active, cap, rng)).max_rel_error;
}

TrajectoryRecord one_step(TrajectoryRecord t, double reward) {
  t.steps.resize(1);
  t.steps[0].reward.total = reward;
  return t;
}

}  // namespace

TEST(Grpo, GroupAdvantageExamples) {
  const std::vector<double> alt{1, 0, 1, 0, 1, 0, 1, 0};
  const auto a = group_advantages(alt, 1e-6);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(a[i], i % 2 == 0 ? 1.0 : -1.0);
  const std::vector<double> two{2, 0};
  EXPECT_EQ(group_advantages(two, 1e-6), (std::vector<double>{1.0, -1.0}));
  const std::vector<double> same{0.7, 0.7, 0.7};
  for (double v : group_advantages(same, 1e-6)) EXPECT_EQ(v, 0.0);
  const std::vector<double> one{1.0};
  EXPECT_THROW(group_advantages(one, 1e-6), Error);
}

TEST(Grpo, AdvantagesZeroMeanUnitVariance) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> r(static_cast<std::size_t>(rng.range(2, 16)));
    for (auto& v : r) v = rng.uniform() * 5.0;
    const auto a = group_advantages(r, 1e-9);
    double mean = 0, var = 0;
    for (double v : a) mean += v;
    mean /= static_cast<double>(a.size());
    for (double v : a) var += (v - mean) * (v - mean);
    var /= static_cast<double>(a.size());
    EXPECT_LT(std::abs(mean), 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-9);
  }
}

TEST(Grpo, ClippedSurrogateCases) {
  for (double a : {-2.0, -0.3, 0.0, 0.4, 3.0}) EXPECT_EQ(clipped_surrogate(1.0, a, 0.2), a);
  EXPECT_DOUBLE_EQ(clipped_surrogate(1.5, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
  EXPECT_DOUBLE_EQ(clipped_surrogate(0.5, 1.0, 0.2), 0.5);
  EXPECT_DOUBLE_EQ(clipped_surrogate(1.5, -1.0, 0.2), -1.5);
}

TEST(Grpo, ConfigValidation) {
  TrainConfig c;
  c.group_size = 1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.clip_eps = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.std_floor = 0.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Grpo, SftGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const auto inst = oracle::make_grad_instance(seed);
    ASSERT_FALSE(inst.sft.empty());
    EXPECT_LT(fd_sft(inst, seed, 150), 1e-4) << "seed " << seed;
  }
}

TEST(Grpo, GrpoGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    const auto inst = oracle::make_grad_instance(seed);
    EXPECT_LT(fd_grpo(inst, inst.params, seed, 150), 1e-4) << "seed " << seed;
    PolicyParams moved = inst.params;
    Rng rng(seed);
    for (auto& v : moved.theta) v += 0.01 * (2 * rng.uniform() - 1);
    EXPECT_LT(fd_grpo(inst, moved, seed + 1, 150), 1e-4) << "seed " << seed << " off-reference";
  }
}

TEST(Grpo, OnPolicyIdentity) {
  const auto inst = oracle::make_grad_instance(31);
  TrainConfig cfg;
  std::vector<PreparedGroup> prepared;
  for (const auto& g : inst.groups) prepared.push_back(prepare_group(g, inst.params, cfg));
  const auto r = grpo_loss_and_grad(inst.params, prepared, cfg);
  EXPECT_NEAR(r.metrics.mean_ratio, 1.0, 1e-12);
  EXPECT_EQ(r.metrics.clip_fraction, 0.0);
  // Unclipped estimator: -(1/N) sum A grad log pi.
  std::vector<double> pg(inst.params.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(r.metrics.steps);
  for (const auto& g : prepared)
    for (const auto& s : g.steps) policy::add_log_prob_grad(inst.params, s.features, s.out, -inv * s.advantage, pg);
  for (std::size_t i = 0; i < pg.size(); ++i) ASSERT_NEAR(r.grad[i], pg[i], 1e-12);
}

TEST(Grpo, EqualReturnsGiveZeroGradientAndNoUpdate) {
  auto inst = oracle::make_grad_instance(41);
  RolloutGroup g{"same", {}};
  for (int k = 0; k < 4; ++k) g.members.push_back(inst.groups[0].members[0]);
  TrainConfig cfg;
  const auto prepared = std::vector<PreparedGroup>{prepare_group(g, inst.params, cfg)};
  const auto r = grpo_loss_and_grad(inst.params, prepared, cfg);
  for (double v : r.grad) ASSERT_EQ(v, 0.0);
  const auto trained = offline_train(inst.params, {g}, cfg);
  EXPECT_EQ(trained.params.theta, inst.params.theta);
}

TEST(Grpo, PositiveAdvantageRaisesLogProb) {
  auto inst = oracle::make_grad_instance(51);
  const auto& members = inst.groups[0].members;
  std::optional<std::size_t> other;
  for (std::size_t k = 1; k < members.size() && !other; ++k)
    if (members[k].steps[0].choice != members[0].steps[0].choice) other = k;
  ASSERT_TRUE(other);
  RolloutGroup g{"pair", {one_step(members[0], 1.0), one_step(members[*other], 0.0)}};
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.learning_rate = 0.1;
  auto [next, m] = grpo_step(inst.params, inst.params, {g}, cfg);
  const auto feats = policy::replay_features(inst.cfg, g.members[0]);
  const auto out = *policy::replay_outputs(inst.cfg, g.members[0])[0];
  EXPECT_GT(policy::log_prob(next, feats[0], out), policy::log_prob(inst.params, feats[0], out));
  EXPECT_FALSE(m.aborted);
}

TEST(Grpo, EqualPositiveAdvantagesRaiseTotalLogProb) {
  auto inst = oracle::make_grad_instance(52);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.learning_rate = 0.05;
  PreparedGroup pg = prepare_group(inst.groups[0], inst.params, cfg);
  for (auto& s : pg.steps) s.advantage = 1.0;
  const std::vector<PreparedGroup> batch{pg};
  auto r = grpo_loss_and_grad(inst.params, batch, cfg);
  PolicyParams next = inst.params;
  Optimizer(cfg.optimizer, cfg.learning_rate).step(next.theta, r.grad);
  double before = 0, after = 0;
  for (const auto& s : pg.steps) {
    before += policy::log_prob(inst.params, s.features, s.out);
    after += policy::log_prob(next, s.features, s.out);
  }
  EXPECT_GT(after, before);
}

TEST(Grpo, NonFiniteLossAborts) {
  auto inst = oracle::make_grad_instance(61);
  TrainConfig cfg;
  std::vector<PreparedGroup> prepared{prepare_group(inst.groups[0], inst.params, cfg)};
  prepared[0].steps[0].advantage = std::numeric_limits<double>::quiet_NaN();
  const auto r = grpo_loss_and_grad(inst.params, prepared, cfg);
  EXPECT_TRUE(r.metrics.aborted);
  EXPECT_EQ(r.metrics.offending_group, prepared[0].task_id);
}

TEST(Grpo, FilterContract) {
  auto inst = oracle::make_grad_instance(71);
  RolloutGroup zeros{"z", {}};
  for (auto m : inst.groups[0].members) {
    for (auto& s : m.steps) s.reward.total = 0.0;
    zeros.members.push_back(m);
  }
  EXPECT_FALSE(informative_group(zeros));
  RolloutGroup full = zeros;
  for (auto& m : full.members) {
    m.task.gt.resize(1);
    m.steps.resize(1);
    m.steps[0].reward.total = 1.0;
  }
  EXPECT_FALSE(informative_group(full));
  full.members[0].steps[0].reward.total = 0.4;
  EXPECT_TRUE(informative_group(full));
}

TEST(Grpo, OnlineAcceptAllEqualsSampleThenOffline) {
  auto inst = oracle::make_grad_instance(81);
  TrainConfig cfg;
  cfg.group_size = 3;
  cfg.seed = 5;
  world::WorldConfig wc;
  std::vector<world::Task> tasks;
  for (int i = 0; i < 2; ++i) tasks.push_back(world::generate_world(900 + i, wc).second);
  TaskFactory factory = [&](int, int) { return tasks; };
  OnlineConfig oc;
  oc.rounds = 1;
  const auto online = online_train(inst.params, factory, cfg, oc, [](const RolloutGroup&) { return true; });
  const auto groups = sample_groups(inst.params, tasks, cfg, derive_seed(cfg.seed, 0));
  const auto offline = offline_train(inst.params, groups, cfg, "online");
  EXPECT_EQ(online.params.theta, offline.params.theta);
  EXPECT_EQ(online.collected.size(), tasks.size() * 3);
}

TEST(Grpo, StarvedRoundWarnsAndRelaxes) {
  auto inst = oracle::make_grad_instance(82);
  TrainConfig cfg;
  cfg.group_size = 2;
  world::WorldConfig wc;
  std::vector<int> relax_seen;
  TaskFactory factory = [&](int, int relax) {
    relax_seen.push_back(relax);
    return std::vector<world::Task>{world::generate_world(1000 + relax, wc).second};
  };
  OnlineConfig oc;
  oc.rounds = 1;
  oc.max_relax = 2;
  const auto r = online_train(inst.params, factory, cfg, oc, [](const RolloutGroup&) { return false; });
  EXPECT_EQ(relax_seen, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(r.warnings.size(), 3u);
  EXPECT_EQ(r.params.theta, inst.params.theta);
}

TEST(Grpo, SftDescentAndMetricsCsv) {
  PolicyConfig cfg;
  world::WorldConfig wc;
  std::vector<world::Task> tasks;
  for (int i = 0; i < 12; ++i) tasks.push_back(world::generate_world(300 + i, wc).second);
  auto data = policy::sft_examples(cfg, world::pool_run(1, tasks, world::expert_driver()));
  data.resize(std::min<std::size_t>(data.size(), 50));
  PolicyParams p(cfg);
  const double start = policy::sft_loss_and_grad(p, data).loss;
  Optimizer sgd(OptimizerKind::sgd, 1e-2);
  for (int i = 0; i < 200; ++i) sgd.step(p.theta, policy::sft_loss_and_grad(p, data).grad);
  EXPECT_LT(policy::sft_loss_and_grad(p, data).loss, start);

  const auto path = std::filesystem::temp_directory_path() / "mano_grpo_metrics.csv";
  write_metrics_csv({{"offline", 0, {}}}, path.string());
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "stage,step,loss,mean_ratio,clip_fraction,mean_advantage,steps,aborted");
}

TEST(Grpo, EmptyOfflineDatasetThrows) {
  PolicyParams p;
  EXPECT_THROW(offline_train(p, {}, TrainConfig{}), Error);
}
