#include <gtest/gtest.h>

#include <cmath>

#include "mano/policy/policy.hpp"
#include "mano/world/generator.hpp"

using namespace mano;
using namespace mano::policy;
using world::AgentHistory;

namespace {

FeatureVector some_features(const PolicyConfig& cfg, std::uint64_t seed) {
  world::WorldConfig wc;
  auto [s, task] = world::generate_world(seed, wc);
  return featurize(cfg, world::observe(s), {}, task.instruction);
}

PolicyParams random_params(PolicyConfig cfg, std::uint64_t seed, double scale = 0.3) {
  cfg.init_scale = scale;
  cfg.init_seed = seed;
  return PolicyParams(cfg);
}

// Oracle driver that routes the expert's action through the structured-output codec.
world::Driver encoded_expert(const PolicyConfig& cfg) {
  return [cfg](const world::AgentView& v, Rng&) {
    auto e = world::expert_step(v.state);
    const Action a = e ? e->action : Action::finish();
    auto out = encode(cfg, a, v.obs);
    if (!out) throw std::runtime_error("expert action not encodable");
    return world::AgentTurn{render(cfg, *out, v.obs, v.task.instruction), {}, out->to_vector()};
  };
}

}  // namespace

TEST(Policy, UniformLogProbs) {
  PolicyParams p;
  const auto f = some_features(p.config(), 1);
  StructuredOutput fin;
  fin.type = static_cast<int>(ActionKind::finish);
  EXPECT_NEAR(log_prob(p, f, fin), -std::log(12.0), 1e-12);
  StructuredOutput click;
  click.type = static_cast<int>(ActionKind::click);
  click.cell = 17;
  EXPECT_NEAR(log_prob(p, f, click), -std::log(12.0) - std::log(64.0), 1e-12);
}

TEST(Policy, MaskRuleIsEnforced) {
  PolicyParams p;
  const auto f = some_features(p.config(), 1);
  StructuredOutput bad;
  bad.type = static_cast<int>(ActionKind::finish);
  bad.cell = 3;
  EXPECT_THROW(log_prob(p, f, bad), Error);
  StructuredOutput missing;
  missing.type = static_cast<int>(ActionKind::click);
  EXPECT_THROW(log_prob(p, f, missing), Error);
}

TEST(Policy, CellMarginalEqualsTypeMass) {
  auto p = random_params({}, 3);
  const auto f = some_features(p.config(), 2);
  const auto z = dense_input(p, f);
  const auto type_probs = detail::softmax(head_logits(p, f, z, kType));
  for (int t : {0, 2, 7}) {
    const auto k = static_cast<ActionKind>(t);
    StructuredOutput o;
    o.type = t;
    double mass = 0;
    for (int c = 0; c < 64; ++c) {
      o.cell = c;
      if (k == ActionKind::scroll) {
        for (int d = 0; d < 4; ++d) {
          o.dir = d;
          mass += std::exp(log_prob(p, f, o));
        }
      } else {
        mass += std::exp(log_prob(p, f, o));
      }
    }
    EXPECT_NEAR(mass, type_probs[t], 1e-9);
  }
}

TEST(Policy, HeadProbabilitiesSumToOne) {
  PolicyConfig cfg;
  cfg.summary_head = true;
  auto p = random_params(cfg, 5, 1.0);
  const auto f = some_features(p.config(), 3);
  const auto z = dense_input(p, f);
  for (int h = 0; h < kNumHeads; ++h) {
    const auto probs = detail::softmax(head_logits(p, f, z, static_cast<Head>(h), 1));
    double s = 0;
    for (double v : probs) s += v;
    EXPECT_NEAR(s, 1.0, 1e-9) << kHeadNames[h];
  }
}

TEST(Policy, SamplingIsSeededAndRespectsMask) {
  auto p = random_params({}, 7);
  const auto f = some_features(p.config(), 4);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto a = sample(p, f, seed);
    EXPECT_EQ(a, sample(p, f, seed));
    EXPECT_NO_THROW(check_output(p, a));
  }
}

TEST(Policy, DegenerateLogitsAlwaysFinish) {
  PolicyParams p;
  const auto f = some_features(p.config(), 4);
  p.theta[p.offset(kType) + static_cast<int>(ActionKind::finish) * p.dense_width()] = 1e6;  // bias column
  for (std::uint64_t seed = 0; seed < 100; ++seed) EXPECT_EQ(sample(p, f, seed).type, static_cast<int>(ActionKind::finish));
}

TEST(Policy, EmpiricalFrequenciesMatchSoftmax) {
  auto p = random_params({}, 11, 0.5);
  const auto f = some_features(p.config(), 6);
  const auto probs = detail::softmax(head_logits(p, f, dense_input(p, f), kType));
  const int n = 100000;
  std::vector<int> counts(kTypes, 0);
  Rng rng(99);
  for (int i = 0; i < n; ++i) ++counts[sample(p, f, rng).type];
  for (int t = 0; t < kTypes; ++t) {
    const double sigma = std::sqrt(n * probs[t] * (1 - probs[t]));
    EXPECT_LE(std::abs(counts[t] - n * probs[t]), 3 * sigma + 1e-9) << t;
  }
}

TEST(Policy, LogProbIsCovariantUnderVocabRelabeling) {
  PolicyConfig cfg;
  auto p = random_params(cfg, 13);
  const auto f = some_features(cfg, 7);
  StructuredOutput o;
  o.type = static_cast<int>(ActionKind::type);
  o.content = 2;
  const double before = log_prob(p, f, o);

  PolicyConfig swapped = cfg;
  std::swap(swapped.vocab[2], swapped.vocab[5]);
  swapped.init_scale = 0;
  PolicyParams q(swapped);
  q.theta = p.theta;
  const int dz = p.dense_width();
  for (int i = 0; i < dz; ++i)
    std::swap(q.theta[q.offset(kContent) + 2 * dz + i], q.theta[q.offset(kContent) + 5 * dz + i]);
  auto g = f;
  std::swap(g.content[2], g.content[5]);
  o.content = 5;
  EXPECT_NEAR(log_prob(q, g, o), before, 1e-12);
}

TEST(Policy, UniformTypeOnlyLossIsLn12) {
  PolicyParams p;
  std::vector<SftExample> data;
  for (int i = 0; i < 5; ++i) {
    StructuredOutput o;
    o.type = static_cast<int>(i % 2 ? ActionKind::finish : ActionKind::wait);
    data.push_back({some_features(p.config(), i), o});
  }
  EXPECT_NEAR(sft_loss_and_grad(p, data).loss, std::log(12.0), 1e-12);
  EXPECT_THROW(sft_loss_and_grad(p, std::vector<SftExample>{}), Error);
}

TEST(Policy, FeaturizeIsDeterministicAndWindowed) {
  world::WorldConfig wc;
  wc.popup_probability = 1.0;
  auto [s, task] = world::generate_world(5, wc);
  auto rec = world::rollout(task, world::expert_driver(), 1);
  ASSERT_GE(rec.steps.size(), 2u);
  PolicyConfig w0, w2;
  w0.history_window = 0;
  const auto h = history_before(rec, 2);
  const auto& obs = rec.steps[2].pre;
  EXPECT_EQ(featurize(w2, obs, h, task.instruction), featurize(w2, obs, h, task.instruction));
  EXPECT_NE(featurize(w0, obs, h, task.instruction).dense.size(), featurize(w2, obs, h, task.instruction).dense.size());
  auto flipped = h;
  flipped.verdicts.entries[1].mark = std::string(verifier::kMarkIncorrect);
  EXPECT_NE(featurize(w2, obs, h, task.instruction), featurize(w2, obs, flipped, task.instruction));
  auto old = h;
  old.observations[0] = Observation{};
  EXPECT_EQ(featurize(PolicyConfig{.history_window = 1}, obs, h, task.instruction),
            featurize(PolicyConfig{.history_window = 1}, obs, old, task.instruction));
}

TEST(Policy, InstructionWordsHashToDistinctBuckets) {
  PolicyConfig cfg;
  std::set<std::size_t> seen;
  for (const auto& w : cfg.vocab)
    for (const auto& t : tokenize(w)) seen.insert(token_bucket(t, cfg.token_buckets));
  EXPECT_GE(seen.size(), world::search_words().size());
}

TEST(Policy, EncodedExpertSolvesEveryFamilyWithFullReward) {
  PolicyConfig cfg;
  world::WorldConfig wc;
  std::vector<world::Task> tasks;
  for (int i = 0; i < 150; ++i) tasks.push_back(world::generate_world(1000 + i, wc).second);
  auto recs = world::pool_run(4, tasks, encoded_expert(cfg));
  for (const auto& r : recs) {
    ASSERT_FALSE(r.fault) << r.error;
    EXPECT_EQ(r.outcome(), TrajOutcome::all_correct) << r.task.instruction;
    EXPECT_NEAR(r.total_return(), static_cast<double>(r.task.gt.size()), 1e-9) << r.task.instruction;
  }
}

TEST(Policy, CheckpointRoundTrip) {
  PolicyConfig cfg;
  cfg.hidden = 3;
  auto p = random_params(cfg, 17);
  auto q = from_checkpoint(nlohmann::json::parse(to_checkpoint(p).dump()));
  EXPECT_EQ(q.theta, p.theta);
  EXPECT_EQ(q.config().hash(), p.config().hash());
  auto j = to_checkpoint(p);
  j["config"]["history_window"] = 1;
  EXPECT_THROW(from_checkpoint(j), Error);
}

TEST(Policy, FrozenHeadsReceiveNoGradient) {
  PolicyConfig cfg;
  cfg.frozen[kType] = true;
  auto p = random_params(cfg, 19);
  StructuredOutput o;
  o.type = static_cast<int>(ActionKind::click);
  o.cell = 9;
  std::vector<SftExample> data{{some_features(cfg, 8), o}};
  const auto g = sft_loss_and_grad(p, data).grad;
  for (int i = 0; i < p.head_size(kType); ++i) ASSERT_EQ(g[p.offset(kType) + i], 0.0);
  double cell_norm = 0;
  for (int i = 0; i < p.head_size(kCell); ++i) cell_norm += std::abs(g[p.offset(kCell) + i]);
  EXPECT_GT(cell_norm, 0.0);
}
