#include <gtest/gtest.h>

#include "mano/reward/reward.hpp"

using namespace mano;
using namespace mano::reward;
using dsl::Action;
using dsl::ActionKind;
using world::GtStep;
using world::Rect;

namespace {

std::string utter(const Action& a) { return dsl::serialize(dsl::make_utterance("t", "s", a)); }

}  // namespace

TEST(RewardWeights, DefaultsAndValidation) {
  RewardWeights w;
  EXPECT_DOUBLE_EQ(w.alpha(), 0.1);
  EXPECT_DOUBLE_EQ(w.beta(), 0.3);
  EXPECT_DOUBLE_EQ(w.gamma(), 0.6);
  EXPECT_NO_THROW(RewardWeights::make(0.2, 0.3, 0.5));
  EXPECT_THROW(RewardWeights::make(0.3, 0.3, 0.4), Error);
  EXPECT_THROW(RewardWeights::make(0.1, 0.3, 0.5), Error);
  EXPECT_THROW(RewardWeights::make(0.0, 0.3, 0.7), Error);
  EXPECT_THROW(RewardWeights::make(0.5, 0.3, 0.2), Error);
}

TEST(Reward, BoxContainmentIsInclusive) {
  GtStep gt{ActionKind::click, Rect{10, 20, 30, 40}, 0};
  EXPECT_EQ(answer_reward(Action::click({10, 20}), gt).value, 1);
  EXPECT_EQ(answer_reward(Action::click({40, 60}), gt).value, 1);
  EXPECT_EQ(answer_reward(Action::click({41, 60}), gt).value, 0);
  EXPECT_EQ(answer_reward(Action::click({9, 30}), gt).value, 0);
}

TEST(Reward, PointTargetTolerance) {
  GtStep gt{ActionKind::click, world::PointTarget{{100, 100}, 5.0}, 0};
  EXPECT_EQ(answer_reward(Action::click({103, 104}), gt).value, 1);
  EXPECT_EQ(answer_reward(Action::click({104, 104}), gt).value, 0);
  EXPECT_NEAR(default_tau(1280, 720), 5.0, 1e-12);
  EXPECT_NEAR(default_tau(2560, 1440), 10.0, 1e-12);
}

TEST(Reward, TextTargetNormalizesWhitespace) {
  GtStep gt{ActionKind::type, std::string("hello world"), 0};
  EXPECT_EQ(answer_reward(Action::type("  hello   world "), gt).value, 1);
  EXPECT_EQ(answer_reward(Action::type("hello"), gt).value, 0);
  auto r = answer_reward(Action::click({1, 1}), gt);
  EXPECT_EQ(r.value, 0);
  EXPECT_EQ(r.diagnostic, AnswerDiagnostic::incompatible_target);
}

TEST(Reward, MissingTargetIsFlagged) {
  GtStep gt{ActionKind::wait, {}, 0};
  EXPECT_EQ(answer_reward(Action::wait(), gt).diagnostic, AnswerDiagnostic::missing_target);
  auto r = total_reward(utter(Action::wait()), Action::wait(), gt);
  EXPECT_EQ(r.r_answer, 1);
  EXPECT_NEAR(r.total, 1.0, 1e-12);
}

TEST(Reward, WrongTypeRightPlace) {
  GtStep gt{ActionKind::click, Rect{0, 0, 50, 50}, 0};
  const Action a = Action::click_at(ActionKind::left_double, {10, 10});
  auto r = total_reward(utter(a), a, gt);
  EXPECT_EQ(r.r_format, 1);
  EXPECT_EQ(r.r_op_type, 0);
  EXPECT_EQ(r.r_answer, 1);
  EXPECT_NEAR(r.total, 0.7, 1e-12);
}

TEST(Reward, UnparseableScoresZero) {
  GtStep gt{ActionKind::click, Rect{0, 0, 50, 50}, 0};
  auto r = total_reward("Action: click(", std::optional<Action>{}, std::optional<GtStep>{gt});
  EXPECT_EQ(r.r_format, 0);
  EXPECT_DOUBLE_EQ(r.total, 0.0);
  EXPECT_DOUBLE_EQ(total_reward("x", std::optional<Action>{Action::wait()}, std::nullopt).total, 0.0);
}

TEST(Reward, TotalIsBoundedAndReturnSums) {
  GtStep gt{ActionKind::click, Rect{0, 0, 50, 50}, 0};
  std::vector<StepReward> rs;
  for (int x = 0; x < 100; x += 7) {
    const Action a = Action::click({x, x});
    rs.push_back(total_reward(utter(a), a, gt));
    EXPECT_GE(rs.back().total, 0.0);
    EXPECT_LE(rs.back().total, 1.0);
  }
  double sum = 0;
  for (auto& r : rs) sum += r.total;
  EXPECT_DOUBLE_EQ(episode_return(rs), sum);
}
