#include <gtest/gtest.h>

#include "mano/verify/verifier.hpp"
#include "mano/world/generator.hpp"
#include "verifier_suite.hpp"

using namespace mano;
using namespace mano::verifier;
using namespace mano::world;

TEST(Verifier, ExpectedEffectParsesTemplates) {
  Observation o;
  EXPECT_EQ(expected_effect("click the 'Save' button", o).type, EffectType::pressed);
  EXPECT_EQ(expected_effect("click the 'Save' button", o).label, "Save");
  auto t = expected_effect("type 'abc' into the search box", o);
  EXPECT_EQ(t.type, EffectType::text_set);
  EXPECT_EQ(t.content, "abc");
  auto s = expected_effect("scroll the 'City' menu down", o);
  EXPECT_EQ(s.type, EffectType::menu_scrolled);
  EXPECT_EQ(s.content, "down");
  EXPECT_EQ(expected_effect("select the Submit button", o).type, EffectType::pressed);
  EXPECT_EQ(expected_effect("do something clever", o).type, EffectType::unverifiable);
}

TEST(Verifier, UnverifiableSummaryIsDescriptionError) {
  Observation o;
  auto v = verify({o, o, "", "dance around", {}});
  EXPECT_EQ(v, Verdict::fail(Diagnostic::description_error));
}

TEST(Verifier, ExpertTracesVerifyCorrect) {
  WorldConfig cfg;
  for (int seed = 0; seed < 60; ++seed) {
    auto [s, task] = generate_world(seed, cfg);
    WorldState w = s;
    History h;
    while (auto e = expert_step(w)) {
      const Observation pre = observe(w);
      const std::string summary = describe(e->action, pre);
      step(w, e->action);
      const Observation post = observe(w);
      auto v = verify({pre, post, task.instruction, summary, h});
      EXPECT_TRUE(v.correct()) << seed << ": " << summary;
      h = augment(h, summary, v);
    }
    EXPECT_TRUE(w.goal_reached);
    EXPECT_EQ(h.size(), task.gt.size());
  }
}

TEST(Verifier, AugmentAppendsOnly) {
  History h;
  h = augment(h, "a", Verdict::ok());
  auto h2 = augment(h, "b", Verdict::fail(Diagnostic::execution_error));
  ASSERT_EQ(h2.size(), 2u);
  EXPECT_EQ(h2.entries[0], h.entries[0]);
  EXPECT_EQ(h2.entries[0].mark, std::string(kMarkCorrect));
  EXPECT_EQ(h2.entries[1].mark, std::string(kMarkIncorrect));
}

TEST(Verifier, AgreesWithSimulatorLabels) {
  const auto suite = oracle::verifier_suite(100);
  ASSERT_EQ(suite.size(), 100u);
  int desc = 0, exec = 0;
  for (const auto& c : suite) {
    const auto v = verify(c.input);
    EXPECT_EQ(v.diagnostic, c.label) << c.origin << ": " << c.input.summary;
    EXPECT_EQ(v.correct(), c.label == Diagnostic::none) << c.origin;
    desc += c.label == Diagnostic::description_error;
    exec += c.label == Diagnostic::execution_error;
  }
  EXPECT_EQ(desc, 33);
  EXPECT_EQ(exec, 33);
}
