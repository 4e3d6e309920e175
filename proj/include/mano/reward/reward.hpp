#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "mano/dsl/action.hpp"
#include "mano/util/result.hpp"
#include "mano/util/strings.hpp"
#include "mano/world/world.hpp"

namespace mano::reward {

using dsl::Action;
using world::GtStep;

/// Convex weights with gamma > beta > alpha; invalid combinations cannot be constructed.
class RewardWeights {
 public:
  RewardWeights() = default;

  static RewardWeights make(double alpha, double beta, double gamma) {
    auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
    if (!in_unit(alpha) || !in_unit(beta) || !in_unit(gamma)) throw Error("reward weights must lie in (0,1)");
    if (std::abs(alpha + beta + gamma - 1.0) > 1e-12) throw Error("reward weights must sum to 1");
    if (!(gamma > beta && beta > alpha)) throw Error("reward weights must satisfy gamma > beta > alpha");
    RewardWeights w;
    w.alpha_ = alpha;
    w.beta_ = beta;
    w.gamma_ = gamma;
    return w;
  }

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double gamma() const { return gamma_; }

 private:
  double alpha_ = 0.1;
  double beta_ = 0.3;
  double gamma_ = 0.6;
};

struct StepReward {
  int r_format = 0;
  int r_op_type = 0;
  int r_answer = 0;
  double total = 0.0;
};

/// 1 iff the utterance parses under the template grammar.
inline int format_reward(std::string_view raw) { return dsl::parse_utterance(raw).has_value() ? 1 : 0; }

inline int op_type_reward(const Action& action, const GtStep& gt) { return action.kind == gt.type ? 1 : 0; }

enum class AnswerDiagnostic { none, missing_target, incompatible_target };

struct AnswerResult {
  int value = 0;
  AnswerDiagnostic diagnostic = AnswerDiagnostic::none;
};

/// Distance threshold scaled from 5 px at 1280x720 by the viewport diagonal.
inline double default_tau(int viewport_width, int viewport_height) {
  const double ref = std::hypot(1280.0, 720.0);
  return 5.0 * std::hypot(static_cast<double>(viewport_width), static_cast<double>(viewport_height)) / ref;
}

inline AnswerResult answer_reward(const Action& action, const GtStep& gt) {
  if (std::holds_alternative<std::monostate>(gt.target)) return {0, AnswerDiagnostic::missing_target};
  if (auto* box = std::get_if<world::Rect>(&gt.target)) {
    auto p = action.primary_point();
    if (!p) return {0, AnswerDiagnostic::incompatible_target};
    return {box->contains(*p) ? 1 : 0, AnswerDiagnostic::none};
  }
  if (auto* pt = std::get_if<world::PointTarget>(&gt.target)) {
    auto p = action.primary_point();
    if (!p) return {0, AnswerDiagnostic::incompatible_target};
    const double d = std::hypot(static_cast<double>(p->x - pt->at.x), static_cast<double>(p->y - pt->at.y));
    return {d <= pt->tau ? 1 : 0, AnswerDiagnostic::none};
  }
  const auto& expected = std::get<std::string>(gt.target);
  auto text = action.text();
  if (!text) return {0, AnswerDiagnostic::incompatible_target};
  return {normalize_space(*text) == normalize_space(expected) ? 1 : 0, AnswerDiagnostic::none};
}

inline StepReward combine(int f, int o, int a, const RewardWeights& w) {
  return {f, o, a, w.alpha() * f + w.beta() * o + w.gamma() * a};
}

/// Weighted step reward. A ground-truth step without a target (wait, call_user)
/// is fully answered by choosing the right action type.
inline StepReward total_reward(std::string_view raw, const Action& action, const GtStep& gt,
                               const RewardWeights& w = {}) {
  const int f = format_reward(raw);
  const int o = op_type_reward(action, gt);
  const int a = std::holds_alternative<std::monostate>(gt.target) ? o : answer_reward(action, gt).value;
  return combine(f, o, a, w);
}

/// Steps without ground truth, or whose utterance did not parse, score only what can be scored.
inline StepReward total_reward(std::string_view raw, const std::optional<Action>& action,
                               const std::optional<GtStep>& gt, const RewardWeights& w = {}) {
  if (!gt) return {};
  if (!action) return combine(format_reward(raw), 0, 0, w);
  return total_reward(raw, *action, *gt, w);
}

/// Undiscounted sum of step totals.
inline double episode_return(std::span<const StepReward> rewards) {
  double sum = 0.0;
  for (const auto& r : rewards) sum += r.total;
  return sum;
}

}  // namespace mano::reward
