#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mano/reward/reward.hpp"
#include "mano/verify/verifier.hpp"
#include "mano/world/io.hpp"

namespace mano {

enum class TrajOutcome { all_correct, success_with_errors, failed };
enum class Provenance { sft_seed, explorer, online_rl, corrected };

inline constexpr std::array<std::string_view, 3> kOutcomeNames = {"all-correct", "success-with-errors", "failed"};
inline constexpr std::array<std::string_view, 4> kProvenanceNames = {"sft-seed", "explorer", "online-rl",
                                                                     "corrected"};

inline std::string_view to_string(TrajOutcome o) { return kOutcomeNames[static_cast<int>(o)]; }
inline std::string_view to_string(Provenance p) { return kProvenanceNames[static_cast<int>(p)]; }

struct StepRecord {
  world::Observation pre;
  std::string utterance;
  std::optional<dsl::Action> action;
  std::string summary;
  reward::StepReward reward;
  verifier::Verdict verdict;
  bool has_gt = false;
  std::uint64_t fingerprint = 0;  // pre-state
  int distance = -1;              // planner steps to goal from the pre-state, -1 when unknown
  // Replay data for policy-gradient training; empty when the driver is not a toy policy.
  std::vector<double> features;
  std::vector<int> choice;
};

struct TrajectoryRecord {
  std::string id;
  world::Task task;
  std::vector<StepRecord> steps;
  world::Observation final_obs;
  std::uint64_t final_fingerprint = 0;
  int final_distance = -1;
  bool goal_reached = false;
  bool awaiting_user = false;  // episode ended while control was with the user
  bool fault = false;          // the driver raised; the episode was cut short
  std::string error;
  Provenance provenance = Provenance::online_rl;
  std::uint64_t seed = 0;

  TrajOutcome outcome() const {
    if (fault || !goal_reached) return TrajOutcome::failed;
    for (const auto& s : steps)
      if (!s.verdict.correct()) return TrajOutcome::success_with_errors;
    return TrajOutcome::all_correct;
  }

  double total_return() const {
    double r = 0.0;
    for (const auto& s : steps) r += s.reward.total;
    return r;
  }

  /// Observation after step i.
  const world::Observation& post(std::size_t i) const { return i + 1 < steps.size() ? steps[i + 1].pre : final_obs; }
};

// ---------------------------------------------------------------------------
// JSON

inline constexpr int kTrajectorySchemaVersion = 1;

namespace reward {
inline void to_json(nlohmann::json& j, const StepReward& r) {
  j = {{"format", r.r_format}, {"op_type", r.r_op_type}, {"answer", r.r_answer}, {"total", r.total}};
}
inline void from_json(const nlohmann::json& j, StepReward& r) {
  r.r_format = j.at("format").get<int>();
  r.r_op_type = j.at("op_type").get<int>();
  r.r_answer = j.at("answer").get<int>();
  r.total = j.at("total").get<double>();
}
}  // namespace reward

namespace verifier {
inline void to_json(nlohmann::json& j, const Verdict& v) {
  j = {{"outcome", v.correct() ? "correct" : "incorrect"},
       {"diagnostic", std::string(to_string(v.diagnostic))},
       {"mark", std::string(v.mark())}};
}
inline void from_json(const nlohmann::json& j, Verdict& v) {
  v.outcome = j.at("outcome").get<std::string>() == "correct" ? Outcome::correct : Outcome::incorrect;
  const auto d = j.at("diagnostic").get<std::string>();
  v.diagnostic = d == "none" ? Diagnostic::none
                 : d == "execution-error" ? Diagnostic::execution_error
                                          : Diagnostic::description_error;
  if (v.correct() != (v.diagnostic == Diagnostic::none)) throw Error("verdict outcome and diagnostic disagree");
}
}  // namespace verifier

inline void to_json(nlohmann::json& j, const StepRecord& s) {
  j = {{"pre", s.pre},
       {"utterance", s.utterance},
       {"summary", s.summary},
       {"reward", s.reward},
       {"verdict", s.verdict},
       {"has_gt", s.has_gt},
       {"fingerprint", s.fingerprint},
       {"distance", s.distance}};
  j["action"] = s.action ? nlohmann::json(*s.action) : nlohmann::json(nullptr);
  if (!s.features.empty()) j["features"] = s.features;
  if (!s.choice.empty()) j["choice"] = s.choice;
}

inline void from_json(const nlohmann::json& j, StepRecord& s) {
  s = StepRecord{};
  s.pre = j.at("pre").get<world::Observation>();
  s.utterance = j.at("utterance").get<std::string>();
  s.summary = j.value("summary", "");
  s.reward = j.at("reward").get<reward::StepReward>();
  s.verdict = j.at("verdict").get<verifier::Verdict>();
  s.has_gt = j.value("has_gt", false);
  s.fingerprint = j.value("fingerprint", std::uint64_t{0});
  s.distance = j.value("distance", -1);
  if (j.contains("action") && !j.at("action").is_null()) s.action = j.at("action").get<dsl::Action>();
  s.features = j.value("features", std::vector<double>{});
  s.choice = j.value("choice", std::vector<int>{});
}

inline Provenance provenance_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kProvenanceNames.size(); ++i)
    if (kProvenanceNames[i] == s) return static_cast<Provenance>(i);
  throw Error("unknown provenance: " + std::string(s));
}

inline void to_json(nlohmann::json& j, const TrajectoryRecord& t) {
  j = {{"schema", kTrajectorySchemaVersion},
       {"id", t.id},
       {"task", t.task},
       {"steps", t.steps},
       {"final_obs", t.final_obs},
       {"final_fingerprint", t.final_fingerprint},
       {"final_distance", t.final_distance},
       {"goal_reached", t.goal_reached},
       {"awaiting_user", t.awaiting_user},
       {"fault", t.fault},
       {"error", t.error},
       {"outcome", std::string(to_string(t.outcome()))},
       {"provenance", std::string(to_string(t.provenance))},
       {"seed", t.seed},
       {"return", t.total_return()}};
}

inline void from_json(const nlohmann::json& j, TrajectoryRecord& t) {
  const int schema = j.value("schema", 0);
  if (schema != kTrajectorySchemaVersion) throw Error("unsupported trajectory schema " + std::to_string(schema));
  t = TrajectoryRecord{};
  t.id = j.at("id").get<std::string>();
  t.task = j.at("task").get<world::Task>();
  t.steps = j.at("steps").get<std::vector<StepRecord>>();
  t.final_obs = j.at("final_obs").get<world::Observation>();
  t.final_fingerprint = j.value("final_fingerprint", std::uint64_t{0});
  t.final_distance = j.value("final_distance", -1);
  t.goal_reached = j.at("goal_reached").get<bool>();
  t.awaiting_user = j.value("awaiting_user", false);
  t.fault = j.value("fault", false);
  t.error = j.value("error", "");
  t.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  t.seed = j.value("seed", std::uint64_t{0});
}

/// Append-only JSON-lines file of trajectory records.
class TrajectoryStore {
 public:
  explicit TrajectoryStore(std::filesystem::path path) : path_(std::move(path)) {}

  const std::filesystem::path& path() const { return path_; }

  void append(const TrajectoryRecord& r) {
    std::lock_guard lock(mu_);
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error("cannot open trajectory store " + path_.string());
    out << nlohmann::json(r).dump() << '\n';
  }

  void append(const std::vector<TrajectoryRecord>& rs) {
    for (const auto& r : rs) append(r);
  }

  std::vector<TrajectoryRecord> load() const {
    std::lock_guard lock(mu_);
    std::vector<TrajectoryRecord> out;
    std::ifstream in(path_);
    if (!in) return out;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (trim(line).empty()) continue;
      try {
        out.push_back(nlohmann::json::parse(line).get<TrajectoryRecord>());
      } catch (const std::exception& e) {
        throw Error(path_.string() + ":" + std::to_string(n) + ": " + e.what());
      }
    }
    return out;
  }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
};

}  // namespace mano
