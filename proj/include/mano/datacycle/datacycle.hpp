#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "mano/pipeline.hpp"
#include "mano/trajectory.hpp"

namespace mano::datacycle {

// ---------------------------------------------------------------------------
// Routing

enum class Destination { sft_pool, review_queue, negative_pool };
inline constexpr std::array<std::string_view, 3> kDestinationNames = {"sft-pool", "review-queue", "negative-pool"};
inline std::string_view to_string(Destination d) { return kDestinationNames[static_cast<int>(d)]; }

inline Destination route(const TrajectoryRecord& t) {
  switch (t.outcome()) {
    case TrajOutcome::all_correct: return Destination::sft_pool;
    case TrajOutcome::success_with_errors: return Destination::review_queue;
    case TrajOutcome::failed: return Destination::negative_pool;
  }
  return Destination::negative_pool;
}

// ---------------------------------------------------------------------------
// SFT samples

inline constexpr int kObservationWindow = 2;

inline constexpr std::string_view kSystemPrompt =
    "You operate a graphical interface. Answer with three lines: 'Thought:' followed by your reasoning, "
    "'Action Desp:' followed by a one-sentence summary of the next step, and 'Action:' followed by exactly one "
    "action call.";

struct ContextItem {
  enum class Kind { system, user, observation, summary };
  Kind kind = Kind::system;
  int index = -1;     // step index for observations and summaries
  std::string text;   // prompt or summary text; empty for observations
  friend bool operator==(const ContextItem&, const ContextItem&) = default;
};

struct SftTarget {
  int thought_template = -1;  // summary template the thought is built on, -1 for free text
  std::string thought;
  std::string summary;
  std::string action;  // canonical action text
  friend bool operator==(const SftTarget&, const SftTarget&) = default;
};

struct SftSample {
  std::string trajectory_id;
  int step = 0;
  std::vector<ContextItem> context;
  SftTarget target;
};

/// "p_s p_u s_0 o_1 s_1 o_2" style rendering of a context.
inline std::string row_pattern(const std::vector<ContextItem>& ctx) {
  std::string out;
  for (const auto& c : ctx) {
    if (!out.empty()) out += ' ';
    switch (c.kind) {
      case ContextItem::Kind::system: out += "p_s"; break;
      case ContextItem::Kind::user: out += "p_u"; break;
      case ContextItem::Kind::observation: out += "o_" + std::to_string(c.index); break;
      case ContextItem::Kind::summary: out += "s_" + std::to_string(c.index); break;
    }
  }
  return out;
}

/// One sample per step: both prompts, every earlier summary, observations of the
/// last two earlier steps placed before their summaries, then the current observation.
inline std::vector<SftSample> build_sft_samples(const TrajectoryRecord& t) {
  std::vector<SftSample> out;
  const int n = static_cast<int>(t.steps.size());
  for (int i = 0; i < n; ++i) {
    SftSample s;
    s.trajectory_id = t.id;
    s.step = i;
    s.context.push_back({ContextItem::Kind::system, -1, std::string(kSystemPrompt)});
    s.context.push_back({ContextItem::Kind::user, -1, t.task.instruction});
    for (int j = 0; j < i; ++j) {
      if (j >= i - kObservationWindow) s.context.push_back({ContextItem::Kind::observation, j, ""});
      s.context.push_back({ContextItem::Kind::summary, j, t.steps[static_cast<std::size_t>(j)].summary});
    }
    s.context.push_back({ContextItem::Kind::observation, i, ""});
    const auto& st = t.steps[static_cast<std::size_t>(i)];
    const auto tid = verifier::summary_template_id(st.summary);
    s.target.thought_template = tid ? *tid : -1;
    s.target.thought = verifier::thought_for(t.task.instruction, st.summary);
    s.target.summary = st.summary;
    s.target.action = st.action ? dsl::serialize(*st.action) : "";
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Review queue

enum class Decision { accept_draft, edit, reject };
inline constexpr std::array<std::string_view, 3> kDecisionNames = {"accept-draft", "edit", "reject"};

inline Decision decision_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kDecisionNames.size(); ++i)
    if (kDecisionNames[i] == s) return static_cast<Decision>(i);
  throw Error("unknown decision '" + std::string(s) + "'");
}

struct StepDecision {
  Decision decision = Decision::accept_draft;
  std::string summary;  // edited text for Decision::edit
};

enum class ItemStatus { pending, corrected, dropped };
inline constexpr std::array<std::string_view, 3> kItemStatusNames = {"pending", "corrected", "dropped"};

struct Lease {
  std::string reviewer;
  std::string token;
  double expires_at = 0.0;
};

struct ReviewItem {
  std::string trajectory_id;
  std::vector<int> flagged;
  std::map<int, std::string> drafts;  // flagged step -> rule-drafted summary
  std::map<int, StepDecision> decisions;
  ItemStatus status = ItemStatus::pending;
  std::uint64_t sequence = 0;  // enqueue order
  std::optional<Lease> lease;
};

struct AuditEntry {
  std::string trajectory_id;
  std::string reviewer;
  std::string timestamp;  // ISO 8601, UTC
  int step = -1;
  std::string decision;
  std::string before;
  std::string after;
};

/// Wall-clock seconds; injectable so lease expiry is testable.
using Clock = std::function<double()>;

inline double system_seconds() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

inline std::string iso_time(double seconds) {
  const auto t = static_cast<std::time_t>(seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Flags every step with an incorrect verdict and drafts a summary of what the step actually did.
inline ReviewItem make_review_item(const TrajectoryRecord& t) {
  if (route(t) != Destination::review_queue) throw Error("trajectory " + t.id + " is not a success-with-errors trajectory");
  ReviewItem item;
  item.trajectory_id = t.id;
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const auto& s = t.steps[i];
    if (s.verdict.correct()) continue;
    item.flagged.push_back(static_cast<int>(i));
    item.drafts[static_cast<int>(i)] = s.action ? verifier::draft_correction(s.pre, t.post(i), *s.action) : s.summary;
  }
  return item;
}

/// Applies reviewer decisions. Any rejected step drops the trajectory; otherwise a
/// corrected copy (originals are kept) carries the accepted or edited summaries.
inline std::optional<TrajectoryRecord> ingest_correction(const ReviewItem& item, const TrajectoryRecord& original) {
  if (item.trajectory_id != original.id) throw Error("review item does not belong to " + original.id);
  for (int f : item.flagged) {
    auto it = item.decisions.find(f);
    if (it == item.decisions.end()) throw Error("step " + std::to_string(f) + " of " + original.id + " is undecided");
    if (it->second.decision == Decision::edit && trim(it->second.summary).empty())
      throw Error("step " + std::to_string(f) + " of " + original.id + " has an empty edited summary");
  }
  for (const auto& [step, d] : item.decisions)
    if (d.decision == Decision::reject) return std::nullopt;
  TrajectoryRecord t = original;
  t.id = original.id + "-corrected";
  t.provenance = Provenance::corrected;
  for (int f : item.flagged) {
    const auto& d = item.decisions.at(f);
    auto& s = t.steps[static_cast<std::size_t>(f)];
    s.summary = d.decision == Decision::edit ? normalize_space(d.summary) : item.drafts.at(f);
    if (s.action)
      s.utterance = dsl::serialize(dsl::make_utterance(verifier::thought_for(t.task.instruction, s.summary), s.summary, *s.action));
    // The reviewer's summary is taken as the correct description of the step.
    s.verdict = verifier::Verdict::ok();
  }
  return t;
}

class ReviewQueue {
 public:
  explicit ReviewQueue(Clock clock = system_seconds, double lease_seconds = 600.0)
      : clock_(std::move(clock)), lease_seconds_(lease_seconds) {}

  void enqueue(const TrajectoryRecord& t) {
    auto item = make_review_item(t);
    if (items_.count(t.id)) throw Error("trajectory " + t.id + " is already queued");
    item.sequence = next_seq_++;
    items_.emplace(t.id, std::move(item));
  }

  /// Pending items, oldest first.
  std::vector<const ReviewItem*> pending() const {
    std::vector<const ReviewItem*> out;
    for (const auto& [id, it] : items_)
      if (it.status == ItemStatus::pending) out.push_back(&it);
    std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->sequence < b->sequence; });
    return out;
  }

  const ReviewItem* find(const std::string& id) const {
    auto it = items_.find(id);
    return it == items_.end() ? nullptr : &it->second;
  }

  bool lease_active(const ReviewItem& item) const { return item.lease && item.lease->expires_at > clock_(); }

  bool any_active_lease() const {
    for (const auto& [id, it] : items_)
      if (it.status == ItemStatus::pending && lease_active(it)) return true;
    return false;
  }

  /// Grants or renews the edit lease; another reviewer's unexpired lease is a conflict.
  Lease acquire(const std::string& id, const std::string& reviewer) {
    if (trim(reviewer).empty()) throw Error("reviewer name required");
    auto& item = get_pending(id);
    if (lease_active(item) && item.lease->reviewer != reviewer)
      throw Conflict("trajectory " + id + " is leased by " + item.lease->reviewer);
    const double now = clock_();
    Lease l{reviewer, item.lease && item.lease->reviewer == reviewer && lease_active(item) ? item.lease->token
                                                                                         : make_token(id, now),
            now + lease_seconds_};
    item.lease = l;
    return l;
  }

  void release(const std::string& id, const std::string& token) {
    auto& item = get_pending(id);
    if (item.lease && item.lease->token == token) item.lease.reset();
  }

  /// Records decisions and resolves the item. Needs the reviewer's lease when one is active.
  std::optional<TrajectoryRecord> decide(const std::string& id, const std::string& reviewer, const std::string& token,
                                         const std::map<int, StepDecision>& decisions, const TrajectoryRecord& original) {
    auto& item = get_pending(id);
    if (lease_active(item) && (item.lease->reviewer != reviewer || item.lease->token != token))
      throw Conflict("trajectory " + id + " is leased by " + item.lease->reviewer);
    for (const auto& [step, d] : decisions)
      if (std::find(item.flagged.begin(), item.flagged.end(), step) == item.flagged.end())
        throw Error("step " + std::to_string(step) + " of " + id + " is not flagged");
    ReviewItem trial = item;
    trial.decisions = decisions;
    auto corrected = ingest_correction(trial, original);  // throws on undecided or empty edits
    const auto stamp = iso_time(clock_());
    for (const auto& [step, d] : decisions) {
      const auto& before = original.steps[static_cast<std::size_t>(step)].summary;
      std::string after = d.decision == Decision::edit ? normalize_space(d.summary)
                          : d.decision == Decision::accept_draft ? item.drafts.at(step)
                                                                 : before;
      audit_.push_back({id, reviewer, stamp, step, std::string(kDecisionNames[static_cast<int>(d.decision)]), before, after});
    }
    item.decisions = decisions;
    item.status = corrected ? ItemStatus::corrected : ItemStatus::dropped;
    item.lease.reset();
    return corrected;
  }

  const std::vector<AuditEntry>& audit() const { return audit_; }
  const std::map<std::string, ReviewItem>& items() const { return items_; }

  struct Conflict : Error {
    using Error::Error;
  };

  nlohmann::json to_json() const;
  void load_json(const nlohmann::json& j);

 private:
  ReviewItem& get_pending(const std::string& id) {
    auto it = items_.find(id);
    if (it == items_.end()) throw NotFound("no review item for " + id);
    if (it->second.status != ItemStatus::pending) throw Conflict("review item " + id + " is already resolved");
    return it->second;
  }

  std::string make_token(const std::string& id, double now) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(derive_seed(std::hash<std::string>{}(id), ++token_counter_) ^
                                                  static_cast<std::uint64_t>(now * 1000.0)));
    return buf;
  }

 public:
  struct NotFound : Error {
    using Error::Error;
  };

 private:
  Clock clock_;
  double lease_seconds_;
  std::map<std::string, ReviewItem> items_;
  std::vector<AuditEntry> audit_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t token_counter_ = 0;
};

inline void to_json(nlohmann::json& j, const AuditEntry& a) {
  j = {{"trajectory_id", a.trajectory_id}, {"reviewer", a.reviewer}, {"timestamp", a.timestamp}, {"step", a.step},
       {"decision", a.decision},           {"before", a.before},     {"after", a.after}};
}

inline void from_json(const nlohmann::json& j, AuditEntry& a) {
  a = {j.at("trajectory_id"), j.at("reviewer"), j.at("timestamp"), j.at("step"), j.at("decision"), j.at("before"), j.at("after")};
}

inline nlohmann::json item_json(const ReviewItem& it) {
  nlohmann::json drafts = nlohmann::json::object();
  for (const auto& [k, v] : it.drafts) drafts[std::to_string(k)] = v;
  nlohmann::json decisions = nlohmann::json::object();
  for (const auto& [k, d] : it.decisions)
    decisions[std::to_string(k)] = {{"decision", std::string(kDecisionNames[static_cast<int>(d.decision)])}, {"summary", d.summary}};
  nlohmann::json j = {{"trajectory_id", it.trajectory_id},
                      {"flagged", it.flagged},
                      {"drafts", drafts},
                      {"decisions", decisions},
                      {"status", std::string(kItemStatusNames[static_cast<int>(it.status)])},
                      {"sequence", it.sequence}};
  j["lease"] = it.lease ? nlohmann::json{{"reviewer", it.lease->reviewer}, {"expires_at", it.lease->expires_at}}
                        : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json ReviewQueue::to_json() const {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& [id, it] : items_) {
    auto j = item_json(it);
    if (it.lease) j["lease"]["token"] = it.lease->token;
    items.push_back(std::move(j));
  }
  return {{"items", items}, {"audit", audit_}, {"next_sequence", next_seq_}};
}

inline void ReviewQueue::load_json(const nlohmann::json& j) {
  items_.clear();
  for (const auto& ij : j.at("items")) {
    ReviewItem it;
    it.trajectory_id = ij.at("trajectory_id").get<std::string>();
    it.flagged = ij.at("flagged").get<std::vector<int>>();
    for (const auto& [k, v] : ij.at("drafts").items()) it.drafts[std::stoi(k)] = v.get<std::string>();
    for (const auto& [k, v] : ij.at("decisions").items())
      it.decisions[std::stoi(k)] = {decision_from_string(v.at("decision").get<std::string>()), v.value("summary", "")};
    const auto st = ij.at("status").get<std::string>();
    it.status = st == "pending" ? ItemStatus::pending : st == "corrected" ? ItemStatus::corrected : ItemStatus::dropped;
    it.sequence = ij.at("sequence").get<std::uint64_t>();
    if (!ij.at("lease").is_null())
      it.lease = Lease{ij["lease"].at("reviewer"), ij["lease"].value("token", ""), ij["lease"].at("expires_at")};
    items_.emplace(it.trajectory_id, std::move(it));
  }
  audit_ = j.value("audit", std::vector<AuditEntry>{});
  next_seq_ = j.value("next_sequence", std::uint64_t{items_.size()});
}

// ---------------------------------------------------------------------------
// Pools and the cycle

struct CycleConfig {
  pipeline::StageConfig stages;
  double stop_margin = 0.005;  // stop when validation gains less than 0.5 pp
  int max_cycles = 5;
};

struct CycleReport {
  int cycle = 0;
  std::vector<std::string> stages;  // executed, in order
  int sft_examples = 0;
  int offline_groups = 0;
  int online_rounds = 0;
  std::map<std::string, int> routed;
  double success_before = 0.0;
  double success_after = 0.0;
  double delta = 0.0;
  bool stop = false;
  bool aborted = false;
  std::string error;
};

inline void to_json(nlohmann::json& j, const CycleReport& r) {
  j = {{"cycle", r.cycle},
       {"stages", r.stages},
       {"sft_examples", r.sft_examples},
       {"offline_groups", r.offline_groups},
       {"online_rounds", r.online_rounds},
       {"routed", r.routed},
       {"success_before", r.success_before},
       {"success_after", r.success_after},
       {"delta", r.delta},
       {"stop", r.stop},
       {"aborted", r.aborted},
       {"error", r.error}};
}

inline void from_json(const nlohmann::json& j, CycleReport& r) {
  r.cycle = j.at("cycle");
  r.stages = j.at("stages").get<std::vector<std::string>>();
  r.sft_examples = j.value("sft_examples", 0);
  r.offline_groups = j.value("offline_groups", 0);
  r.online_rounds = j.value("online_rounds", 0);
  r.routed = j.value("routed", std::map<std::string, int>{});
  r.success_before = j.at("success_before");
  r.success_after = j.at("success_after");
  r.delta = j.at("delta");
  r.stop = j.value("stop", false);
  r.aborted = j.value("aborted", false);
  r.error = j.value("error", "");
}

/// Trajectory pools, review queue and cycle history.
struct DataState {
  std::vector<TrajectoryRecord> sft_pool;
  std::vector<TrajectoryRecord> negative_pool;
  std::map<std::string, TrajectoryRecord> review_originals;
  ReviewQueue queue;
  std::vector<CycleReport> reports;
  std::size_t sft_trained = 0;  // pool size at the last SFT stage

  explicit DataState(Clock clock = system_seconds, double lease_seconds = 600.0) : queue(std::move(clock), lease_seconds) {}

  Destination add(const TrajectoryRecord& t) {
    const auto d = route(t);
    switch (d) {
      case Destination::sft_pool: sft_pool.push_back(t); break;
      case Destination::negative_pool: negative_pool.push_back(t); break;
      case Destination::review_queue:
        if (review_originals.count(t.id)) break;  // the same rollout collected twice
        queue.enqueue(t);
        review_originals.emplace(t.id, t);
        break;
    }
    return d;
  }

  const TrajectoryRecord* trajectory(const std::string& id) const {
    if (auto it = review_originals.find(id); it != review_originals.end()) return &it->second;
    for (const auto* pool : {&sft_pool, &negative_pool})
      for (const auto& t : *pool)
        if (t.id == id) return &t;
    return nullptr;
  }

  /// Resolves a review item; a corrected trajectory joins the SFT pool.
  std::optional<TrajectoryRecord> decide(const std::string& id, const std::string& reviewer, const std::string& token,
                                         const std::map<int, StepDecision>& decisions) {
    auto it = review_originals.find(id);
    if (it == review_originals.end()) throw ReviewQueue::NotFound("no review item for " + id);
    auto corrected = queue.decide(id, reviewer, token, decisions, it->second);
    if (corrected) sft_pool.push_back(*corrected);
    return corrected;
  }

  void save(const std::filesystem::path& dir) const;
  static DataState load(const std::filesystem::path& dir, Clock clock = system_seconds, double lease_seconds = 600.0);
};

inline void DataState::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  auto write_pool = [&](const std::string& name, const auto& records) {
    const auto tmp = dir / (name + ".tmp");
    {
      std::ofstream out(tmp);
      if (!out) throw Error("cannot write " + tmp.string());
      for (const auto& r : records) out << nlohmann::json(r).dump() << '\n';
    }
    std::filesystem::rename(tmp, dir / name);
  };
  write_pool("sft.jsonl", sft_pool);
  write_pool("negative.jsonl", negative_pool);
  std::vector<TrajectoryRecord> originals;
  for (const auto& [id, t] : review_originals) originals.push_back(t);
  write_pool("review.jsonl", originals);
  nlohmann::json meta = {{"queue", queue.to_json()}, {"reports", reports}, {"sft_trained", sft_trained}};
  std::ofstream(dir / "state.json") << meta.dump(2) << '\n';
}

inline DataState DataState::load(const std::filesystem::path& dir, Clock clock, double lease_seconds) {
  DataState s(std::move(clock), lease_seconds);
  s.sft_pool = TrajectoryStore(dir / "sft.jsonl").load();
  s.negative_pool = TrajectoryStore(dir / "negative.jsonl").load();
  for (auto& t : TrajectoryStore(dir / "review.jsonl").load()) s.review_originals.emplace(t.id, std::move(t));
  std::ifstream in(dir / "state.json");
  if (in) {
    const auto meta = nlohmann::json::parse(in);
    s.queue.load_json(meta.at("queue"));
    s.reports = meta.value("reports", std::vector<CycleReport>{});
    s.sft_trained = meta.value("sft_trained", std::size_t{0});
  }
  return s;
}

/// New material for one cycle: externally collected trajectories (demonstrations,
/// explorer output) and task sets for the RL stages. Empty sets skip their stage.
struct CycleInputs {
  std::vector<TrajectoryRecord> trajectories;
  std::vector<world::Task> offline_tasks;
  grpo::TaskFactory online_tasks;  // empty: no online stage
  int online_rounds = 0;
};

struct CycleResult {
  policy::PolicyParams params;
  CycleReport report;
  std::vector<SftSample> sft_samples;  // SFT data of this cycle, organized per step
};

/// One pass: route new trajectories, SFT on the pool when it grew, offline GRPO,
/// online GRPO, route the online rollouts, then measure the validation delta.
inline CycleResult run_cycle(const policy::PolicyParams& start, const CycleConfig& cfg, DataState& state,
                             const CycleInputs& in, const std::vector<world::Task>& validation) {
  if (state.queue.any_active_lease()) throw Error("a reviewer holds an open lease; finish or release it before running a cycle");
  const auto& sc = cfg.stages;
  const auto eval_seed = derive_seed(sc.suite_seed, pipeline::kEvalStream);
  CycleResult res{start, {}, {}};
  auto& rep = res.report;
  rep.cycle = static_cast<int>(state.reports.size()) + 1;
  rep.success_before = state.reports.empty()
                           ? pipeline::success_rate(start, validation, sc.eval_episodes, eval_seed, sc.threads)
                           : state.reports.back().success_after;
  rep.success_after = rep.success_before;
  for (const auto& t : in.trajectories) ++rep.routed[std::string(to_string(state.add(t)))];

  grpo::TrainConfig gc = sc.grpo;
  gc.threads = sc.threads;
  gc.seed = derive_seed(gc.seed, static_cast<std::uint64_t>(rep.cycle));
  bool changed = false;
  try {
    if (state.sft_pool.size() > state.sft_trained) {
      const auto examples = policy::sft_examples(start.config(), state.sft_pool);
      rep.sft_examples = static_cast<int>(examples.size());
      for (const auto& t : state.sft_pool)
        for (auto& smp : build_sft_samples(t)) res.sft_samples.push_back(std::move(smp));
      if (!examples.empty()) {
        res.params = pipeline::sft_train(res.params, examples, sc.sft_steps, sc.sft_lr);
        changed = true;
      }
      state.sft_trained = state.sft_pool.size();
      rep.stages.push_back("sft");
    }
    if (!in.offline_tasks.empty()) {
      const auto groups = pipeline::offline_dataset(res.params, in.offline_tasks, gc, derive_seed(gc.seed, 1));
      rep.offline_groups = static_cast<int>(groups.size());
      res.params = grpo::offline_train(res.params, groups, gc).params;
      changed = true;
      rep.stages.push_back("offline");
    }
    if (in.online_tasks && in.online_rounds > 0) {
      grpo::OnlineConfig oc;
      oc.rounds = in.online_rounds;
      auto online = grpo::online_train(res.params, in.online_tasks, gc, oc);
      res.params = std::move(online.params);
      rep.online_rounds = in.online_rounds;
      changed = true;
      rep.stages.push_back("online");
      for (const auto& t : online.collected) ++rep.routed[std::string(to_string(state.add(t)))];
    }
  } catch (const Error& e) {
    rep.aborted = true;
    rep.error = e.what();
  }
  if (changed) rep.success_after = pipeline::success_rate(res.params, validation, sc.eval_episodes, eval_seed, sc.threads);
  rep.delta = rep.success_after - rep.success_before;
  rep.stop = rep.aborted || rep.delta < cfg.stop_margin;
  state.reports.push_back(rep);
  return res;
}

/// Repeats cycles until the validation gain drops below the margin or max_cycles is hit.
inline CycleResult run_until_marginal(policy::PolicyParams params, const CycleConfig& cfg, DataState& state,
                                      const std::function<CycleInputs(int cycle)>& inputs,
                                      const std::vector<world::Task>& validation) {
  CycleResult last{std::move(params), {}, {}};
  for (int c = 1; c <= cfg.max_cycles; ++c) {
    last = run_cycle(last.params, cfg, state, inputs(c), validation);
    if (last.report.stop) break;
  }
  return last;
}

// ---------------------------------------------------------------------------
// JSON views for the review API

/// Element geometry of an observation, for vector rendering.
inline nlohmann::json render_screen(const world::Observation& o) {
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& e : o.elements)
    shapes.push_back({{"id", e.id},
                      {"kind", e.kind},
                      {"x", e.bbox.x},
                      {"y", e.bbox.y},
                      {"width", e.bbox.width},
                      {"height", e.bbox.height},
                      {"text", e.text},
                      {"focused", e.focused},
                      {"in_popup", e.in_popup}});
  return {{"width", o.width}, {"height", o.height}, {"page", o.page}, {"shapes", shapes}};
}

inline nlohmann::json trajectory_view(const TrajectoryRecord& t, const ReviewItem* item) {
  nlohmann::json steps = nlohmann::json::array();
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const auto& s = t.steps[i];
    const bool flagged = item && std::find(item->flagged.begin(), item->flagged.end(), static_cast<int>(i)) != item->flagged.end();
    nlohmann::json st = {{"index", i},
                         {"summary", s.summary},
                         {"utterance", s.utterance},
                         {"action", s.action ? nlohmann::json(dsl::serialize(*s.action)) : nlohmann::json(nullptr)},
                         {"mark", std::string(s.verdict.mark())},
                         {"diagnostic", std::string(verifier::to_string(s.verdict.diagnostic))},
                         {"reward", s.reward},
                         {"pre", render_screen(s.pre)},
                         {"post", render_screen(t.post(i))},
                         {"flagged", flagged}};
    if (flagged) st["draft"] = item->drafts.at(static_cast<int>(i));
    steps.push_back(std::move(st));
  }
  return {{"id", t.id},
          {"instruction", t.task.instruction},
          {"outcome", std::string(to_string(t.outcome()))},
          {"provenance", std::string(to_string(t.provenance))},
          {"goal_reached", t.goal_reached},
          {"steps", steps},
          {"review", item ? item_json(*item) : nlohmann::json(nullptr)}};
}

}  // namespace mano::datacycle
