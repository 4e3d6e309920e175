#pragma once

#include <httplib.h>

#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <string>

#include "mano/datacycle/datacycle.hpp"

namespace mano::datacycle {

/// JSON review API over a DataState. Reads share the lock; decisions and leases are
/// exclusive and, with a state directory, persisted before the response is sent.
class ReviewApi {
 public:
  explicit ReviewApi(DataState& state, std::optional<std::filesystem::path> dir = std::nullopt)
      : state_(state), dir_(std::move(dir)) {
    install();
  }

  httplib::Server& server() { return srv_; }

  /// Binds to an ephemeral port on host; returns it.
  int bind_any(const std::string& host = "127.0.0.1") { return srv_.bind_to_any_port(host); }
  bool bind(const std::string& host, int port) { return srv_.bind_to_port(host, port); }
  bool listen_after_bind() { return srv_.listen_after_bind(); }
  void stop() { srv_.stop(); }
  void wait_until_ready() { srv_.wait_until_ready(); }

  std::shared_mutex& mutex() { return mu_; }

 private:
  static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void fail(httplib::Response& res, int status, const std::string& msg) { reply(res, status, {{"error", msg}}); }

  void persist() {
    if (dir_) state_.save(*dir_);
  }

  void install() {
    srv_.Get("/queue", [this](const httplib::Request&, httplib::Response& res) {
      std::shared_lock lock(mu_);
      nlohmann::json items = nlohmann::json::array();
      for (const auto* it : state_.queue.pending()) {
        auto j = item_json(*it);
        if (!j["lease"].is_null() && !state_.queue.lease_active(*it)) j["lease"] = nullptr;
        if (const auto* t = state_.trajectory(it->trajectory_id)) j["instruction"] = t->task.instruction;
        items.push_back(std::move(j));
      }
      reply(res, 200, {{"items", items}, {"count", items.size()}});
    });

    srv_.Get(R"(/trajectory/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::shared_lock lock(mu_);
      const std::string id = req.matches[1];
      const auto* t = state_.trajectory(id);
      if (!t) return fail(res, 404, "unknown trajectory " + id);
      reply(res, 200, trajectory_view(*t, state_.queue.find(id)));
    });

    srv_.Post(R"(/trajectory/([^/]+)/lease)", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        const auto body = nlohmann::json::parse(req.body);
        std::unique_lock lock(mu_);
        const auto lease = state_.queue.acquire(req.matches[1], body.at("reviewer").get<std::string>());
        persist();
        reply(res, 200, {{"reviewer", lease.reviewer}, {"token", lease.token}, {"expires_at", lease.expires_at}});
      });
    });

    srv_.Post(R"(/trajectory/([^/]+)/release)", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        const auto body = nlohmann::json::parse(req.body);
        std::unique_lock lock(mu_);
        state_.queue.release(req.matches[1], body.at("token").get<std::string>());
        persist();
        reply(res, 200, {{"released", true}});
      });
    });

    srv_.Post(R"(/trajectory/([^/]+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        const std::string id = req.matches[1];
        const auto body = nlohmann::json::parse(req.body);
        std::map<int, StepDecision> decisions;
        for (const auto& d : body.at("decisions")) {
          const int step = d.at("step").get<int>();
          if (decisions.count(step)) throw Error("step " + std::to_string(step) + " decided twice");
          decisions[step] = {decision_from_string(d.at("decision").get<std::string>()), d.value("summary", "")};
        }
        std::unique_lock lock(mu_);
        const auto corrected =
            state_.decide(id, body.at("reviewer").get<std::string>(), body.value("token", ""), decisions);
        persist();
        nlohmann::json out = {{"status", corrected ? "corrected" : "dropped"}};
        out["corrected_id"] = corrected ? nlohmann::json(corrected->id) : nlohmann::json(nullptr);
        reply(res, 200, out);
      });
    });

    srv_.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
      std::shared_lock lock(mu_);
      int corrected = 0;
      for (const auto& t : state_.sft_pool) corrected += t.provenance == Provenance::corrected;
      reply(res, 200,
            {{"cycles", state_.reports},
             {"pools",
              {{"sft", state_.sft_pool.size()},
               {"corrected", corrected},
               {"negative", state_.negative_pool.size()},
               {"review_pending", state_.queue.pending().size()}}},
             {"audit", state_.queue.audit()}});
    });
  }

  template <typename F>
  void handle(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const ReviewQueue::NotFound& e) {
      fail(res, 404, e.what());
    } catch (const ReviewQueue::Conflict& e) {
      fail(res, 409, e.what());
    } catch (const nlohmann::json::exception& e) {
      fail(res, 400, std::string("bad request: ") + e.what());
    } catch (const Error& e) {
      fail(res, 400, e.what());
    }
  }

  DataState& state_;
  std::optional<std::filesystem::path> dir_;
  httplib::Server srv_;
  std::shared_mutex mu_;
};

}  // namespace mano::datacycle
