#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "nkoop/checkpoint.hpp"
#include "nkoop/experiments.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that collides with Eigen internals.
#include <httplib.h>

namespace nkoop {

struct ServiceConfig {
    MpcConfig mpc;
    int settle_steps = 0;
    double real_time_factor = 10.0;  // <= 0 disables pacing
    int hull_resolution = 50;
};

/// Events of one control run, shared between the worker and event streams.
struct RunRecord {
    std::mutex mu;
    std::condition_variable cv;
    std::vector<std::string> lines;  // JSONL, summary last
    bool finished = false;

    void push(std::string line, bool last = false) {
        {
            std::lock_guard lock(mu);
            lines.push_back(std::move(line));
            finished = finished || last;
        }
        cv.notify_all();
    }
};

class Session {
public:
    enum class Status { idle, running, done };

    Session(std::string id, std::string model_name, AnyModel model, PlantConfig cfg, int hull_resolution)
        : id_(std::move(id)),
          model_name_(std::move(model_name)),
          model_(std::move(model)),
          plant_(cfg),
          grid_(workspace_grid(cfg, hull_resolution)) {
        true_pose_ = plant_.true_pose();
    }

    ~Session() { stop(); }

    const std::string& id() const { return id_; }
    const WorkspaceGrid& workspace() const { return grid_; }
    int state_dim() const { return model_.state_dim(); }

    static std::string to_string(Status s) {
        switch (s) {
            case Status::idle: return "idle";
            case Status::running: return "running";
            case Status::done: return "done";
        }
        return "idle";
    }

    nlohmann::json state() const {
        std::lock_guard lock(mu_);
        nlohmann::json j = {{"id", id_},
                            {"model", model_name_},
                            {"status", to_string(status_)},
                            {"true_pose", {true_pose_.x, true_pose_.y, true_pose_.theta}}};
        j["believed_pose"] = believed_.size() ? ckpt::from_vec(believed_) : nlohmann::json(nullptr);
        return j;
    }

    bool running() const {
        std::lock_guard lock(mu_);
        return status_ == Status::running;
    }

    /// False if a run is already active.
    bool reset() {
        std::lock_guard lock(mu_);
        if (status_ == Status::running) return false;
        join();
        plant_.reset();
        true_pose_ = plant_.true_pose();
        believed_.resize(0);
        status_ = Status::idle;
        return true;
    }

    /// Starts an open-loop run in the session's worker; false if one is active.
    bool start(const RobotState& target, const ServiceConfig& cfg) {
        std::lock_guard lock(mu_);
        if (status_ == Status::running) return false;
        join();
        status_ = Status::running;
        cancel_ = false;
        run_ = std::make_shared<RunRecord>();
        worker_ = std::thread([this, target, cfg, run = run_] { execute(target, cfg, run); });
        return true;
    }

    std::shared_ptr<RunRecord> run() const {
        std::lock_guard lock(mu_);
        return run_;
    }

    void stop() {
        cancel_ = true;
        std::thread t;
        {
            std::lock_guard lock(mu_);
            t = std::move(worker_);
        }
        if (t.joinable()) t.join();
    }

private:
    struct Cancelled : std::runtime_error {
        Cancelled() : std::runtime_error("run cancelled") {}
    };

    void join() {
        if (worker_.joinable()) worker_.join();
    }

    // Runs on the worker thread; the plant is touched only here while running.
    void execute(const RobotState& target, const ServiceConfig& cfg, const std::shared_ptr<RunRecord>& run) {
        const double pause = cfg.real_time_factor > 0.0 ? plant_.sample_period() / cfg.real_time_factor : 0.0;
        auto observer = [&](const ControlEvent& e) {
            if (cancel_) throw Cancelled();
            {
                std::lock_guard lock(mu_);
                believed_ = e.x_believed;
                true_pose_ = plant_.true_pose();
            }
            run->push(to_json(e).dump());
            if (pause > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(pause));
        };
        TrialResult r = run_position_trial(model_, plant_, target, model_.state_dim(), cfg.mpc, cfg.settle_steps,
                                           observer);
        if (model_.state_dim() < 3) r.theta_err = 0.0;
        nlohmann::json summary = {{"type", "summary"},
                                  {"d_err", r.d_err},
                                  {"theta_err", r.theta_err},
                                  {"steps", r.steps},
                                  {"converged", r.converged},
                                  {"failed", r.failed},
                                  {"target", {target.x, target.y, target.theta}},
                                  {"final_pose", {r.final_pose.x, r.final_pose.y, r.final_pose.theta}},
                                  {"sim_time", r.sim_time},
                                  {"saturation_rate", r.saturation_rate}};
        if (r.failed) summary["failure"] = r.failure;
        {
            std::lock_guard lock(mu_);
            true_pose_ = plant_.true_pose();
            status_ = Status::done;
        }
        run->push(summary.dump(), true);
    }

    std::string id_;
    std::string model_name_;
    AnyModel model_;
    Plant plant_;
    WorkspaceGrid grid_;
    mutable std::mutex mu_;
    Status status_ = Status::idle;
    RobotState true_pose_;
    Vec believed_;
    std::shared_ptr<RunRecord> run_;
    std::thread worker_;
    std::atomic<bool> cancel_{false};
};

/// HTTP front end over independent control sessions.
class ControlService {
public:
    explicit ControlService(ServiceConfig cfg = {}) : cfg_(std::move(cfg)) { routes(); }

    ~ControlService() { stop(); }

    void add_model(const std::string& name, AnyModel model) {
        std::lock_guard lock(mu_);
        models_[name] = std::move(model);
    }

    /// Registers every `*.json` checkpoint in `dir` under its file stem.
    void load_models(const std::filesystem::path& dir) {
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.path().extension() != ".json") continue;
            try {
                add_model(entry.path().stem().string(), load_model(entry.path()));
            } catch (const CheckpointError&) {
                // not a model checkpoint (e.g. a report); skip
            }
        }
    }

    std::vector<std::string> model_names() const {
        std::lock_guard lock(mu_);
        std::vector<std::string> out;
        for (const auto& [name, m] : models_) out.push_back(name);
        return out;
    }

    bool listen(const std::string& host, int port) { return server_.listen(host, port); }

    int bind_any(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
    bool listen_after_bind() { return server_.listen_after_bind(); }
    void wait_until_ready() const { server_.wait_until_ready(); }

    void stop() {
        server_.stop();
        std::map<std::string, std::shared_ptr<Session>> sessions;
        {
            std::lock_guard lock(mu_);
            sessions.swap(sessions_);
        }
        for (auto& [id, s] : sessions) s->stop();
    }

private:
    using json = nlohmann::json;

    static void reply(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void error(httplib::Response& res, int status, const std::string& msg) {
        reply(res, status, {{"error", msg}});
    }

    std::shared_ptr<Session> find(const std::string& id) const {
        std::lock_guard lock(mu_);
        const auto it = sessions_.find(id);
        return it == sessions_.end() ? nullptr : it->second;
    }

    static json workspace_json(const WorkspaceGrid& g) {
        json hull = json::array();
        for (const Eigen::Vector2d& p : g.hull()) hull.push_back({p.x(), p.y()});
        const WorkspaceBounds& b = g.bounds;
        return {{"x_min", b.x_min}, {"x_max", b.x_max},        {"y_min", b.y_min},
                {"y_max", b.y_max}, {"range_x", b.range_x()}, {"range_y", b.range_y()},
                {"diagonal", b.diagonal()}, {"hull", hull}};
    }

    void create(const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body.empty() ? "{}" : req.body);
        } catch (const json::exception& e) {
            return error(res, 400, std::string("invalid JSON: ") + e.what());
        }
        const std::string name = body.value("model", "");
        AnyModel model;
        {
            std::lock_guard lock(mu_);
            const auto it = models_.find(name);
            if (it == models_.end()) return error(res, 422, "unknown model '" + name + "'");
            model = it->second;
        }
        PlantConfig pc;
        try {
            pc = plant_config_from_json(body.value("plant_config", json::object()));
        } catch (const std::exception& e) {
            return error(res, 422, std::string("invalid plant_config: ") + e.what());
        }
        std::string id;
        std::shared_ptr<Session> s;
        {
            std::lock_guard lock(mu_);
            id = "s" + std::to_string(++next_id_);
        }
        s = std::make_shared<Session>(id, name, std::move(model), pc, cfg_.hull_resolution);
        {
            std::lock_guard lock(mu_);
            sessions_[id] = s;
        }
        reply(res, 201,
              {{"id", id},
               {"model", name},
               {"state_dim", s->state_dim()},
               {"workspace", workspace_json(s->workspace())},
               {"plant_config", plant_config_to_json(pc)}});
    }

    void target(const std::string& id, const httplib::Request& req, httplib::Response& res) {
        const auto s = find(id);
        if (!s) return error(res, 404, "unknown session '" + id + "'");
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception& e) {
            return error(res, 400, std::string("invalid JSON: ") + e.what());
        }
        if (!body.contains("x") || !body.contains("y") || !body["x"].is_number() || !body["y"].is_number()) {
            return error(res, 400, "target needs numeric x and y");
        }
        RobotState t{body["x"].get<double>(), body["y"].get<double>(), 0.0};
        if (body.contains("theta") && !body["theta"].is_null()) {
            if (!body["theta"].is_number()) return error(res, 400, "theta must be numeric");
            t.theta = body["theta"].get<double>();
        } else if (s->state_dim() == 3) {
            return error(res, 422, "pose model requires a theta target");
        }
        if (!t.valid()) return error(res, 422, "target is not a valid pose");
        if (s->running()) return error(res, 409, "a run is already active");
        if (!s->workspace().contains({t.x, t.y})) return error(res, 422, "target outside the workspace hull");
        if (!s->start(t, cfg_)) return error(res, 409, "a run is already active");
        reply(res, 202, {{"id", id}, {"status", "running"}});
    }

    void events(const std::string& id, httplib::Response& res) {
        const auto s = find(id);
        if (!s) return error(res, 404, "unknown session '" + id + "'");
        const auto run = s->run();
        if (!run) return error(res, 409, "no run has been started");
        res.status = 200;
        auto next = std::make_shared<std::size_t>(0);
        res.set_chunked_content_provider("application/x-ndjson", [run, next](std::size_t, httplib::DataSink& sink) {
            std::unique_lock lock(run->mu);
            run->cv.wait_for(lock, std::chrono::milliseconds(200),
                             [&] { return run->lines.size() > *next || run->finished; });
            while (*next < run->lines.size()) {
                const std::string line = run->lines[(*next)++] + "\n";
                if (!sink.write(line.data(), line.size())) return false;
            }
            if (run->finished && *next == run->lines.size()) sink.done();
            return true;
        });
    }

    void routes() {
        server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) { create(req, res); });
        server_.Get(R"(/sessions/([^/]+)/state)", [this](const httplib::Request& req, httplib::Response& res) {
            const auto s = find(req.matches[1]);
            if (!s) return error(res, 404, "unknown session");
            reply(res, 200, s->state());
        });
        server_.Post(R"(/sessions/([^/]+)/target)", [this](const httplib::Request& req, httplib::Response& res) {
            target(req.matches[1], req, res);
        });
        server_.Get(R"(/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
            events(req.matches[1], res);
        });
        server_.Post(R"(/sessions/([^/]+)/reset)", [this](const httplib::Request& req, httplib::Response& res) {
            const auto s = find(req.matches[1]);
            if (!s) return error(res, 404, "unknown session");
            if (!s->reset()) return error(res, 409, "a run is already active");
            reply(res, 200, s->state());
        });
        server_.Delete(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            std::shared_ptr<Session> s;
            {
                std::lock_guard lock(mu_);
                const auto it = sessions_.find(req.matches[1]);
                if (it == sessions_.end()) return error(res, 404, "unknown session");
                s = it->second;
                sessions_.erase(it);
            }
            s->stop();
            reply(res, 200, {{"deleted", s->id()}});
        });
        server_.Get("/models", [this](const httplib::Request&, httplib::Response& res) {
            reply(res, 200, {{"models", model_names()}});
        });
    }

    ServiceConfig cfg_;
    httplib::Server server_;
    mutable std::mutex mu_;
    std::map<std::string, AnyModel> models_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    long long next_id_ = 0;
};

}  // namespace nkoop
