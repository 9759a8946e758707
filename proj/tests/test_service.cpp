#include <gtest/gtest.h>

#include <future>
#include <sstream>
#include <thread>

#include "nkoop/service.hpp"

using namespace nkoop;
using nlohmann::json;

namespace {

const Dataset& data() {
    static const Dataset d = collect_random_walk(PlantConfig{}, {300, 300, 200}, 6);
    return d;
}

AnyModel ssm(int n) { return fit_edmd(data(), Dictionary::identity(n), Normalizer::fit(data(), n)); }

AnyModel small_nink() {
    TrainConfig c;
    c.lifted_dim = 10;
    c.state_hidden = 24;
    c.input_hidden = 12;
    c.epochs = c.decoder_epochs = 15;
    c.seed = 2;
    return train_neural_koopman(data(), c, Variant::nink, 2);
}

class Server {
public:
    explicit Server(ServiceConfig cfg) : service_(cfg) {
        service_.add_model("ssm2", ssm(2));
        service_.add_model("ssm3", ssm(3));
        port_ = service_.bind_any();
        thread_ = std::thread([this] { service_.listen_after_bind(); });
        service_.wait_until_ready();
    }
    ~Server() {
        service_.stop();
        thread_.join();
    }
    ControlService& service() { return service_; }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(120, 0);
        return c;
    }

private:
    ControlService service_;
    int port_ = 0;
    std::thread thread_;
};

ServiceConfig fast() {
    ServiceConfig c;
    c.real_time_factor = 0.0;
    return c;
}

std::string create(httplib::Client& c, const std::string& model, const PlantConfig& pc = {}) {
    const auto res = c.Post("/sessions", json{{"model", model}, {"plant_config", plant_config_to_json(pc)}}.dump(),
                            "application/json");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 201);
    return json::parse(res->body).at("id");
}

std::vector<json> events(httplib::Client& c, const std::string& id) {
    const auto res = c.Get("/sessions/" + id + "/events");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    std::vector<json> out;
    std::istringstream is(res->body);
    for (std::string line; std::getline(is, line);) {
        if (!line.empty()) out.push_back(json::parse(line));
    }
    return out;
}

json run_target(httplib::Client& c, const std::string& id, const json& target) {
    const auto res = c.Post("/sessions/" + id + "/target", target.dump(), "application/json");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 202) << res->body;
    const auto ev = events(c, id);
    EXPECT_FALSE(ev.empty());
    return ev.back();
}

}  // namespace

TEST(Service, CreateReturnsWorkspace) {
    Server s(fast());
    auto c = s.client();
    const auto res = c.Post("/sessions", R"({"model":"ssm2"})", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 201);
    const json j = json::parse(res->body);
    EXPECT_EQ(j.at("state_dim"), 2);
    EXPECT_GE(j.at("workspace").at("hull").size(), 3u);
    EXPECT_GT(j.at("workspace").at("range_y").get<double>(), j.at("workspace").at("range_x").get<double>());
    const auto models = c.Get("/models");
    EXPECT_EQ(json::parse(models->body).at("models").size(), 2u);
}

TEST(Service, UnknownSession) {
    Server s(fast());
    auto c = s.client();
    EXPECT_EQ(c.Get("/sessions/s404/state")->status, 404);
    EXPECT_EQ(c.Post("/sessions/s404/target", R"({"x":0,"y":50})", "application/json")->status, 404);
    EXPECT_EQ(c.Get("/sessions/s404/events")->status, 404);
    EXPECT_EQ(c.Post("/sessions/s404/reset", "", "application/json")->status, 404);
    EXPECT_EQ(c.Delete("/sessions/s404")->status, 404);
}

TEST(Service, RejectsBadTargets) {
    Server s(fast());
    auto c = s.client();
    EXPECT_EQ(c.Post("/sessions", R"({"model":"nope"})", "application/json")->status, 422);
    const std::string id = create(c, "ssm2");
    EXPECT_EQ(c.Post("/sessions/" + id + "/target", R"({"x":500,"y":50})", "application/json")->status, 422);
    EXPECT_EQ(c.Post("/sessions/" + id + "/target", R"({"y":50})", "application/json")->status, 400);
    EXPECT_EQ(c.Get("/sessions/" + id + "/events")->status, 409);
    const std::string pose = create(c, "ssm3");
    EXPECT_EQ(c.Post("/sessions/" + pose + "/target", R"({"x":0,"y":45})", "application/json")->status, 422);
}

TEST(Service, TargetWhileRunningConflicts) {
    ServiceConfig cfg;
    cfg.real_time_factor = 1.0;  // one sample period (0.5 s) per step
    Server s(cfg);
    auto c = s.client();
    const std::string id = create(c, "ssm2");
    const RobotState far = steady_pose(PlantConfig{}, 70.0, 5.0);
    const json t = {{"x", far.x}, {"y", far.y}};
    ASSERT_EQ(c.Post("/sessions/" + id + "/target", t.dump(), "application/json")->status, 202);
    EXPECT_EQ(c.Post("/sessions/" + id + "/target", t.dump(), "application/json")->status, 409);
    EXPECT_EQ(c.Post("/sessions/" + id + "/reset", "", "application/json")->status, 409);
    const json st = json::parse(c.Get("/sessions/" + id + "/state")->body);
    EXPECT_EQ(st.at("status"), "running");
    EXPECT_EQ(c.Delete("/sessions/" + id)->status, 200);
    EXPECT_EQ(c.Get("/sessions/" + id + "/state")->status, 404);
}

TEST(Service, ZeroDistanceTarget) {
    Server s(fast());
    auto c = s.client();
    const std::string id = create(c, "ssm2");
    const json st = json::parse(c.Get("/sessions/" + id + "/state")->body);
    const auto pose = st.at("true_pose");
    const json summary = run_target(c, id, {{"x", pose[0]}, {"y", pose[1]}});
    EXPECT_EQ(summary.at("type"), "summary");
    EXPECT_LT(summary.at("d_err").get<double>(), PlantConfig{}.sigma_pos);
}

TEST(Service, StreamLengthMatchesRun) {
    Server s(fast());
    auto c = s.client();
    const std::string id = create(c, "ssm2");
    const RobotState t = steady_pose(PlantConfig{}, 50.0, 20.0);
    ASSERT_EQ(c.Post("/sessions/" + id + "/target", json{{"x", t.x}, {"y", t.y}}.dump(), "application/json")->status,
              202);
    const auto ev = events(c, id);
    ASSERT_GE(ev.size(), 2u);
    const json& summary = ev.back();
    EXPECT_EQ(summary.at("type"), "summary");
    EXPECT_EQ(static_cast<int>(ev.size()) - 1, summary.at("steps").get<int>());
    for (std::size_t i = 0; i + 1 < ev.size(); ++i) {
        EXPECT_EQ(ev[i].at("step"), static_cast<int>(i));
        for (const char* k : {"u_cmd", "x_believed", "x_true", "objective", "saturated"}) EXPECT_TRUE(ev[i].contains(k));
    }
    // Replaying the finished stream gives the same lines.
    EXPECT_EQ(events(c, id).size(), ev.size());
    const json st = json::parse(c.Get("/sessions/" + id + "/state")->body);
    EXPECT_EQ(st.at("status"), "done");
    EXPECT_EQ(st.at("believed_pose"), ev[ev.size() - 2].at("x_believed"));
}

TEST(Service, ConcurrentSessionsAreIsolated) {
    ServiceConfig cfg;
    cfg.real_time_factor = 200.0;
    Server s(cfg);
    const PlantConfig pc;
    const RobotState t = steady_pose(pc, 45.0, 35.0);

    // Reference: the same run on a private plant.
    Plant ref(pc);
    const TrialResult want = run_position_trial(ssm(2), ref, t, 2, cfg.mpc, cfg.settle_steps);

    std::vector<std::future<json>> runs;
    for (int k = 0; k < 4; ++k) {
        runs.push_back(std::async(std::launch::async, [&] {
            auto c = s.client();
            const std::string id = create(c, "ssm2", pc);
            return run_target(c, id, {{"x", t.x}, {"y", t.y}});
        }));
    }
    for (auto& f : runs) {
        const json summary = f.get();
        EXPECT_EQ(summary.at("d_err").get<double>(), want.d_err);
        EXPECT_EQ(summary.at("steps").get<int>(), want.steps);
    }
}

TEST(Service, MatchesHarnessSequence) {
    Server s(fast());
    s.service().add_model("nink2", small_nink());
    PipelineConfig pc;
    const std::uint64_t seed = 1;
    const auto targets = exp1_targets(pc.plant, seed, 6);
    for (const std::string& name : {std::string("ssm2"), std::string("nink2")}) {
        const AnyModel model = name == "ssm2" ? ssm(2) : small_nink();
        const auto harness = run_experiment_1_sequence(model, exp1_plant_config(pc, seed), targets, pc.mpc, 0);
        auto c = s.client();
        const std::string id = create(c, name, exp1_plant_config(pc, seed));
        for (std::size_t i = 0; i < targets.size(); ++i) {
            ASSERT_EQ(c.Post("/sessions/" + id + "/reset", "", "application/json")->status, 200);
            const json summary = run_target(c, id, {{"x", targets[i].x}, {"y", targets[i].y}});
            EXPECT_LT(std::abs(summary.at("d_err").get<double>() - harness[i].d_err), 1e-9) << name << " " << i;
            EXPECT_EQ(summary.at("steps").get<int>(), harness[i].steps);
        }
    }
}

TEST(Service, LoadsCheckpointDirectory) {
    const auto dir = std::filesystem::temp_directory_path() / "nkoop_models_test";
    std::filesystem::create_directories(dir);
    save_model(dir / "ssm_pos.json", ssm(2));
    {
        std::ofstream os(dir / "report.json");
        os << R"({"seeds":[1]})";
    }
    ControlService svc(fast());
    svc.load_models(dir);
    EXPECT_EQ(svc.model_names(), std::vector<std::string>{"ssm_pos"});
    std::filesystem::remove_all(dir);
}
