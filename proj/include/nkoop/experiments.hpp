#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "nkoop/lifted_model.hpp"
#include "nkoop/metrics.hpp"
#include "nkoop/mpc.hpp"
#include "nkoop/pcc_control.hpp"
#include "nkoop/plant.hpp"

namespace nkoop {

/// Adapts the catheter plant to the open-loop runner (inputs are the two
/// chamber pressures; the stage is held at a fixed value).
class RobotPlant {
public:
    RobotPlant(Plant& plant, int dim, double stage = 0.0) : plant_(&plant), dim_(dim), stage_(stage) {}

    Vec step(const Vec& u) { return plant_->step({u(0), u(1), stage_}).to_vector(dim_); }
    Vec true_state() const { return plant_->true_pose().to_vector(dim_); }

private:
    Plant* plant_;
    int dim_;
    double stage_;
};

struct PipelineConfig {
    PlantConfig plant;
    std::vector<int> trial_lengths{500, 500, 500, 500, 586};
    TrainConfig train;
    int monomial_degree = 2;
    MpcConfig mpc;
    int settle_steps = 0;  // extra hold steps before scoring; 0 scores at model-predicted convergence
    double initial_box_fraction = 0.25;  // Exp-2 initial pressures in [u_min, u_min + f * span]
    int exp1_targets = 6;
    int exp2_trials = 8;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    double p1 = 0.0275;
    double p2 = 0.05;
    int pcc_points_per_chamber = 50;
};

inline const std::vector<std::string>& model_methods() {
    static const std::vector<std::string> names{"NNKM", "LNKM", "MBKM", "SSM"};
    return names;
}

/// The four lifted models of one state dimension.
struct ModelBundle {
    int n = 3;
    std::map<std::string, AnyModel> models;  // keyed by method tag
    double train_seconds = 0.0;
};

inline Dataset collect_dataset(const PipelineConfig& cfg, std::uint64_t seed) {
    return collect_random_walk(cfg.plant, cfg.trial_lengths, seed, 3);
}

inline ModelBundle train_models(const Dataset& train, int n, const PipelineConfig& cfg, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    ModelBundle b;
    b.n = n;
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    b.models["NNKM"] = train_neural_koopman(train, tc, Variant::nink, n);
    b.models["LNKM"] = train_neural_koopman(train, tc, Variant::link, n);
    const SnapshotMatrices snap = snapshots(train, n);
    const Normalizer norm = Normalizer::fit(train, n);
    b.models["MBKM"] = fit_edmd(snap, Dictionary::monomial(n, cfg.monomial_degree), norm);
    b.models["SSM"] = fit_edmd(snap, Dictionary::identity(n), norm);
    b.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return b;
}

struct SeedArtifacts {
    std::uint64_t seed = 0;
    Dataset data, train, validation;
    ModelBundle position;  // n = 2
    ModelBundle pose;      // n = 3
    double collect_seconds = 0.0;
};

using Progress = std::function<void(const std::string&)>;

inline SeedArtifacts build_seed(const PipelineConfig& cfg, std::uint64_t seed, const Progress& progress = {}) {
    SeedArtifacts a;
    a.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    a.data = collect_dataset(cfg, seed);
    a.collect_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::tie(a.train, a.validation) = split_by_trials(a.data, cfg.train.train_fraction);
    if (progress) progress("seed " + std::to_string(seed) + ": training position models");
    a.position = train_models(a.train, 2, cfg, seed);
    if (progress) progress("seed " + std::to_string(seed) + ": training pose models");
    a.pose = train_models(a.train, 3, cfg, seed);
    return a;
}

/// Held-out one-step prediction error per state dimension (physical units).
inline Vec one_step_rmse(const AnyModel& model, const Dataset& data, int n) {
    const SnapshotMatrices s = snapshots(data, n);
    Mat pred(n, s.X.cols());
    for (Eigen::Index i = 0; i < s.X.cols(); ++i) {
        const Vec x = s.X.col(i);
        pred.col(i) = model.decode_state(model.step(model.lift(x), model.encode_input(x, s.U.col(i))));
    }
    return rmse(pred, s.Xn);
}

/// Per-dimension range of the states in a dataset.
inline Vec state_range(const Dataset& data, int n) {
    const SnapshotMatrices s = snapshots(data, n);
    return s.X.rowwise().maxCoeff() - s.X.rowwise().minCoeff();
}

struct ModelingRow {
    std::string method;
    int n = 3;
    std::uint64_t seed = 0;
    Vec rmse;
    double score = 0.0;  // mean of per-dimension RMSE over the state range
};

inline std::vector<ModelingRow> evaluate_modeling(const SeedArtifacts& a) {
    std::vector<ModelingRow> rows;
    for (const ModelBundle* b : {&a.position, &a.pose}) {
        const Vec range = state_range(a.data, b->n);
        for (const std::string& method : model_methods()) {
            ModelingRow r{method, b->n, a.seed, one_step_rmse(b->models.at(method), a.validation, b->n), 0.0};
            r.score = r.rmse.cwiseQuotient(range).mean();
            rows.push_back(std::move(r));
        }
    }
    return rows;
}

struct TrialResult {
    std::string method;
    std::uint64_t seed = 0;
    int target_index = 0;
    int trial = 0;
    RobotState target;
    RobotState initial;
    RobotState final_pose;  // true pose after settling
    double d_err = 0.0;
    double theta_err = 0.0;
    int steps = 0;
    double sim_time = 0.0;   // control (+ stage) steps times the sample period
    double wall_time = 0.0;  // seconds
    double saturation_rate = 0.0;
    bool converged = false;
    bool failed = false;
    std::string failure;
    ControlLog log;
};

inline void score_trial(TrialResult& r, const Plant& plant) {
    r.final_pose = plant.true_pose();
    r.d_err = std::hypot(r.final_pose.x - r.target.x, r.final_pose.y - r.target.y);
    r.theta_err = std::abs(r.final_pose.theta - r.target.theta);
}

/// One open-loop MPC run from the current plant state toward `target`,
/// followed by `settle_steps` holding the last command. Solver failures are
/// recorded in the result.
inline TrialResult run_position_trial(const AnyModel& model, Plant& plant, const RobotState& target, int n,
                                      const MpcConfig& mpc, int settle_steps, const EventObserver& observer = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    TrialResult r;
    r.target = target;
    r.initial = plant.true_pose();
    RobotPlant adapter(plant, n, plant.last_command().stage);
    const Vec x0 = plant.measure_now().to_vector(n);
    try {
        r.log = run_open_loop(model, adapter, x0, target.to_vector(n), mpc, observer);
    } catch (const std::exception& e) {
        r.failed = true;
        r.failure = e.what();
    }
    r.converged = r.log.converged;
    r.steps = static_cast<int>(r.log.size());
    r.saturation_rate = r.log.saturation_rate();
    plant.settle(settle_steps);
    score_trial(r, plant);
    r.sim_time = r.steps * plant.sample_period();
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

/// Random reachable targets: steady-state poses at uniformly drawn pressures.
inline std::vector<RobotState> exp1_targets(const PlantConfig& cfg, std::uint64_t seed, int count) {
    std::mt19937_64 rng(seed * 7919 + 17);
    std::uniform_real_distribution<double> p(cfg.u_min, cfg.u_max);
    std::vector<RobotState> out;
    for (int i = 0; i < count; ++i) {
        const double a = p(rng), b = p(rng);
        out.push_back(steady_pose(cfg, a, b));
    }
    return out;
}

/// Plant used for the Exp-1 sequence of a seed (its noise stream is seeded by it).
inline PlantConfig exp1_plant_config(const PipelineConfig& cfg, std::uint64_t seed) {
    PlantConfig pc = cfg.plant;
    pc.seed = seed;
    return pc;
}

/// Targets in order on one plant, returning to the straight pose before each.
inline std::vector<TrialResult> run_experiment_1_sequence(const AnyModel& model, const PlantConfig& plant_cfg,
                                                          const std::vector<RobotState>& targets,
                                                          const MpcConfig& mpc, int settle_steps) {
    Plant plant(plant_cfg);
    std::vector<TrialResult> out;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        plant.reset();
        TrialResult r = run_position_trial(model, plant, targets[i], 2, mpc, settle_steps);
        r.target_index = static_cast<int>(i);
        r.theta_err = 0.0;
        out.push_back(std::move(r));
    }
    return out;
}

/// Aggregate error statistics for one method.
struct MethodSummary {
    std::string method;
    ErrorStats position;
    ErrorStats orientation;
    double acc1 = 0.0;
    double acc2 = 0.0;
    double mean_sim_time = 0.0;
    double mean_wall_time = 0.0;
    double saturation_rate = 0.0;
    int trials = 0;
    int failures = 0;
};

inline MethodSummary summarize(const std::string& method, const std::vector<TrialResult>& trials,
                               const WorkspaceBounds& ws, double p1, double p2) {
    MethodSummary s;
    s.method = method;
    std::vector<double> d, th;
    for (const TrialResult& r : trials) {
        d.push_back(r.d_err);
        th.push_back(r.theta_err);
        s.mean_sim_time += r.sim_time;
        s.mean_wall_time += r.wall_time;
        s.saturation_rate += r.saturation_rate;
        s.failures += r.failed ? 1 : 0;
    }
    s.trials = static_cast<int>(trials.size());
    if (trials.empty()) return s;
    s.mean_sim_time /= s.trials;
    s.mean_wall_time /= s.trials;
    s.saturation_rate /= s.trials;
    s.position = error_stats(d);
    s.orientation = error_stats(th);
    s.acc1 = target_accuracy(d, ws.range_x(), ws.range_y(), p1);
    s.acc2 = target_accuracy(d, ws.range_x(), ws.range_y(), p2);
    return s;
}

struct Exp2Setup {
    AtriumScenario scenario;
    std::vector<TargetPlan> plans;
    std::vector<std::vector<Eigen::Vector2d>> initial_pressures;  // [target][trial]
};

inline Exp2Setup exp2_setup(const PipelineConfig& cfg, std::uint64_t seed) {
    Exp2Setup s;
    s.scenario = default_atrium(cfg.plant);
    s.plans = atrium_targets(s.scenario);
    std::mt19937_64 rng(seed * 104729 + 3);
    const double hi = cfg.plant.u_min + cfg.initial_box_fraction * (cfg.plant.u_max - cfg.plant.u_min);
    std::uniform_real_distribution<double> p(cfg.plant.u_min, hi);
    for (std::size_t t = 0; t < s.plans.size(); ++t) {
        std::vector<Eigen::Vector2d> row;
        for (int k = 0; k < cfg.exp2_trials; ++k) {
            const double a = p(rng), b = p(rng);
            row.emplace_back(a, b);
        }
        s.initial_pressures.push_back(std::move(row));
    }
    return s;
}

/// Controller used to reach the intermediate pose: a lifted model or PCC.
struct PoseController {
    std::string method;
    const AnyModel* model = nullptr;
    const pcc::PccParams* pcc = nullptr;
};

/// Drive to the in-workspace intermediate pose, translate the stage by the
/// steering offset, settle, and score against the final target.
inline TrialResult run_steered_trial(const PoseController& ctrl, Plant& plant, const TargetPlan& plan,
                                     const WorkspaceGrid& ws, const PipelineConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    TrialResult r;
    r.method = ctrl.method;
    r.target = plan.target;
    r.initial = plant.true_pose();
    if (!ws.contains({plan.intermediate.x, plan.intermediate.y})) {
        r.failed = true;
        r.failure = "intermediate pose outside the workspace";
        score_trial(r, plant);
        return r;
    }
    try {
        if (ctrl.model != nullptr) {
            RobotPlant adapter(plant, 3, 0.0);
            r.log = run_open_loop(*ctrl.model, adapter, plant.measure_now().to_vector(3),
                                  plan.intermediate.to_vector(3), cfg.mpc);
        } else {
            r.log = pcc_control(plant, plant.last_command(), plan.intermediate, *ctrl.pcc, 3, cfg.mpc.tol_position,
                                cfg.mpc.tol_angle)
                        .log;
        }
    } catch (const std::exception& e) {
        r.failed = true;
        r.failure = e.what();
    }
    r.converged = r.log.converged;
    r.steps = static_cast<int>(r.log.size());
    r.saturation_rate = r.log.saturation_rate();
    ControlInput hold = plant.last_command();
    hold.stage = -plan.delta_x;
    int stage_steps = 0;
    if (hold.stage != 0.0) {
        plant.step(hold);
        stage_steps = 1;
    }
    plant.settle(cfg.settle_steps);
    score_trial(r, plant);
    r.sim_time = (r.steps + stage_steps) * plant.sample_period();
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

inline std::vector<TrialResult> run_experiment_2_method(const PoseController& ctrl, const Exp2Setup& setup,
                                                        const PipelineConfig& cfg, std::uint64_t seed) {
    PlantConfig pc = cfg.plant;
    pc.seed = seed * 31 + 5;
    Plant plant(pc);
    const WorkspaceGrid ws = workspace_grid(cfg.plant);
    std::vector<TrialResult> out;
    for (std::size_t t = 0; t < setup.plans.size(); ++t) {
        for (std::size_t k = 0; k < setup.initial_pressures[t].size(); ++k) {
            const Eigen::Vector2d& p0 = setup.initial_pressures[t][k];
            plant.reset(p0(0), p0(1));
            TrialResult r = run_steered_trial(ctrl, plant, setup.plans[t], ws, cfg);
            r.seed = seed;
            r.target_index = static_cast<int>(t);
            r.trial = static_cast<int>(k);
            out.push_back(std::move(r));
        }
    }
    return out;
}

struct EvaluationReport {
    std::vector<ModelingRow> modeling;
    std::map<std::string, std::vector<TrialResult>> exp1;  // pooled over seeds
    std::map<std::string, std::vector<TrialResult>> exp2;
    std::map<std::string, MethodSummary> exp1_summary;
    std::map<std::string, MethodSummary> exp2_summary;
    std::map<std::string, double> modeling_score;  // 3-seed mean, pose models
    std::map<std::string, double> modeling_score_position;
    WorkspaceBounds workspace;
    double pipeline_seconds = 0.0;       // total wall time for all seeds
    double max_seed_pipeline_seconds = 0.0;  // collect + train + eval of the slowest seed
    std::vector<std::uint64_t> seeds;
};

/// Evaluate one seed's models on both experiments and append to the report.
inline void evaluate_seed(const SeedArtifacts& a, const PipelineConfig& cfg, EvaluationReport& rep) {
    for (ModelingRow& r : evaluate_modeling(a)) rep.modeling.push_back(std::move(r));

    const std::vector<RobotState> targets = exp1_targets(cfg.plant, a.seed, cfg.exp1_targets);
    for (const std::string& method : model_methods()) {
        auto trials =
            run_experiment_1_sequence(a.position.models.at(method), exp1_plant_config(cfg, a.seed), targets, cfg.mpc,
                                      cfg.settle_steps);
        for (TrialResult& r : trials) {
            r.method = method;
            r.seed = a.seed;
            rep.exp1[method].push_back(std::move(r));
        }
    }

    const Exp2Setup setup = exp2_setup(cfg, a.seed);
    const pcc::PccParams pcc_params = fit_pcc_params(cfg.plant, cfg.pcc_points_per_chamber, a.seed);
    std::vector<PoseController> ctrls;
    for (const std::string& method : model_methods()) ctrls.push_back({method, &a.pose.models.at(method), nullptr});
    ctrls.push_back({"PCC", nullptr, &pcc_params});
    for (const PoseController& c : ctrls) {
        for (TrialResult& r : run_experiment_2_method(c, setup, cfg, a.seed)) rep.exp2[c.method].push_back(std::move(r));
    }
}

inline void finalize_report(EvaluationReport& rep, const PipelineConfig& cfg) {
    rep.workspace = workspace_bounds(cfg.plant);
    for (const auto& [method, trials] : rep.exp1) {
        rep.exp1_summary[method] = summarize(method, trials, rep.workspace, cfg.p1, cfg.p2);
    }
    for (const auto& [method, trials] : rep.exp2) {
        rep.exp2_summary[method] = summarize(method, trials, rep.workspace, cfg.p1, cfg.p2);
    }
    std::map<std::string, int> count3, count2;
    rep.modeling_score.clear();
    rep.modeling_score_position.clear();
    for (const ModelingRow& r : rep.modeling) {
        auto& score = r.n == 3 ? rep.modeling_score : rep.modeling_score_position;
        auto& count = r.n == 3 ? count3 : count2;
        score[r.method] += r.score;
        ++count[r.method];
    }
    for (auto& [m, s] : rep.modeling_score) s /= count3[m];
    for (auto& [m, s] : rep.modeling_score_position) s /= count2[m];
}

/// Collect, train and evaluate every configured seed.
inline EvaluationReport run_full_evaluation(const PipelineConfig& cfg, const Progress& progress = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    EvaluationReport rep;
    rep.seeds = cfg.seeds;
    for (std::uint64_t seed : cfg.seeds) {
        const auto s0 = std::chrono::steady_clock::now();
        const SeedArtifacts a = build_seed(cfg, seed, progress);
        if (progress) progress("seed " + std::to_string(seed) + ": running experiments");
        evaluate_seed(a, cfg, rep);
        rep.max_seed_pipeline_seconds = std::max(
            rep.max_seed_pipeline_seconds, std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count());
    }
    finalize_report(rep, cfg);
    rep.pipeline_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

struct CriterionResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Comparative checks over an evaluation report.
inline std::vector<CriterionResult> check_report(const EvaluationReport& rep, const PipelineConfig& cfg,
                                                 double pipeline_budget_seconds = 900.0) {
    std::vector<CriterionResult> out;
    auto fmt = [](double v) {
        std::ostringstream os;
        os.precision(4);
        os << v;
        return os.str();
    };
    const auto& ms = rep.modeling_score;
    out.push_back({"modeling: NINK one-step error below SSM and MBKM (3-seed mean)",
                   ms.at("NNKM") < ms.at("SSM") && ms.at("NNKM") < ms.at("MBKM"),
                   "NNKM " + fmt(ms.at("NNKM")) + ", SSM " + fmt(ms.at("SSM")) + ", MBKM " + fmt(ms.at("MBKM"))});
    out.push_back({"modeling: full pipeline within budget", rep.pipeline_seconds < pipeline_budget_seconds,
                   fmt(rep.pipeline_seconds) + " s for " + std::to_string(rep.seeds.size()) + " seeds, budget " +
                       fmt(pipeline_budget_seconds) + " s"});
    const MethodSummary& n1 = rep.exp1_summary.at("NNKM");
    const MethodSummary& m1 = rep.exp1_summary.at("MBKM");
    const double hits = n1.acc2 * cfg.exp1_targets;
    out.push_back({"exp1: NNKM reaches >= 4 of 6 targets within 5% of the diagonal (3-seed mean)", hits >= 4.0,
                   "mean hits " + fmt(hits) + " of " + std::to_string(cfg.exp1_targets)});
    out.push_back({"exp1: NNKM Acc(5%) >= MBKM Acc(5%)", n1.acc2 >= m1.acc2,
                   "NNKM " + fmt(n1.acc2) + ", MBKM " + fmt(m1.acc2)});
    const MethodSummary& n2 = rep.exp2_summary.at("NNKM");
    const MethodSummary& p2 = rep.exp2_summary.at("PCC");
    out.push_back({"exp2: NNKM mean position error <= PCC", n2.position.avg <= p2.position.avg,
                   "NNKM " + fmt(n2.position.avg) + " mm, PCC " + fmt(p2.position.avg) + " mm"});
    bool complete = true;
    for (const auto& [method, s] : rep.exp2_summary) {
        complete = complete && s.trials == static_cast<int>(5 * cfg.exp2_trials * rep.seeds.size()) &&
                   std::isfinite(s.position.avg) && std::isfinite(s.orientation.avg) &&
                   std::isfinite(s.mean_sim_time);
    }
    out.push_back({"exp2: report complete for all methods", complete && rep.exp2_summary.size() == 5,
                   std::to_string(rep.exp2_summary.size()) + " methods"});
    return out;
}

}  // namespace nkoop
