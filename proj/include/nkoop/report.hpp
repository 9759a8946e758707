#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>

#include <nlohmann/json.hpp>

#include "nkoop/checkpoint.hpp"
#include "nkoop/experiments.hpp"

namespace nkoop {

inline nlohmann::json to_json(const ErrorStats& s) {
    return {{"avg", s.avg}, {"std", s.std}, {"max", s.max}, {"count", s.count}};
}

/// Experiment 1 columns: AVG/STD/MAX/Acc(p1)/Acc(p2).
inline nlohmann::json table1_row(const MethodSummary& s) {
    return {{"method", s.method},
            {"AVG", s.position.avg},
            {"STD", s.position.std},
            {"MAX", s.position.max},
            {"Acc_p1", s.acc1},
            {"Acc_p2", s.acc2}};
}

/// Experiment 2 columns: position and orientation AVG/STD plus mean time.
inline nlohmann::json table2_row(const MethodSummary& s) {
    return {{"method", s.method},
            {"pos_avg", s.position.avg},
            {"pos_std", s.position.std},
            {"ori_avg", s.orientation.avg},
            {"ori_std", s.orientation.std},
            {"time_sim", s.mean_sim_time},
            {"time_wall", s.mean_wall_time},
            {"failures", s.failures},
            {"saturation_rate", s.saturation_rate}};
}

inline nlohmann::json report_to_json(const EvaluationReport& rep, const PipelineConfig& cfg,
                                     const std::vector<CriterionResult>& checks) {
    nlohmann::json j;
    j["seeds"] = rep.seeds;
    j["plant_config"] = plant_config_to_json(cfg.plant);
    j["workspace"] = {{"range_x", rep.workspace.range_x()},
                      {"range_y", rep.workspace.range_y()},
                      {"diagonal", rep.workspace.diagonal()}};
    j["thresholds"] = {{"p1", cfg.p1},
                       {"p2", cfg.p2},
                       {"sigma1_mm", cfg.p1 * rep.workspace.diagonal()},
                       {"sigma2_mm", cfg.p2 * rep.workspace.diagonal()}};
    j["timing"] = {{"pipeline_seconds", rep.pipeline_seconds},
                   {"max_seed_pipeline_seconds", rep.max_seed_pipeline_seconds}};
    nlohmann::json modeling = nlohmann::json::array();
    for (const ModelingRow& r : rep.modeling) {
        modeling.push_back({{"method", r.method}, {"n", r.n}, {"seed", r.seed}, {"rmse", ckpt::from_vec(r.rmse)},
                            {"score", r.score}});
    }
    j["modeling"] = {{"rows", modeling},
                     {"mean_score_pose", rep.modeling_score},
                     {"mean_score_position", rep.modeling_score_position}};
    nlohmann::json t1 = nlohmann::json::array(), t2 = nlohmann::json::array();
    for (const auto& [m, s] : rep.exp1_summary) t1.push_back(table1_row(s));
    for (const auto& [m, s] : rep.exp2_summary) t2.push_back(table2_row(s));
    j["experiment_1"] = t1;
    j["experiment_2"] = t2;
    nlohmann::json acc = nlohmann::json::array();
    for (const CriterionResult& c : checks) acc.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    j["acceptance"] = acc;
    return j;
}

/// report.json, table1.csv, table2.csv, modeling.csv, exp1_trials.csv, exp2_trials.csv
inline void write_report(const std::filesystem::path& dir, const EvaluationReport& rep, const PipelineConfig& cfg,
                         const std::vector<CriterionResult>& checks) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "report.json");
        os << std::setw(2) << report_to_json(rep, cfg, checks) << '\n';
    }
    std::ofstream t1(dir / "table1.csv");
    t1 << "method,AVG,STD,MAX,Acc_p1,Acc_p2\n";
    for (const auto& [m, s] : rep.exp1_summary) {
        t1 << m << ',' << s.position.avg << ',' << s.position.std << ',' << s.position.max << ',' << s.acc1 << ','
           << s.acc2 << '\n';
    }
    std::ofstream t2(dir / "table2.csv");
    t2 << "method,pos_avg,pos_std,ori_avg,ori_std,time_sim,time_wall\n";
    for (const auto& [m, s] : rep.exp2_summary) {
        t2 << m << ',' << s.position.avg << ',' << s.position.std << ',' << s.orientation.avg << ','
           << s.orientation.std << ',' << s.mean_sim_time << ',' << s.mean_wall_time << '\n';
    }
    std::ofstream mo(dir / "modeling.csv");
    mo << "method,n,seed,rmse_x,rmse_y,rmse_theta,score\n";
    for (const ModelingRow& r : rep.modeling) {
        mo << r.method << ',' << r.n << ',' << r.seed << ',' << r.rmse(0) << ',' << r.rmse(1) << ',';
        if (r.rmse.size() > 2) mo << r.rmse(2);
        mo << ',' << r.score << '\n';
    }
    std::ofstream e1(dir / "exp1_trials.csv");
    e1 << "target,seed,d_err,steps,converged,method\n";
    for (const auto& [m, trials] : rep.exp1) {
        for (const TrialResult& r : trials) {
            e1 << r.target_index << ',' << r.seed << ',' << r.d_err << ',' << r.steps << ',' << r.converged << ','
               << m << '\n';
        }
    }
    std::ofstream e2(dir / "exp2_trials.csv");
    e2 << "target,trial,seed,d_err,theta_err,method\n";
    for (const auto& [m, trials] : rep.exp2) {
        for (const TrialResult& r : trials) {
            e2 << r.target_index << ',' << r.trial << ',' << r.seed << ',' << r.d_err << ',' << r.theta_err << ','
               << m << '\n';
        }
    }
}

}  // namespace nkoop
