// Runs every acceptance criterion and prints one PASS/FAIL line each.
// Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "gradcheck.hpp"
#include "nkoop.hpp"
#include "qp_oracle.hpp"

using namespace nkoop;

namespace {

// Tolerances.
constexpr double kEdmdTol = 1e-8;
constexpr double kEdmdSeconds = 1.0;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 30.0;
constexpr double kReconFraction = 0.05;
constexpr double kRoundtripKpa = 1.6;
constexpr double kDenseTol = 1e-9;
constexpr double kKktTol = 1e-8;
constexpr double kHandTol = 1e-10;
constexpr double kOpenLoopTol = 1e-6;
constexpr double kClosedFormTol = 1e-12;
constexpr double kPipelineSeconds = 900.0;

struct Outcome {
    bool passed;
    std::string detail;
};

int failures = 0;

void report(const std::string& name, const Outcome& o) {
    std::cout << (o.passed ? "PASS  " : "FAIL  ") << name << "  (" << o.detail << ")" << std::endl;
    if (!o.passed) ++failures;
}

void run(const std::string& name, const std::function<Outcome()>& f) {
    try {
        report(name, f());
    } catch (const std::exception& e) {
        report(name, {false, std::string("threw: ") + e.what()});
    }
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome edmd_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    const int samples = 50;
    SnapshotMatrices s{Mat(1, samples), Mat(1, samples), Mat(1, samples)};
    double x = d(rng);
    for (int k = 0; k < samples; ++k) {
        const double u = d(rng);
        s.X(0, k) = x;
        s.U(0, k) = u;
        x = 0.9 * x + 0.1 * u;
        s.Xn(0, k) = x;
    }
    const LinearLiftedModel m = fit_edmd(s, Dictionary::identity(1), Normalizer::identity(1, 1));
    const double secs = seconds_since(t0);
    const double err = std::max(std::abs(m.A(0, 0) - 0.9), std::abs(m.B(0, 0) - 0.1));
    return {err < kEdmdTol && secs < kEdmdSeconds, "max coefficient error " + fmt(err) + ", " + fmt(secs) + " s"};
}

Outcome gradient_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::string worst_name = "none";
    auto note = [&](const std::vector<gradcheck::TensorCheck>& checks, const std::string& tag) {
        for (const auto& c : checks) {
            if (c.max_rel_error >= worst) {
                worst = c.max_rel_error;
                worst_name = tag + " " + c.name;
            }
        }
    };
    std::mt19937_64 rng(5);
    for (Activation act : {Activation::tanh, Activation::linear}) {
        Mlp net = Mlp::make({3, 12, 12, 4}, act, rng);
        const Mat X = Mat::Random(3, 9), G = Mat::Random(4, 9);
        note(gradcheck::check_mlp(net, X, G, 64, 1e-5, 11), "mlp/" + to_string(act));
    }
    const Dataset data = collect_random_walk(PlantConfig{}, {120, 120, 80}, 5);
    TrainConfig cfg;
    cfg.lifted_dim = 8;
    cfg.state_hidden = 16;
    cfg.input_hidden = 8;
    cfg.seed = 3;
    const Normalizer norm = Normalizer::fit(data, 3);
    const WindowData w = make_windows(data, norm, 3, 4);
    std::vector<std::pair<int, int>> pick(w.windows.begin(), w.windows.begin() + 8);
    Mat X, U;
    w.assemble(pick, X, U);
    for (Variant v : {Variant::nink, Variant::link}) {
        NeuralKoopmanModel m = init_neural_koopman(v, 3, 2, norm, cfg);
        Mat W = 0.3 * Mat::Random(3, cfg.lifted_dim);
        note(gradcheck::check_encoder_loss(m, W, X, U, 4, 1.0, 64, 1e-5, 21), to_string(v));
    }
    const double secs = seconds_since(t0);
    return {worst < kGradTol && secs < kGradSeconds,
            "max relative error " + fmt(worst) + " at " + worst_name + ", " + fmt(secs) + " s"};
}

Outcome qp_optimality() {
    using namespace qp_oracle;
    std::mt19937_64 rng(1);
    double dense = 0.0, kkt = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const Instance in = random_instance(rng);
        const MpcSolution s = solve_lifted_qp(in.g0, in.des, in.A, in.B, config_for(in));
        dense = std::max(dense, (stack(s.inputs) - stack(dense_solve(in))).cwiseAbs().maxCoeff());
        kkt = std::max(kkt, s.kkt_residual);
    }
    // Box-active instances.
    int active = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Instance in = random_instance(rng);
        const Eigen::Index m = in.B.cols();
        const InputBox box{Vec::Constant(m, -0.2), Vec::Constant(m, 0.2)};
        const MpcSolution s = solve_lifted_qp(in.g0, in.des, in.A, in.B, config_for(in), box);
        kkt = std::max(kkt, s.kkt_residual);
        for (const Vec& u : s.inputs) active += (u.cwiseAbs().array() >= 0.2 - 1e-12).any() ? 1 : 0;
    }
    const MpcSolution hand = solve_lifted_qp(Vec::Ones(1), {Vec::Zero(1)}, Mat::Ones(1, 1), Mat::Ones(1, 1),
                                             scalar_config(1.0));
    const double hand_err = std::max(std::abs(hand.inputs[0](0) + 0.5), std::abs(hand.objective - 1.5));
    return {dense < kDenseTol && kkt < kKktTol && hand_err < kHandTol && active > 0,
            "dense gap " + fmt(dense) + ", KKT " + fmt(kkt) + ", scalar case " + fmt(hand_err) + ", " +
                std::to_string(active) + " box-active inputs"};
}

Outcome exact_open_loop() {
    using namespace qp_oracle;
    Mat A(2, 2), B(2, 2);
    A << 1.0, 0.1, 0.0, 0.95;
    B << 0.1, 0.0, 0.05, 0.2;
    const LinearLiftedModel model = linear_model(A, B);
    const Vec x0 = Eigen::Vector2d(2.0, -1.0);
    LinearPlant plant{A, B, x0};
    MpcConfig cfg;
    cfg.u_min = -1e3;
    cfg.u_max = 1e3;
    cfg.max_steps = 20;
    cfg.tol_position = 1e-7;
    const ControlLog log = run_open_loop(model, plant, x0, Vec::Zero(2), cfg);
    double belief = 0.0;
    for (const ControlEvent& e : log.events) belief = std::max(belief, (e.x_believed - e.x_true).norm());
    const double err = plant.x.norm();
    return {log.converged && err < kOpenLoopTol && belief == 0.0,
            "final error " + fmt(err) + " after " + std::to_string(log.size()) + " steps, belief gap " + fmt(belief)};
}

Outcome pcc_closed_forms() {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ang(0.05, 1.4), len(5.0, 40.0), off(0.0, 8.0), coin(-1.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
        const double t1 = ang(rng) * (coin(rng) < 0 ? -1 : 1), t2 = ang(rng) * (coin(rng) < 0 ? -1 : 1);
        const pcc::JointParams j{t1, t2, len(rng), len(rng)};
        const pcc::Offsets h{off(rng), off(rng), off(rng)};
        const double t12 = t1 + t2;
        const double x = j.l1 * (1.0 - std::cos(t1)) / t1 + h.h2 * std::sin(t1) +
                         j.l2 * (std::cos(t1) - std::cos(t12)) / t2 + h.h3 * std::sin(t12);
        const double y = h.h1 + j.l1 * std::sin(t1) / t1 + h.h2 * std::cos(t1) +
                         j.l2 * (std::sin(t12) - std::sin(t1)) / t2 + h.h3 * std::cos(t12);
        const RobotState s = pcc::tip_pose(j, h);
        worst = std::max({worst, std::abs(s.x - x), std::abs(s.y - y), std::abs(s.theta - rad2deg(t12))});
    }
    // Quarter turn of a single arc: tip at (2l/pi, 2l/pi), 90 deg.
    for (double l : {1.0, 7.5}) {
        const RobotState s = pcc::tip_pose({kPi / 2.0, 0.0, l, 0.0}, {0.0, 0.0, 0.0});
        worst = std::max({worst, std::abs(s.x - 2.0 * l / kPi), std::abs(s.y - 2.0 * l / kPi),
                          std::abs(s.theta - 90.0)});
    }
    return {worst < kClosedFormTol, "max deviation " + fmt(worst)};
}

Outcome metric_hand_cases() {
    const ErrorStats s = error_stats({3.0, 4.0});
    const double stats_err = std::abs(s.avg - 3.5) + std::abs(s.std - 0.5) + std::abs(s.max - 4.0);
    const double acc = target_accuracy({2.5, 2.5000001, 0.1, 9.0}, 30.0, 40.0, 0.05);
    Mat pred(2, 4), truth = Mat::Zero(2, 4);
    pred << 0.5, 1.5, 0.9, 3.0, 0.0, 0.0, 0.0, 10.0;
    const Vec per_dim = accuracy(pred, truth, Eigen::Vector2d(20.0, 100.0), 0.05);
    const bool ok = stats_err == 0.0 && acc == 0.5 && per_dim(0) == 0.5 && per_dim(1) == 0.75;
    return {ok, "stats error " + fmt(stats_err) + ", target accuracy " + fmt(acc) + ", per-dimension (" +
                    fmt(per_dim(0)) + ", " + fmt(per_dim(1)) + ")"};
}

Outcome reconstruction(const std::vector<SeedArtifacts>& seeds) {
    double worst_fraction = 0.0, worst_roundtrip = 0.0;
    for (const SeedArtifacts& a : seeds) {
        for (const ModelBundle* b : {&a.position, &a.pose}) {
            const Vec range = state_range(a.data, b->n);
            for (const char* method : {"NNKM", "LNKM"}) {
                const auto& meta = b->models.at(method).neural()->meta;
                worst_fraction = std::max(worst_fraction, meta.recon_rmse.cwiseQuotient(range).maxCoeff());
                if (std::isfinite(meta.input_roundtrip)) {
                    worst_roundtrip = std::max(worst_roundtrip, meta.input_roundtrip);
                }
            }
        }
    }
    return {worst_fraction < kReconFraction && worst_roundtrip < kRoundtripKpa,
            "worst decoder RMSE " + fmt(100.0 * worst_fraction) + "% of range, worst input round trip " +
                fmt(worst_roundtrip) + " kPa"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::filesystem::path out_dir = argc > 1 ? argv[1] : "acceptance_report";

    run("EDMD recovers a known scalar system", edmd_oracle);
    run("analytic gradients match finite differences", gradient_suite);
    run("lifted QP solution is optimal", qp_optimality);
    run("exact model drives a linear plant to the target", exact_open_loop);
    run("PCC kinematics match closed forms", pcc_closed_forms);
    run("metric hand cases", metric_hand_cases);

    PipelineConfig cfg;
    EvaluationReport rep;
    rep.seeds = cfg.seeds;
    std::vector<SeedArtifacts> artifacts;
    try {
        const auto t0 = std::chrono::steady_clock::now();
        for (std::uint64_t seed : cfg.seeds) {
            const auto s0 = std::chrono::steady_clock::now();
            std::cerr << "seed " << seed << ": collecting and training" << std::endl;
            artifacts.push_back(build_seed(cfg, seed));
            std::cerr << "seed " << seed << ": running experiments" << std::endl;
            evaluate_seed(artifacts.back(), cfg, rep);
            rep.max_seed_pipeline_seconds = std::max(rep.max_seed_pipeline_seconds, seconds_since(s0));
        }
        finalize_report(rep, cfg);
        rep.pipeline_seconds = seconds_since(t0);
    } catch (const std::exception& e) {
        report("evaluation pipeline", {false, std::string("threw: ") + e.what()});
        return 1;
    }

    run("neural decoders reconstruct states and inputs", [&] { return reconstruction(artifacts); });
    const auto checks = check_report(rep, cfg, kPipelineSeconds);
    for (const CriterionResult& c : checks) report(c.name, {c.passed, c.detail});
    write_report(out_dir, rep, cfg, checks);
    std::cout << "report written to " << out_dir.string() << '\n';
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed") << '\n';
    return failures == 0 ? 0 : 1;
}
