#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "nkoop/core.hpp"
#include "nkoop/pcc.hpp"

namespace nkoop {

/// Simulated two-chamber pneumatic catheter: PCC kinematics driven by
/// quadratic pressure maps, a first-order pressure lag, chamber cross-coupling
/// and Gaussian measurement noise.
struct PlantConfig {
    double l1 = 20.0;
    double l2 = 20.0;
    double h1 = 5.0;
    double h2 = 3.0;
    double h3 = 2.0;
    // Bending (deg) and elongation (mm) per chamber pressure (kPa).
    // About 30 deg and +25 mm at 80 kPa; chamber 2 bends the opposite way.
    pcc::Quadratic f1{0.00210938, 0.20625, 0.0};
    pcc::Quadratic f2{0.00234375, 0.125, 0.0};
    pcc::Quadratic f3{-0.00210938, -0.20625, 0.0};
    pcc::Quadratic f4{0.00234375, 0.125, 0.0};
    double u_min = 0.0;
    double u_max = 80.0;
    double kappa = 0.05;
    double alpha = 0.3;
    double sigma_pos = 0.3;
    double sigma_theta = 0.3;
    double sample_rate_hz = 2.0;
    std::uint64_t seed = 1;

    void check() const {
        if (!(l1 > 0.0) || !(l2 > 0.0)) throw ValidationError("PlantConfig: segment lengths must be positive");
        if (!(u_min < u_max)) throw ValidationError("PlantConfig: u_min must be below u_max");
        if (!(alpha >= 0.0 && alpha < 1.0)) throw ValidationError("PlantConfig: alpha must lie in [0, 1)");
        if (!(sigma_pos >= 0.0) || !(sigma_theta >= 0.0)) throw ValidationError("PlantConfig: noise must be >= 0");
        if (!(sample_rate_hz > 0.0)) throw ValidationError("PlantConfig: sample rate must be positive");
        constexpr int kGrid = 200;
        double prev1 = -1.0, prev3 = -1.0;
        for (int i = 0; i <= kGrid; ++i) {
            const double q = u_min + (u_max - u_min) * i / kGrid;
            const double c1 = std::abs(f1(q)), c3 = std::abs(f3(q));
            if (c1 < prev1 - 1e-12 || c3 < prev3 - 1e-12) {
                throw ValidationError("PlantConfig: bending maps must be monotone in curvature over the pressure range");
            }
            prev1 = c1;
            prev3 = c3;
            if (!(l1 + f2(q) > 0.0) || !(l2 + f4(q) > 0.0)) {
                throw ValidationError("PlantConfig: segment length must stay positive");
            }
        }
    }

    double clamp(double u) const { return std::clamp(u, u_min, u_max); }

    /// Coupling-free joint maps as PCC parameters (lengths include the rest length).
    pcc::PccParams pcc_params() const {
        pcc::PccParams p;
        p.maps = {f1, {f2.a, f2.b, f2.c + l1}, f3, {f4.a, f4.b, f4.c + l2}};
        p.offsets = {h1, h2, h3};
        p.u_min = u_min;
        p.u_max = u_max;
        return p;
    }
};

struct PlantState {
    Eigen::Vector2d pressure = Eigen::Vector2d::Zero();  // lagged chamber pressures
    double stage = 0.0;
    std::mt19937_64 rng{1};
};

/// Joint parameters for settled pressures, including cross-coupling.
inline pcc::JointParams plant_joints(const Eigen::Vector2d& p, const PlantConfig& cfg) {
    const double b1 = cfg.f1(p(0)), b2 = cfg.f3(p(1));
    return {deg2rad(b1 + cfg.kappa * b2), deg2rad(b2 + cfg.kappa * b1), cfg.l1 + cfg.f2(p(0)),
            cfg.l2 + cfg.f4(p(1))};
}

/// Noise-free tip pose of the plant in the world frame (stage added to x).
inline RobotState plant_pose(const PlantState& s, const PlantConfig& cfg) {
    RobotState pose = pcc::tip_pose(plant_joints(s.pressure, cfg), {cfg.h1, cfg.h2, cfg.h3});
    pose.x += s.stage;
    return pose;
}

inline RobotState measure(PlantState& s, const PlantConfig& cfg) {
    RobotState pose = plant_pose(s, cfg);
    if (cfg.sigma_pos > 0.0) {
        std::normal_distribution<double> n(0.0, cfg.sigma_pos);
        pose.x += n(s.rng);
        pose.y += n(s.rng);
    }
    if (cfg.sigma_theta > 0.0) {
        std::normal_distribution<double> n(0.0, cfg.sigma_theta);
        pose.theta += n(s.rng);
    }
    return pose;
}

struct PlantStepResult {
    PlantState state;
    RobotState measured;
    bool clamped = false;
};

/// One sample period: lag the pressures toward the (clamped) command, move the
/// stage, measure the tip.
inline PlantStepResult plant_step(PlantState s, const ControlInput& u, const PlantConfig& cfg) {
    const double c1 = cfg.clamp(u.u1), c2 = cfg.clamp(u.u2);
    const bool clamped = c1 != u.u1 || c2 != u.u2;
    s.pressure = cfg.alpha * s.pressure + (1.0 - cfg.alpha) * Eigen::Vector2d(c1, c2);
    s.stage = u.stage;
    RobotState m = measure(s, cfg);
    return {std::move(s), m, clamped};
}

/// Stateful wrapper used by the controllers and the service.
class Plant {
public:
    explicit Plant(PlantConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.check();
        state_.rng.seed(cfg_.seed);
        reset();
    }

    /// Settle at the given pressures (default: straight pose) with the stage at 0.
    void reset(double p1, double p2) {
        state_.pressure = {cfg_.clamp(p1), cfg_.clamp(p2)};
        state_.stage = 0.0;
        last_command_ = {state_.pressure(0), state_.pressure(1), 0.0};
    }
    void reset() { reset(cfg_.u_min, cfg_.u_min); }

    RobotState step(const ControlInput& u) {
        PlantStepResult r = plant_step(std::move(state_), u, cfg_);
        state_ = std::move(r.state);
        last_clamped_ = r.clamped;
        last_command_ = u;
        return r.measured;
    }

    /// Hold the last command for `steps` sample periods.
    RobotState settle(int steps) {
        RobotState m = measure_now();
        for (int i = 0; i < steps; ++i) m = step(last_command_);
        return m;
    }

    RobotState measure_now() { return measure(state_, cfg_); }
    RobotState true_pose() const { return plant_pose(state_, cfg_); }
    const PlantState& state() const { return state_; }
    const PlantConfig& config() const { return cfg_; }
    const ControlInput& last_command() const { return last_command_; }
    bool last_clamped() const { return last_clamped_; }
    double u_min() const { return cfg_.u_min; }
    double u_max() const { return cfg_.u_max; }
    double sample_period() const { return 1.0 / cfg_.sample_rate_hz; }

private:
    PlantConfig cfg_;
    PlantState state_;
    ControlInput last_command_;
    bool last_clamped_ = false;
};

/// Steady-state noise-free pose for constant pressures and stage 0.
inline RobotState steady_pose(const PlantConfig& cfg, double p1, double p2) {
    PlantState s;
    s.pressure = {cfg.clamp(p1), cfg.clamp(p2)};
    return plant_pose(s, cfg);
}

/// One random-walk update of a pressure target, clamped to the bounds.
inline double random_walk_target(double q, int direction, int magnitude, double u_min, double u_max) {
    return std::clamp(q + direction * static_cast<double>(magnitude), u_min, u_max);
}

/// Random-walk excitation: each chamber target moves by d*dq with d in {-1, 1}
/// and dq in {0..10} kPa per sample. Each trial starts from the straight pose.
inline Dataset collect_random_walk(PlantConfig cfg, const std::vector<int>& samples_per_trial, std::uint64_t seed,
                                   int state_dim = 3) {
    for (int n : samples_per_trial) {
        if (n < 2) throw std::invalid_argument("collect_random_walk: samples_per_trial must be >= 2");
    }
    cfg.seed = seed;
    Plant plant(cfg);
    std::mt19937_64 walk(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_int_distribution<int> dir(0, 1), mag(0, 10);

    Dataset data;
    data.meta = {cfg.sample_rate_hz, static_cast<int>(samples_per_trial.size()), seed, state_dim};
    for (std::size_t t = 0; t < samples_per_trial.size(); ++t) {
        plant.reset();
        Eigen::Vector2d q(cfg.u_min, cfg.u_min);
        RobotState x = plant.measure_now();
        for (int k = 0; k < samples_per_trial[t]; ++k) {
            for (int c = 0; c < 2; ++c) {
                const int d = dir(walk) == 0 ? -1 : 1;
                q(c) = random_walk_target(q(c), d, mag(walk), cfg.u_min, cfg.u_max);
            }
            const ControlInput u{q(0), q(1), 0.0};
            const RobotState xn = plant.step(u);
            data.samples.push_back({x, u, xn, static_cast<int>(t)});
            x = xn;
        }
    }
    if (state_dim == 2) {
        for (Sample& s : data.samples) s.state.theta = s.next_state.theta = 0.0;
    }
    return data;
}

/// Axis-aligned extent of the steady-state workspace over a pressure grid.
struct WorkspaceBounds {
    double x_min = 0.0, x_max = 0.0;
    double y_min = 0.0, y_max = 0.0;
    double theta_min = 0.0, theta_max = 0.0;

    double range_x() const { return x_max - x_min; }
    double range_y() const { return y_max - y_min; }
    double diagonal() const { return std::hypot(range_x(), range_y()); }
};

/// Grid of reachable steady positions plus their bounding box.
struct WorkspaceGrid {
    WorkspaceBounds bounds;
    std::vector<Eigen::Vector2d> points;
    int resolution = 0;

    /// Inside the convex hull of the grid points (with a tolerance in mm).
    bool contains(const Eigen::Vector2d& p, double tol = 0.5) const;
    std::vector<Eigen::Vector2d> hull() const;
};

inline WorkspaceGrid workspace_grid(const PlantConfig& cfg, int resolution = 50) {
    WorkspaceGrid g;
    g.resolution = resolution;
    bool first = true;
    for (int i = 0; i < resolution; ++i) {
        for (int j = 0; j < resolution; ++j) {
            const double p1 = cfg.u_min + (cfg.u_max - cfg.u_min) * i / (resolution - 1);
            const double p2 = cfg.u_min + (cfg.u_max - cfg.u_min) * j / (resolution - 1);
            const RobotState s = steady_pose(cfg, p1, p2);
            g.points.emplace_back(s.x, s.y);
            WorkspaceBounds& b = g.bounds;
            if (first) {
                b = {s.x, s.x, s.y, s.y, s.theta, s.theta};
                first = false;
            }
            b.x_min = std::min(b.x_min, s.x);
            b.x_max = std::max(b.x_max, s.x);
            b.y_min = std::min(b.y_min, s.y);
            b.y_max = std::max(b.y_max, s.y);
            b.theta_min = std::min(b.theta_min, s.theta);
            b.theta_max = std::max(b.theta_max, s.theta);
        }
    }
    return g;
}

inline WorkspaceBounds workspace_bounds(const PlantConfig& cfg, int resolution = 50) {
    return workspace_grid(cfg, resolution).bounds;
}

inline std::vector<Eigen::Vector2d> WorkspaceGrid::hull() const {
    // Andrew's monotone chain, counter-clockwise.
    std::vector<Eigen::Vector2d> pts = points;
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    if (pts.size() < 3) return pts;
    auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
        return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
    };
    std::vector<Eigen::Vector2d> h(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
        h[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
        while (k >= t && cross(h[k - 2], h[k - 1], pts[i - 1]) <= 0) --k;
        h[k++] = pts[i - 1];
    }
    h.resize(k - 1);
    return h;
}

inline bool WorkspaceGrid::contains(const Eigen::Vector2d& p, double tol) const {
    const auto h = hull();
    if (h.size() < 3) return false;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const Eigen::Vector2d& a = h[i];
        const Eigen::Vector2d& b = h[(i + 1) % h.size()];
        const Eigen::Vector2d e = b - a;
        const double signed_dist = (e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x())) / e.norm();
        if (signed_dist < -tol) return false;
    }
    return true;
}

/// One atrium wall target and the reachable x at which its pose is attainable
/// without moving the stage.
struct AtriumTarget {
    RobotState pose;
    double x_reachable = 0.0;
};

struct AtriumScenario {
    std::vector<AtriumTarget> targets;
    double cavity_length = 43.0;   // mm
    double entry_diameter = 20.0;  // mm
    double workspace_x_bound = 0.0;

    void check() const {
        for (std::size_t i = 0; i < targets.size(); ++i) {
            if (!(targets[i].pose.x > workspace_x_bound)) {
                throw ValidationError("AtriumScenario: target " + std::to_string(i) +
                                      " lies inside the unsteered workspace");
            }
        }
    }
};

struct TargetPlan {
    RobotState target;
    RobotState intermediate;  // same pose shifted into the workspace along x
    double delta_x = 0.0;     // x_w - x_d
};

/// Steering decomposition: reach the in-workspace pose, then translate the
/// stage by -delta_x.
inline TargetPlan plan_target(const RobotState& target, double x_reachable) {
    RobotState mid = target;
    mid.x = x_reachable;
    return {target, mid, x_reachable - target.x};
}

inline std::vector<TargetPlan> atrium_targets(const AtriumScenario& scn) {
    std::vector<TargetPlan> out;
    for (const AtriumTarget& t : scn.targets) out.push_back(plan_target(t.pose, t.x_reachable));
    return out;
}

/// Five poses reachable by bending, translated in x onto an arc-shaped wall
/// (radius half the cavity length) placed just beyond the unsteered workspace.
inline AtriumScenario default_atrium(const PlantConfig& cfg, double wall_margin = 4.0) {
    AtriumScenario scn;
    const WorkspaceBounds b = workspace_bounds(cfg);
    scn.workspace_x_bound = b.x_max;
    const double span = cfg.u_max - cfg.u_min;
    const std::array<std::pair<double, double>, 5> fractions{
        {{0.15, 0.55}, {0.35, 0.30}, {0.55, 0.50}, {0.75, 0.35}, {0.90, 0.70}}};
    std::vector<RobotState> poses;
    double y_mean = 0.0;
    for (auto [a, c] : fractions) {
        poses.push_back(steady_pose(cfg, cfg.u_min + a * span, cfg.u_min + c * span));
        y_mean += poses.back().y / static_cast<double>(fractions.size());
    }
    const double radius = scn.cavity_length / 2.0;
    const double cx = b.x_max + wall_margin;
    for (const RobotState& p : poses) {
        const double dy = std::clamp(p.y - y_mean, -radius, radius);
        RobotState target = p;
        target.x = cx + std::sqrt(radius * radius - dy * dy);
        scn.targets.push_back({target, p.x});
    }
    scn.check();
    return scn;
}

}  // namespace nkoop
