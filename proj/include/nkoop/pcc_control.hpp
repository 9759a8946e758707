#pragma once

#include <random>
#include <vector>

#include "nkoop/mpc.hpp"
#include "nkoop/pcc.hpp"
#include "nkoop/plant.hpp"

namespace nkoop {

/// Least-squares quadratic a q^2 + b q + c through (q, y).
inline pcc::Quadratic fit_quadratic(const std::vector<double>& q, const std::vector<double>& y) {
    if (q.size() != y.size() || q.size() < 3) throw std::invalid_argument("fit_quadratic: need >= 3 paired points");
    Mat V(static_cast<Eigen::Index>(q.size()), 3);
    Vec b(static_cast<Eigen::Index>(q.size()));
    for (std::size_t i = 0; i < q.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        V.row(r) << q[i] * q[i], q[i], 1.0;
        b(r) = y[i];
    }
    const Vec c = V.colPivHouseholderQr().solve(b);
    return {c(0), c(1), c(2)};
}

/// Identify the PCC joint maps from per-chamber pressure sweeps on the plant.
/// Each chamber is swept alone (the other held at u_min); segment curvature
/// and length are read off with measurement noise and fitted by quadratics.
/// Offsets are taken as known.
inline pcc::PccParams fit_pcc_params(const PlantConfig& cfg, int points_per_chamber = 50, std::uint64_t seed = 7) {
    if (points_per_chamber < 3) throw std::invalid_argument("fit_pcc_params: need >= 3 points per chamber");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> angle_noise(0.0, cfg.sigma_theta), length_noise(0.0, cfg.sigma_pos);
    std::vector<double> qs, th1, l1, th2, l2;
    for (int i = 0; i < points_per_chamber; ++i) {
        qs.push_back(cfg.u_min + (cfg.u_max - cfg.u_min) * i / (points_per_chamber - 1));
    }
    for (double q : qs) {
        const pcc::JointParams a = plant_joints({q, cfg.u_min}, cfg);
        th1.push_back(rad2deg(a.theta1) + angle_noise(rng));
        l1.push_back(a.l1 + length_noise(rng));
        const pcc::JointParams b = plant_joints({cfg.u_min, q}, cfg);
        th2.push_back(rad2deg(b.theta2) + angle_noise(rng));
        l2.push_back(b.l2 + length_noise(rng));
    }
    pcc::PccParams p;
    p.maps = {fit_quadratic(qs, th1), fit_quadratic(qs, l1), fit_quadratic(qs, th2), fit_quadratic(qs, l2)};
    p.offsets = {cfg.h1, cfg.h2, cfg.h3};
    p.u_min = cfg.u_min;
    p.u_max = cfg.u_max;
    return p;
}

struct PccResult {
    ControlLog log;
    ControlInput final_command;
    int iterations = 0;
};

/// Model-based PCC baseline. Damped least-squares iterations run against the
/// PCC model (no feedback from the plant); every iterate is sent to the plant
/// as one command. Stops when the model pose is within tolerance, when the
/// update stalls, or after the step budget.
inline PccResult pcc_control(Plant& plant, const ControlInput& q0, const RobotState& x_des, const pcc::PccParams& p,
                             int dim, double tol_position = 1.0, double tol_angle = 2.0) {
    p.check();
    if (dim != 2 && dim != 3) throw DimensionError("pcc_control: task dimension must be 2 or 3");
    const Mat P = p.gain.rows() == dim ? p.gain : Mat(p.gain.topLeftCorner(dim, dim));
    PccResult out;
    ControlInput q = q0;
    const Vec target = x_des.to_vector(dim);
    Vec x = pcc::fk(q, p).to_vector(dim);
    out.final_command = q;
    if (within_tolerance(x, target, tol_position, tol_angle)) {
        out.log.converged = true;
        return out;
    }
    for (int k = 0; k < p.step_budget; ++k) {
        const Mat J = pcc::jacobian(q, p, dim);
        const Vec dq = pcc::dls_step(J, target - x, P, p.damping);
        ControlInput next = q;
        next.u1 = std::clamp(q.u1 + dq(0), p.u_min, p.u_max);
        next.u2 = std::clamp(q.u2 + dq(1), p.u_min, p.u_max);
        const bool saturated = next.u1 != q.u1 + dq(0) || next.u2 != q.u2 + dq(1);
        const double moved = std::hypot(next.u1 - q.u1, next.u2 - q.u2);
        q = next;
        x = pcc::fk(q, p).to_vector(dim);
        plant.step(q);
        out.log.events.push_back({k, q.pressures(), x, plant.true_pose().to_vector(dim), (target - x).squaredNorm(),
                                  saturated});
        ++out.iterations;
        if (within_tolerance(x, target, tol_position, tol_angle)) {
            out.log.converged = true;
            break;
        }
        if (moved < 1e-9) break;
    }
    out.final_command = q;
    return out;
}

}  // namespace nkoop
