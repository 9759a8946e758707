#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nkoop/core.hpp"
#include "nkoop/lifted_model.hpp"

namespace nkoop {

struct MpcConfig {
    int horizon = 10;
    Mat Q;       // N x N, PSD; empty -> identity
    Mat R_cost;  // m x m, PD; empty -> 1e-3 I
    bool terminal_cost = true;
    double u_min = 0.0;  // physical actuator bounds
    double u_max = 80.0;
    int max_steps = 40;
    double tol_position = 1.0;  // mm
    double tol_angle = 2.0;     // deg
    double pd_ridge = 1e-12;
    double kkt_tolerance = 1e-8;

    Mat q_matrix(Eigen::Index N) const { return Q.size() == 0 ? Mat(Mat::Identity(N, N)) : Q; }
    Mat r_matrix(Eigen::Index m) const { return R_cost.size() == 0 ? Mat(1e-3 * Mat::Identity(m, m)) : R_cost; }

    void check(Eigen::Index N, Eigen::Index m) const {
        if (horizon < 1) throw std::invalid_argument("MpcConfig: horizon must be >= 1");
        if (max_steps < 1) throw std::invalid_argument("MpcConfig: max_steps must be >= 1");
        const Mat q = q_matrix(N), r = r_matrix(m);
        require_dim(q.rows(), N, "MpcConfig Q");
        require_dim(q.cols(), N, "MpcConfig Q");
        require_dim(r.rows(), m, "MpcConfig R");
        require_dim(r.cols(), m, "MpcConfig R");
        if (!q.isApprox(q.transpose(), 1e-12) || !r.isApprox(r.transpose(), 1e-12)) {
            throw std::invalid_argument("MpcConfig: Q and R must be symmetric");
        }
        // PSD: the shifted matrix must admit a Cholesky factorization.
        const double shift = 1e-12 * std::max(1.0, q.diagonal().cwiseAbs().maxCoeff());
        if (Eigen::LLT<Mat>(q + shift * Mat::Identity(N, N)).info() != Eigen::Success) {
            throw std::invalid_argument("MpcConfig: Q must be positive semidefinite");
        }
        if (Eigen::LLT<Mat>(r).info() != Eigen::Success && r.norm() != 0.0) {
            throw std::invalid_argument("MpcConfig: R must be positive definite");
        }
    }
};

struct InputBox {
    Vec lower, upper;
};

struct MpcSolution {
    std::vector<Vec> inputs;  // u~*_0 .. u~*_{H-1}
    std::vector<Vec> lifted;  // gamma_0 .. gamma_H
    double objective = 0.0;
    double kkt_residual = 0.0;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Stacked-dynamics quadratic: J(U) = U'HU + 2g'U + c with gamma = Sx gamma0 + Su U.
struct CondensedQp {
    Mat hessian;
    Vec gradient;
    double constant = 0.0;
    Mat Sx, Su;
    Mat Qbar;
    Vec target;  // stacked gamma_des_1..H

    double objective(const Vec& U) const { return U.dot(hessian * U) + 2.0 * gradient.dot(U) + constant; }
};

inline CondensedQp condense(const Vec& gamma0, const std::vector<Vec>& gamma_des, const Mat& A, const Mat& B,
                            const Mat& Q, const Mat& R, int H, bool terminal) {
    const Eigen::Index N = A.rows(), m = B.cols();
    require_dim(A.cols(), N, "condense A");
    require_dim(B.rows(), N, "condense B");
    require_dim(gamma0.size(), N, "condense gamma0");
    if (static_cast<int>(gamma_des.size()) != H + 1) {
        throw DimensionError("condense: need H + 1 desired lifted states");
    }
    CondensedQp qp;
    qp.Sx = Mat::Zero(H * N, N);
    qp.Su = Mat::Zero(H * N, H * m);
    Mat power = Mat::Identity(N, N);
    std::vector<Mat> ApB;  // A^k B
    for (int i = 0; i < H; ++i) {
        ApB.push_back(power * B);
        power = A * power;
        qp.Sx.middleRows(i * N, N) = power;
    }
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j <= i; ++j) qp.Su.block(i * N, j * m, N, m) = ApB[static_cast<std::size_t>(i - j)];
    }
    qp.Qbar = Mat::Zero(H * N, H * N);
    qp.target.resize(H * N);
    for (int i = 0; i < H; ++i) {
        const bool last = i == H - 1;
        if (!last || terminal) qp.Qbar.block(i * N, i * N, N, N) = Q;
        require_dim(gamma_des[static_cast<std::size_t>(i + 1)].size(), N, "condense gamma_des");
        qp.target.segment(i * N, N) = gamma_des[static_cast<std::size_t>(i + 1)];
    }
    Mat Rbar = Mat::Zero(H * m, H * m);
    for (int i = 0; i < H; ++i) Rbar.block(i * m, i * m, m, m) = R;
    const Vec free = qp.Sx * gamma0 - qp.target;
    const Vec e0 = gamma0 - gamma_des[0];
    qp.hessian = qp.Su.transpose() * qp.Qbar * qp.Su + Rbar;
    qp.hessian = 0.5 * (qp.hessian + qp.hessian.transpose());
    qp.gradient = qp.Su.transpose() * (qp.Qbar * free);
    qp.constant = free.dot(qp.Qbar * free) + e0.dot(Q * e0);
    return qp;
}

namespace detail {

inline Vec project(const Vec& U, const InputBox& box) { return U.cwiseMax(box.lower).cwiseMin(box.upper); }

// ||U - P(U - grad)||_inf with grad = H U + g (half the true gradient).
inline double kkt_residual(const Mat& H, const Vec& g, const Vec& U, const std::optional<InputBox>& box) {
    const Vec grad = H * U + g;
    if (!box) return grad.cwiseAbs().maxCoeff();
    return (U - project(U - grad, *box)).cwiseAbs().maxCoeff();
}

// Projected Newton for min U'HU + 2g'U over a box.
inline Vec solve_box_qp(const Mat& H, const Vec& g, const InputBox& box, Vec U, double tol) {
    const Eigen::Index n = U.size();
    U = project(U, box);
    auto f = [&](const Vec& v) { return v.dot(H * v) + 2.0 * g.dot(v); };
    for (int it = 0; it < 500; ++it) {
        const Vec grad = H * U + g;
        if ((U - project(U - grad, box)).cwiseAbs().maxCoeff() < tol) break;
        const double eps = std::min(1e-9, (U - project(U - grad, box)).cwiseAbs().maxCoeff());
        std::vector<Eigen::Index> free_idx;
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool at_lower = U(i) <= box.lower(i) + eps && grad(i) > 0.0;
            const bool at_upper = U(i) >= box.upper(i) - eps && grad(i) < 0.0;
            if (!at_lower && !at_upper) free_idx.push_back(i);
        }
        Vec dir = Vec::Zero(n);
        if (!free_idx.empty()) {
            const auto nf = static_cast<Eigen::Index>(free_idx.size());
            Mat Hf(nf, nf);
            Vec gf(nf);
            for (Eigen::Index a = 0; a < nf; ++a) {
                gf(a) = grad(free_idx[static_cast<std::size_t>(a)]);
                for (Eigen::Index b = 0; b < nf; ++b) {
                    Hf(a, b) = H(free_idx[static_cast<std::size_t>(a)], free_idx[static_cast<std::size_t>(b)]);
                }
            }
            const Vec step = Hf.ldlt().solve(-gf);
            for (Eigen::Index a = 0; a < nf; ++a) dir(free_idx[static_cast<std::size_t>(a)]) = step(a);
        }
        // Armijo search along the projected arc; fall back to a projected gradient step.
        const double f0 = f(U);
        double t = 1.0;
        Vec next = project(U + dir, box);
        while (f(next) > f0 - 1e-12 * std::abs(f0) && t > 1e-10) {
            t *= 0.5;
            next = project(U + t * dir, box);
        }
        if (!(f(next) < f0) || dir.isZero()) {
            const double L = H.diagonal().cwiseAbs().sum() + 1e-300;
            next = project(U - grad / L, box);
            if (!(f(next) <= f0)) break;
        }
        if ((next - U).cwiseAbs().maxCoeff() == 0.0) break;
        U = next;
    }
    return U;
}

}  // namespace detail

/// Finite-horizon lifted-space QP: minimize the tracking cost of gamma_1..H
/// (terminal term included when configured) plus input cost, subject to
/// gamma_{i+1} = A gamma_i + B u~_i. Solved in condensed form by a symmetric
/// factorization; with `box` the solution is refined on the box-constrained
/// quadratic until the projected KKT residual drops below the tolerance.
inline MpcSolution solve_lifted_qp(const Vec& gamma0, const std::vector<Vec>& gamma_des, const Mat& A, const Mat& B,
                                   const MpcConfig& cfg, const std::optional<InputBox>& box = std::nullopt) {
    const Eigen::Index N = A.rows(), m = B.cols();
    cfg.check(N, m);
    const int H = cfg.horizon;
    const Mat Q = cfg.q_matrix(N), R = cfg.r_matrix(m);
    std::vector<Vec> des = gamma_des;
    if (des.size() == 1) des.assign(static_cast<std::size_t>(H + 1), gamma_des.front());
    const CondensedQp qp = condense(gamma0, des, A, B, Q, R, H, cfg.terminal_cost);
    const Mat hess = qp.hessian + cfg.pd_ridge * Mat::Identity(H * m, H * m);

    Eigen::SelfAdjointEigenSolver<Mat> eig(hess);
    const double lmax = eig.eigenvalues().cwiseAbs().maxCoeff();
    const double lmin = eig.eigenvalues()(0);
    if (!(lmin > 1e-10 * std::max(1.0, lmax))) {
        const Vec dir = eig.eigenvectors().col(0);
        Eigen::Index idx = 0;
        dir.cwiseAbs().maxCoeff(&idx);
        std::ostringstream msg;
        msg << "lifted QP Hessian is not positive definite (min eigenvalue " << lmin
            << "); weakest direction is dominated by input " << idx % m << " at horizon step " << idx / m;
        throw SolverError(msg.str());
    }

    const Eigen::LDLT<Mat> ldlt(hess);
    Vec U = ldlt.solve(-qp.gradient);
    std::optional<InputBox> stacked;
    if (box) {
        stacked = InputBox{Vec(H * m), Vec(H * m)};
        for (int i = 0; i < H; ++i) {
            stacked->lower.segment(i * m, m) = box->lower;
            stacked->upper.segment(i * m, m) = box->upper;
        }
        if ((U.array() < stacked->lower.array()).any() || (U.array() > stacked->upper.array()).any()) {
            U = detail::solve_box_qp(hess, qp.gradient, *stacked, U, 0.1 * cfg.kkt_tolerance);
        }
    }
    MpcSolution sol;
    sol.kkt_residual = detail::kkt_residual(hess, qp.gradient, U, stacked);
    sol.objective = qp.objective(U);
    sol.lifted.push_back(gamma0);
    for (int i = 0; i < H; ++i) {
        sol.inputs.push_back(U.segment(i * m, m));
        sol.lifted.push_back(A * sol.lifted.back() + B * sol.inputs.back());
    }
    return sol;
}

struct ControlEvent {
    int step = 0;
    Vec u_cmd;
    Vec x_believed;
    Vec x_true;
    double objective = 0.0;
    bool saturated = false;
};

struct ControlLog {
    std::vector<ControlEvent> events;
    bool converged = false;
    std::string failure;  // empty on success

    std::size_t size() const { return events.size(); }
    double saturation_rate() const {
        if (events.empty()) return 0.0;
        const auto n = std::count_if(events.begin(), events.end(), [](const ControlEvent& e) { return e.saturated; });
        return static_cast<double>(n) / static_cast<double>(events.size());
    }
};

inline nlohmann::json to_json(const ControlEvent& e) {
    auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    return {{"step", e.step},         {"u_cmd", vec(e.u_cmd)},         {"x_believed", vec(e.x_believed)},
            {"x_true", vec(e.x_true)}, {"objective", e.objective}, {"saturated", e.saturated}};
}

inline void write_control_log(std::ostream& os, const ControlLog& log) {
    for (const ControlEvent& e : log.events) os << to_json(e).dump() << '\n';
}

/// Something the open-loop runner can drive: `step(u)` applies one input and
/// returns the measurement, `true_state()` reports the noise-free state.
template <class P>
concept PlantLike = requires(P& plant, const Vec& u) {
    { plant.step(u) } -> std::convertible_to<Vec>;
    { plant.true_state() } -> std::convertible_to<Vec>;
};

struct DecodedInput {
    Vec u;
    bool saturated = false;
};

/// Executable input from the optimal lifted input, clamped to the actuator bounds.
template <LiftedModel M>
DecodedInput decode_input(const M& model, const Vec& x_believed, const Vec& u_lifted, double u_min, double u_max) {
    const Vec raw = model.decode_input(x_believed, u_lifted);
    DecodedInput out{raw.cwiseMax(u_min).cwiseMin(u_max), false};
    out.saturated = (out.u - raw).cwiseAbs().maxCoeff() > 1e-9;
    return out;
}

/// Position (first two components) within tol_position and angle (third) within tol_angle.
inline bool within_tolerance(const Vec& x, const Vec& target, double tol_position, double tol_angle) {
    const Vec d = x - target;
    const Eigen::Index np = std::min<Eigen::Index>(2, d.size());
    if (d.head(np).norm() > tol_position) return false;
    return d.size() < 3 || std::abs(d(2)) <= tol_angle;
}

using EventObserver = std::function<void(const ControlEvent&)>;

/// Open-loop lifted MPC: lift the believed state, solve, decode and clamp the
/// first input, apply it to the plant, and advance the belief with the model's
/// own prediction. The plant measurement is never fed back.
template <LiftedModel M, PlantLike P>
ControlLog run_open_loop(const M& model, P& plant, const Vec& x0, const Vec& x_des, const MpcConfig& cfg,
                         const EventObserver& observer = {}) {
    ControlLog log;
    const Mat& A = model.a_matrix();
    const Mat& B = model.b_matrix();
    const Eigen::Index m = B.cols();
    std::optional<InputBox> box;
    if (model.input_affine()) {
        const Vec lo = model.encode_input(x0, Vec::Constant(m, cfg.u_min));
        const Vec hi = model.encode_input(x0, Vec::Constant(m, cfg.u_max));
        box = InputBox{lo.cwiseMin(hi), lo.cwiseMax(hi)};
    }
    const std::vector<Vec> des{model.lift(x_des)};
    Vec x = x0;
    if (within_tolerance(x, x_des, cfg.tol_position, cfg.tol_angle)) {
        log.converged = true;
        return log;
    }
    for (int k = 0; k < cfg.max_steps; ++k) {
        const Vec gamma = model.lift(x);
        MpcSolution sol;
        try {
            sol = solve_lifted_qp(gamma, des, A, B, cfg, box);
        } catch (const std::exception& e) {
            throw SolverError("open-loop step " + std::to_string(k) + ": " + e.what());
        }
        const DecodedInput cmd = decode_input(model, x, sol.inputs.front(), cfg.u_min, cfg.u_max);
        const Vec applied = model.encode_input(x, cmd.u);
        const Vec gamma_next = model.step(gamma, applied);
        x = model.decode_state(gamma_next);
        plant.step(cmd.u);
        log.events.push_back({k, cmd.u, x, plant.true_state(), sol.objective, cmd.saturated});
        if (observer) observer(log.events.back());
        // Stop only if the model also stays at the target while the input is held.
        const Vec x_held = model.decode_state(model.step(gamma_next, model.encode_input(x, cmd.u)));
        if (within_tolerance(x, x_des, cfg.tol_position, cfg.tol_angle) &&
            within_tolerance(x_held, x_des, cfg.tol_position, cfg.tol_angle)) {
            log.converged = true;
            break;
        }
    }
    return log;
}

}  // namespace nkoop
