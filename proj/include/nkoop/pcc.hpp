#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "nkoop/core.hpp"

namespace nkoop::pcc {

/// a*q^2 + b*q + c
struct Quadratic {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;

    constexpr double operator()(double q) const { return (a * q + b) * q + c; }
    constexpr double derivative(double q) const { return 2.0 * a * q + b; }

    friend bool operator==(const Quadratic&, const Quadratic&) = default;
};

/// Joint-space parameters of the two bending segments. Angles in radians.
struct JointParams {
    double theta1 = 0.0;
    double theta2 = 0.0;
    double l1 = 0.0;
    double l2 = 0.0;

    Eigen::Vector4d as_vector() const { return {theta1, theta2, l1, l2}; }
    static JointParams from_vector(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }
};

/// Rigid planar transform. The rotation maps a child frame's (lateral, axial)
/// axes into the parent: axial (0,1) -> (sin a, cos a).
class PlanarTransform {
public:
    PlanarTransform() = default;
    PlanarTransform(double angle, Eigen::Vector2d translation) : angle_(angle), t_(translation) {}

    static PlanarTransform straight(double h) { return {0.0, Eigen::Vector2d(0.0, h)}; }

    /// Circular arc of length l turning by theta (rad), lateral term (1 - cos).
    static PlanarTransform bend(double theta, double l) { return {theta, arc_tip(theta, l)}; }

    static Eigen::Vector2d arc_tip(double theta, double l) {
        if (std::abs(theta) < 1e-6) {
            const double t2 = theta * theta;
            return {l * theta * (0.5 - t2 / 24.0), l * (1.0 - t2 / 6.0 + t2 * t2 / 120.0)};
        }
        const double half = std::sin(0.5 * theta);
        return {2.0 * l * half * half / theta, l / theta * std::sin(theta)};
    }

    Eigen::Matrix2d rotation() const {
        const double c = std::cos(angle_), s = std::sin(angle_);
        Eigen::Matrix2d r;
        r << c, s, -s, c;
        return r;
    }

    PlanarTransform operator*(const PlanarTransform& rhs) const {
        return {angle_ + rhs.angle_, t_ + rotation() * rhs.t_};
    }

    Eigen::Vector2d apply(const Eigen::Vector2d& p) const { return t_ + rotation() * p; }

    double angle() const { return angle_; }
    const Eigen::Vector2d& translation() const { return t_; }

private:
    double angle_ = 0.0;
    Eigen::Vector2d t_ = Eigen::Vector2d::Zero();
};

/// Straight offsets between and around the two bending segments.
struct Offsets {
    double h1 = 0.0;
    double h2 = 0.0;
    double h3 = 0.0;
};

/// Tip pose of  S(h1) B1 S(h2) B2 S(h3); theta in degrees.
inline RobotState tip_pose(const JointParams& j, const Offsets& h) {
    const PlanarTransform t = PlanarTransform::straight(h.h1) * PlanarTransform::bend(j.theta1, j.l1) *
                              PlanarTransform::straight(h.h2) * PlanarTransform::bend(j.theta2, j.l2) *
                              PlanarTransform::straight(h.h3);
    return {t.translation().x(), t.translation().y(), rad2deg(t.angle())};
}

/// Pressure-to-joint maps: theta1 = f1(q1), l1 = f2(q1), theta2 = f3(q2), l2 = f4(q2).
/// Bending maps return degrees, length maps millimeters.
struct JointMaps {
    Quadratic f1, f2, f3, f4;

    JointParams operator()(double q1, double q2) const {
        return {deg2rad(f1(q1)), deg2rad(f3(q2)), f2(q1), f4(q2)};
    }

    /// d(theta1, theta2, l1, l2)/d(q1, q2), angles in rad/kPa.
    Eigen::Matrix<double, 4, 2> derivative(double q1, double q2) const {
        Eigen::Matrix<double, 4, 2> d = Eigen::Matrix<double, 4, 2>::Zero();
        d(0, 0) = deg2rad(f1.derivative(q1));
        d(1, 1) = deg2rad(f3.derivative(q2));
        d(2, 0) = f2.derivative(q1);
        d(3, 1) = f4.derivative(q2);
        return d;
    }
};

struct PccParams {
    JointMaps maps;
    Offsets offsets;
    double u_min = 0.0;
    double u_max = 80.0;
    double damping = 1e-2;
    Mat gain = Mat::Identity(3, 3);  // P, sized to the task dimension
    int step_budget = 100;

    void check() const {
        if (!(damping > 0.0)) throw ValidationError("PccParams: damping must be positive");
        if (!(u_min < u_max)) throw ValidationError("PccParams: u_min must be below u_max");
        if (gain.rows() != gain.cols()) throw ValidationError("PccParams: gain must be square");
        if (!gain.isApprox(gain.transpose(), 1e-12)) throw ValidationError("PccParams: gain must be symmetric");
        Eigen::LLT<Mat> llt(gain);
        if (llt.info() != Eigen::Success) throw ValidationError("PccParams: gain must be positive definite");
        for (int i = 0; i <= 20; ++i) {
            const double q = u_min + (u_max - u_min) * i / 20.0;
            if (!(maps.f2(q) > 0.0) || !(maps.f4(q) > 0.0)) {
                throw ValidationError("PccParams: segment length must stay positive over the pressure range");
            }
        }
    }
};

inline RobotState fk(const ControlInput& q, const PccParams& p) {
    return tip_pose(p.maps(q.u1, q.u2), p.offsets);
}

/// Task-space Jacobian (dim x 2; rows mm or deg per kPa). The joint-to-pose
/// part uses central differences on the joint parameters, the pressure-to-joint
/// part is analytic.
inline Mat jacobian(const ControlInput& q, const PccParams& p, int dim, double step = 1e-6) {
    const JointParams j = p.maps(q.u1, q.u2);
    const Eigen::Vector4d base = j.as_vector();
    Mat dpose(dim, 4);
    for (int k = 0; k < 4; ++k) {
        Eigen::Vector4d hi = base, lo = base;
        hi(k) += step;
        lo(k) -= step;
        const Vec fp = tip_pose(JointParams::from_vector(hi), p.offsets).to_vector(dim);
        const Vec fm = tip_pose(JointParams::from_vector(lo), p.offsets).to_vector(dim);
        dpose.col(k) = (fp - fm) / (2.0 * step);
    }
    return dpose * p.maps.derivative(q.u1, q.u2);
}

/// Minimizer of |J dq - P dx|^2 + damping |dq|^2.
inline Vec dls_step(const Mat& J, const Vec& dx_des, const Mat& P, double damping) {
    require_dim(dx_des.size(), J.rows(), "dls_step target");
    require_dim(P.rows(), J.rows(), "dls_step gain");
    const Mat normal = J.transpose() * J + damping * Mat::Identity(J.cols(), J.cols());
    return normal.ldlt().solve(J.transpose() * (P * dx_des));
}

}  // namespace nkoop::pcc
