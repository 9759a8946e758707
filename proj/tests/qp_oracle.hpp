#pragma once

#include <random>
#include <vector>

#include "nkoop/edmd.hpp"
#include "nkoop/mpc.hpp"

namespace qp_oracle {

using namespace nkoop;

struct LinearPlant {
    Mat A, B;
    Vec x;
    Vec step(const Vec& u) {
        x = A * x + B * u;
        return x;
    }
    Vec true_state() const { return x; }
};

LinearLiftedModel linear_model(const Mat& A, const Mat& B) {
    LinearLiftedModel m;
    m.dictionary = Dictionary::identity(static_cast<int>(A.rows()));
    m.A = A;
    m.B = B;
    m.C = m.dictionary.projection();
    m.normalizer = Normalizer::identity(static_cast<int>(A.rows()), static_cast<int>(B.cols()));
    return m;
}

MpcConfig scalar_config(double r) {
    MpcConfig c;
    c.horizon = 1;
    c.Q = Mat::Ones(1, 1);
    c.R_cost = Mat::Constant(1, 1, r);
    return c;
}

struct Instance {
    Mat A, B, Q, R;
    Vec g0;
    std::vector<Vec> des;
    int H;
};

Instance random_instance(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> hN(1, 5), nN(1, 6), mN(1, 3);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Instance in;
    in.H = hN(rng);
    const int N = nN(rng), m = mN(rng);
    in.A = Mat::NullaryExpr(N, N, [&] { return d(rng); });
    in.B = Mat::NullaryExpr(N, m, [&] { return d(rng); });
    const Mat q = Mat::NullaryExpr(N, N, [&] { return d(rng); });
    in.Q = q * q.transpose();
    const Mat r = Mat::NullaryExpr(m, m, [&] { return d(rng); });
    in.R = r * r.transpose() + 0.1 * Mat::Identity(m, m);
    in.g0 = Vec::NullaryExpr(N, [&] { return d(rng); });
    for (int i = 0; i <= in.H; ++i) in.des.push_back(Vec::NullaryExpr(N, [&] { return d(rng); }));
    return in;
}

MpcConfig config_for(const Instance& in) {
    MpcConfig c;
    c.horizon = in.H;
    c.Q = in.Q;
    c.R_cost = in.R;
    c.pd_ridge = 0.0;
    return c;
}

// Equality-constrained QP over (gamma_1..H, u_0..H-1) solved through its KKT system.
std::vector<Vec> dense_solve(const Instance& in) {
    const Eigen::Index N = in.A.rows(), m = in.B.cols();
    const int H = in.H;
    const Eigen::Index nz = H * N + H * m, nc = H * N;
    Mat P = Mat::Zero(nz, nz);
    Vec p = Vec::Zero(nz);
    for (int i = 0; i < H; ++i) {
        P.block(i * N, i * N, N, N) = in.Q;
        p.segment(i * N, N) = -in.Q * in.des[static_cast<std::size_t>(i + 1)];
        P.block(H * N + i * m, H * N + i * m, m, m) = in.R;
    }
    Mat E = Mat::Zero(nc, nz);
    Vec e = Vec::Zero(nc);
    for (int i = 0; i < H; ++i) {
        E.block(i * N, i * N, N, N) = Mat::Identity(N, N);
        if (i > 0) E.block(i * N, (i - 1) * N, N, N) = -in.A;
        E.block(i * N, H * N + i * m, N, m) = -in.B;
    }
    e.head(N) = in.A * in.g0;
    Mat K = Mat::Zero(nz + nc, nz + nc);
    K.topLeftCorner(nz, nz) = P;
    K.topRightCorner(nz, nc) = E.transpose();
    K.bottomLeftCorner(nc, nz) = E;
    Vec rhs(nz + nc);
    rhs << -p, e;
    const Vec z = K.fullPivLu().solve(rhs);
    std::vector<Vec> u;
    for (int i = 0; i < H; ++i) u.push_back(z.segment(H * N + i * m, m));
    return u;
}

Vec stack(const std::vector<Vec>& v) {
    Eigen::Index n = 0;
    for (const Vec& x : v) n += x.size();
    Vec out(n);
    Eigen::Index o = 0;
    for (const Vec& x : v) {
        out.segment(o, x.size()) = x;
        o += x.size();
    }
    return out;
}

}  // namespace qp_oracle
