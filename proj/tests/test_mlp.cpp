#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "nkoop/mlp.hpp"

using namespace nkoop;

TEST(Mlp, IdentityLayer) {
    const Mlp net({DenseLayer{Mat::Identity(3, 3), Vec::Zero(3), Activation::linear}});
    const Vec v = Eigen::Vector3d(1.0, -2.0, 0.5);
    EXPECT_EQ(net.forward(v), v);
}

TEST(Mlp, AffineScalar) {
    const Mlp net({DenseLayer{Mat::Constant(1, 1, 2.0), Vec::Constant(1, 1.0), Activation::linear}});
    EXPECT_DOUBLE_EQ(net.forward(Vec(Vec::Constant(1, 3.0)))(0), 7.0);
}

TEST(Mlp, TanhIsOddAtZero) {
    std::mt19937_64 rng(1);
    Mlp net = Mlp::make({4, 6, 2}, Activation::tanh, rng);
    for (DenseLayer& l : net.layers()) l.b.setZero();
    EXPECT_EQ(net.forward(Vec(Vec::Zero(4))).norm(), 0.0);
}

TEST(Mlp, ShapeErrors) {
    std::mt19937_64 rng(1);
    const Mlp net = Mlp::make({3, 5, 2}, Activation::tanh, rng);
    EXPECT_EQ(net.input_dim(), 3);
    EXPECT_EQ(net.output_dim(), 2);
    EXPECT_THROW(net.forward(Vec(Vec::Zero(2))), DimensionError);
    EXPECT_THROW(Mlp({DenseLayer{Mat::Zero(2, 3), Vec::Zero(3), Activation::linear}}), DimensionError);
}

TEST(Mlp, ForwardDeterministic) {
    std::mt19937_64 a(4), b(4);
    const Mlp n1 = Mlp::make({3, 16, 16, 5}, Activation::tanh, a);
    const Mlp n2 = Mlp::make({3, 16, 16, 5}, Activation::tanh, b);
    const Mat X = Mat::Random(3, 7);
    EXPECT_EQ(n1.forward(X), n2.forward(X));
    EXPECT_EQ(n1.forward(X), n1.forward(X));
}

TEST(Mlp, LinearLayerGradientIsOuterProduct) {
    std::mt19937_64 rng(2);
    const Mlp net = Mlp::make({3, 2}, Activation::tanh, rng);
    const Vec v = Eigen::Vector3d(0.5, -1.0, 2.0);
    const Vec up = Eigen::Vector2d(3.0, -0.25);
    Mlp::Cache cache;
    Mlp::Grads g = net.zero_grads();
    net.forward(Mat(v), cache);
    const Mat dx = net.backward(cache, Mat(up), g);
    EXPECT_LT((g.dW[0] - up * v.transpose()).norm(), 1e-15);
    EXPECT_LT((g.db[0] - up).norm(), 1e-15);
    EXPECT_LT((dx - net.layers()[0].W.transpose() * up).norm(), 1e-15);
}

TEST(Mlp, ZeroUpstreamGivesZeroGradients) {
    std::mt19937_64 rng(3);
    const Mlp net = Mlp::make({4, 8, 8, 3}, Activation::tanh, rng);
    Mlp::Cache cache;
    Mlp::Grads g = net.zero_grads();
    net.forward(Mat::Random(4, 5), cache);
    net.backward(cache, Mat::Zero(3, 5), g);
    for (const Mat& w : g.dW) EXPECT_EQ(w.norm(), 0.0);
    for (const Vec& b : g.db) EXPECT_EQ(b.norm(), 0.0);
}

TEST(Mlp, FiniteDifferenceGradients) {
    std::mt19937_64 rng(5);
    for (Activation act : {Activation::tanh, Activation::linear}) {
        Mlp net = Mlp::make({3, 12, 12, 4}, act, rng);
        const Mat X = Mat::Random(3, 9), G = Mat::Random(4, 9);
        for (const auto& c : gradcheck::check_mlp(net, X, G, 64, 1e-5, 11)) {
            EXPECT_LT(c.max_rel_error, 1e-4) << c.name << " (" << to_string(act) << ")";
        }
    }
}

TEST(Mlp, InputGradientMatchesFiniteDifference) {
    std::mt19937_64 rng(6);
    const Mlp net = Mlp::make({3, 10, 2}, Activation::tanh, rng);
    const Mat X = Mat::Random(3, 1), G = Mat::Random(2, 1);
    Mlp::Cache cache;
    Mlp::Grads g = net.zero_grads();
    net.forward(X, cache);
    const Mat dx = net.backward(cache, G, g);
    for (int i = 0; i < 3; ++i) {
        Mat xp = X, xm = X;
        xp(i, 0) += 1e-5;
        xm(i, 0) -= 1e-5;
        const double num = ((net.forward(xp) - net.forward(xm)).array() * G.array()).sum() / 2e-5;
        EXPECT_LT(gradcheck::relative_error(dx(i, 0), num), 1e-6);
    }
}

TEST(Adam, MinimizesQuadratic) {
    Vec p = Eigen::Vector2d(5.0, -4.0), g = Vec::Zero(2);
    const Vec target = Eigen::Vector2d(3.0, 1.0);
    Adam opt({{p.data(), p.size()}}, {0.05, 0.9, 0.999, 1e-8});
    for (int it = 0; it < 2000; ++it) {
        g = 2.0 * (p - target);
        opt.step({{g.data(), g.size()}});
    }
    EXPECT_LT((p - target).norm(), 1e-3);
}

TEST(Adam, FirstStepHasLearningRateMagnitude) {
    Vec p = Vec::Zero(3), g = Eigen::Vector3d(10.0, -0.001, 3.0);
    Adam opt({{p.data(), p.size()}}, {0.01, 0.9, 0.999, 1e-8});
    opt.step({{g.data(), g.size()}});
    EXPECT_NEAR(p(0), -0.01, 1e-6);
    EXPECT_NEAR(p(1), 0.01, 1e-4);
    EXPECT_NEAR(p(2), -0.01, 1e-6);
}
