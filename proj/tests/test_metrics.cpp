#include <gtest/gtest.h>

#include <random>

#include "nkoop/metrics.hpp"

using namespace nkoop;

TEST(Metrics, HandCase) {
    const ErrorStats s = error_stats({3.0, 4.0});
    EXPECT_DOUBLE_EQ(s.avg, 3.5);
    EXPECT_DOUBLE_EQ(s.std, 0.5);
    EXPECT_DOUBLE_EQ(s.max, 4.0);
    EXPECT_EQ(s.count, 2u);
}

TEST(Metrics, IdenticalSeries) {
    const Mat a = Mat::Random(3, 10);
    EXPECT_EQ(rmse(a, a), Vec::Zero(3));
    EXPECT_EQ(accuracy(a, a, Vec::Ones(3), 0.05), Vec::Ones(3));
    const ErrorStats s = error_stats(std::vector<double>(10, 0.0));
    EXPECT_EQ(s.avg, 0.0);
    EXPECT_EQ(s.std, 0.0);
    EXPECT_EQ(s.max, 0.0);
}

TEST(Metrics, EuclideanThreshold) {
    // sigma = 0.05 * hypot(30, 40) = 2.5 mm
    EXPECT_DOUBLE_EQ(target_accuracy({2.5, 2.5000001, 0.1, 9.0}, 30.0, 40.0, 0.05), 0.5);
}

TEST(Metrics, PerDimensionThreshold) {
    Mat pred(2, 4), truth = Mat::Zero(2, 4);
    pred << 0.5, 1.5, 0.9, 3.0,  //
        0.0, 0.0, 0.0, 10.0;
    const Vec acc = accuracy(pred, truth, Eigen::Vector2d(20.0, 100.0), 0.05);  // sigma (1, 5)
    EXPECT_DOUBLE_EQ(acc(0), 0.5);
    EXPECT_DOUBLE_EQ(acc(1), 0.75);
}

TEST(Metrics, SingleElement) {
    const Mat pred = Mat::Constant(1, 1, 2.0), truth = Mat::Constant(1, 1, -1.5);
    EXPECT_DOUBLE_EQ(rmse(pred, truth)(0), 3.5);
    const ErrorStats s = error_stats({3.5});
    EXPECT_EQ(s.std, 0.0);
    EXPECT_EQ(s.avg, s.max);
}

TEST(Metrics, AccuracyMonotoneInThreshold) {
    std::mt19937_64 rng(1);
    std::exponential_distribution<double> e(0.3);
    std::vector<double> errs(200);
    for (double& v : errs) v = e(rng);
    const Mat pred = Mat::NullaryExpr(2, 200, [&] { return e(rng); }), truth = Mat::Zero(2, 200);
    double prev = -1.0;
    Vec prev_dim = Vec::Constant(2, -1.0);
    for (double p = 0.0; p <= 0.5; p += 0.005) {
        const double a = target_accuracy(errs, 30.0, 40.0, p);
        EXPECT_GE(a, prev);
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
        prev = a;
        const Vec ad = accuracy(pred, truth, Eigen::Vector2d(10.0, 10.0), p);
        EXPECT_TRUE((ad.array() >= prev_dim.array()).all());
        prev_dim = ad;
    }
}

TEST(Metrics, StatsInvariants) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> d(0.0, 10.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> v(1 + t);
        for (double& x : v) x = d(rng);
        const ErrorStats s = error_stats(v);
        EXPECT_GE(s.std, 0.0);
        EXPECT_GE(s.max, s.avg);
    }
}

TEST(Metrics, RmsePerDimension) {
    Mat pred(2, 2), truth = Mat::Zero(2, 2);
    pred << 3.0, 4.0, 1.0, -1.0;
    const Vec r = rmse(pred, truth);
    EXPECT_DOUBLE_EQ(r(0), std::sqrt(12.5));
    EXPECT_DOUBLE_EQ(r(1), 1.0);
}

TEST(Metrics, EmptyInputThrows) {
    EXPECT_THROW(error_stats({}), std::invalid_argument);
    EXPECT_THROW(target_accuracy({}, 1.0, 1.0, 0.05), std::invalid_argument);
    EXPECT_THROW(rmse(Mat(2, 0), Mat(2, 0)), std::invalid_argument);
    EXPECT_THROW(accuracy(Mat(2, 0), Mat(2, 0), Vec::Ones(2), 0.05), std::invalid_argument);
    EXPECT_THROW(rmse(Mat::Zero(2, 3), Mat::Zero(2, 4)), DimensionError);
}
