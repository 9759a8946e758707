#pragma once

#include <cmath>
#include <vector>

#include "nkoop/core.hpp"

namespace nkoop {

/// Per-dimension RMSE between columns of `pred` and `truth`.
inline Vec rmse(const Mat& pred, const Mat& truth) {
    require_dim(pred.rows(), truth.rows(), "rmse rows");
    require_dim(pred.cols(), truth.cols(), "rmse cols");
    if (pred.cols() == 0) throw std::invalid_argument("rmse: empty input");
    return ((pred - truth).array().square().rowwise().sum() / static_cast<double>(pred.cols())).sqrt();
}

/// Fraction of columns whose error is within sigma_d = p * range_d, per dimension.
inline Vec accuracy(const Mat& pred, const Mat& truth, const Vec& range, double p) {
    require_dim(pred.rows(), truth.rows(), "accuracy rows");
    require_dim(pred.cols(), truth.cols(), "accuracy cols");
    require_dim(range.size(), pred.rows(), "accuracy range");
    if (pred.cols() == 0) throw std::invalid_argument("accuracy: empty input");
    Vec out(pred.rows());
    for (Eigen::Index d = 0; d < pred.rows(); ++d) {
        const double sigma = p * range(d);
        out(d) = static_cast<double>(((pred.row(d) - truth.row(d)).array().abs() <= sigma).count()) /
                 static_cast<double>(pred.cols());
    }
    return out;
}

struct ErrorStats {
    double avg = 0.0;
    double std = 0.0;  // population
    double max = 0.0;
    std::size_t count = 0;
};

inline ErrorStats error_stats(const std::vector<double>& e) {
    if (e.empty()) throw std::invalid_argument("error_stats: empty input");
    ErrorStats s;
    s.count = e.size();
    for (double v : e) {
        s.avg += v;
        s.max = std::max(s.max, v);
    }
    s.avg /= static_cast<double>(e.size());
    for (double v : e) s.std += (v - s.avg) * (v - s.avg);
    s.std = std::sqrt(s.std / static_cast<double>(e.size()));
    return s;
}

/// Fraction of errors within p * diagonal, diagonal = sqrt(range_x^2 + range_y^2).
inline double target_accuracy(const std::vector<double>& e, double range_x, double range_y, double p) {
    if (e.empty()) throw std::invalid_argument("target_accuracy: empty input");
    const double sigma = p * std::hypot(range_x, range_y);
    std::size_t hit = 0;
    for (double v : e) hit += v <= sigma ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(e.size());
}

}  // namespace nkoop
