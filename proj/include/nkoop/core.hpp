#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nkoop {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Thrown when vector/matrix shapes disagree with what an operation expects.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when data violates a domain invariant (chaining, bounds, finiteness).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) +
                             ", got " + std::to_string(got));
    }
}

/// Planar tip pose. Millimeters and degrees; theta is measured from the +y
/// (insertion) axis toward +x.
struct RobotState {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;

    /// First `dim` components (2 = position only, 3 = pose).
    Vec to_vector(int dim) const {
        if (dim != 2 && dim != 3) throw DimensionError("RobotState: dim must be 2 or 3");
        Vec v(dim);
        v(0) = x;
        v(1) = y;
        if (dim == 3) v(2) = theta;
        return v;
    }

    static RobotState from_vector(const Vec& v) {
        if (v.size() != 2 && v.size() != 3) throw DimensionError("RobotState: vector must have 2 or 3 entries");
        return {v(0), v(1), v.size() == 3 ? v(2) : 0.0};
    }

    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(theta); }
    bool valid() const { return finite() && theta > -90.0 && theta < 90.0; }

    friend bool operator==(const RobotState&, const RobotState&) = default;
};

/// Chamber pressures (kPa) plus the base stage offset along x (mm).
struct ControlInput {
    double u1 = 0.0;
    double u2 = 0.0;
    double stage = 0.0;

    Vec pressures() const { return Eigen::Vector2d(u1, u2); }

    static ControlInput from_pressures(const Vec& p, double stage = 0.0) {
        require_dim(p.size(), 2, "ControlInput");
        return {p(0), p(1), stage};
    }

    friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

struct Sample {
    RobotState state;
    ControlInput input;
    RobotState next_state;
    int trial_id = 0;
};

struct DatasetMeta {
    double sample_rate_hz = 2.0;
    int n_trials = 0;
    std::uint64_t seed = 0;
    int state_dim = 3;
};

/// Time-ordered samples; consecutive samples inside one trial chain
/// (next_state of k equals state of k+1). Trials are contiguous.
struct Dataset {
    std::vector<Sample> samples;
    DatasetMeta meta;

    std::size_t size() const { return samples.size(); }

    /// [begin, end) index ranges of each trial in order of appearance.
    std::vector<std::pair<std::size_t, std::size_t>> trial_ranges() const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        std::size_t start = 0;
        for (std::size_t i = 1; i <= samples.size(); ++i) {
            if (i == samples.size() || samples[i].trial_id != samples[start].trial_id) {
                if (i > start) out.emplace_back(start, i);
                start = i;
            }
        }
        return out;
    }

    /// Throws ValidationError naming the first offending sample index.
    void validate() const {
        std::vector<int> seen;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const Sample& s = samples[i];
            if (!s.state.finite() || !s.next_state.finite() || !std::isfinite(s.input.u1) ||
                !std::isfinite(s.input.u2) || !std::isfinite(s.input.stage)) {
                throw ValidationError("sample " + std::to_string(i) + ": non-finite value");
            }
            if (i == 0 || samples[i - 1].trial_id != s.trial_id) {
                for (int t : seen) {
                    if (t == s.trial_id) {
                        throw ValidationError("sample " + std::to_string(i) + ": trial " +
                                              std::to_string(s.trial_id) + " is not contiguous");
                    }
                }
                seen.push_back(s.trial_id);
                continue;
            }
            if (!(samples[i - 1].next_state == s.state)) {
                throw ValidationError("sample " + std::to_string(i) + ": chain break inside trial " +
                                      std::to_string(s.trial_id) +
                                      " (previous next_state differs from this state)");
            }
        }
    }

    /// Subset made of whole trials, in the given order.
    Dataset select_trials(const std::vector<int>& trial_ids) const {
        Dataset out;
        out.meta = meta;
        for (int id : trial_ids) {
            for (const Sample& s : samples) {
                if (s.trial_id == id) out.samples.push_back(s);
            }
        }
        out.meta.n_trials = static_cast<int>(trial_ids.size());
        return out;
    }

    std::vector<int> trial_ids() const {
        std::vector<int> ids;
        for (auto [b, e] : trial_ranges()) ids.push_back(samples[b].trial_id);
        return ids;
    }
};

/// Per-dimension affine standardization for states and inputs.
struct Normalizer {
    Vec state_mean, state_scale;
    Vec input_mean, input_scale;

    static Normalizer identity(int n, int m) {
        return {Vec::Zero(n), Vec::Ones(n), Vec::Zero(m), Vec::Ones(m)};
    }

    int state_dim() const { return static_cast<int>(state_mean.size()); }
    int input_dim() const { return static_cast<int>(input_mean.size()); }

    /// Mean/std over the dataset states (and next states) and pressures.
    static Normalizer fit(const Dataset& data, int n) {
        if (data.samples.empty()) throw ValidationError("Normalizer::fit: empty dataset");
        const auto count = static_cast<double>(data.samples.size());
        Vec sm = Vec::Zero(n), ss = Vec::Zero(n), um = Vec::Zero(2), us = Vec::Zero(2);
        for (const Sample& s : data.samples) {
            sm += s.state.to_vector(n);
            um += s.input.pressures();
        }
        sm /= count;
        um /= count;
        for (const Sample& s : data.samples) {
            ss += (s.state.to_vector(n) - sm).array().square().matrix();
            us += (s.input.pressures() - um).array().square().matrix();
        }
        ss = (ss / count).array().sqrt();
        us = (us / count).array().sqrt();
        for (Eigen::Index i = 0; i < ss.size(); ++i) if (!(ss(i) > 1e-12)) ss(i) = 1.0;
        for (Eigen::Index i = 0; i < us.size(); ++i) if (!(us(i) > 1e-12)) us(i) = 1.0;
        return {sm, ss, um, us};
    }

    void check() const {
        require_dim(state_scale.size(), state_mean.size(), "Normalizer state scale");
        require_dim(input_scale.size(), input_mean.size(), "Normalizer input scale");
        if ((state_scale.array() <= 0.0).any() || (input_scale.array() <= 0.0).any()) {
            throw ValidationError("Normalizer: scale must be positive");
        }
    }

    Vec normalize_state(const Vec& v) const {
        require_dim(v.size(), state_mean.size(), "normalize_state");
        return (v - state_mean).cwiseQuotient(state_scale);
    }
    Vec denormalize_state(const Vec& v) const {
        require_dim(v.size(), state_mean.size(), "denormalize_state");
        return v.cwiseProduct(state_scale) + state_mean;
    }
    Vec normalize_input(const Vec& v) const {
        require_dim(v.size(), input_mean.size(), "normalize_input");
        return (v - input_mean).cwiseQuotient(input_scale);
    }
    Vec denormalize_input(const Vec& v) const {
        require_dim(v.size(), input_mean.size(), "denormalize_input");
        return v.cwiseProduct(input_scale) + input_mean;
    }
};

/// Column-stacked states, inputs and next states of a dataset (physical units).
struct SnapshotMatrices {
    Mat X, U, Xn;
};

inline SnapshotMatrices snapshots(const Dataset& data, int n) {
    const auto k = static_cast<Eigen::Index>(data.samples.size());
    SnapshotMatrices out{Mat(n, k), Mat(2, k), Mat(n, k)};
    for (Eigen::Index i = 0; i < k; ++i) {
        const Sample& s = data.samples[static_cast<std::size_t>(i)];
        out.X.col(i) = s.state.to_vector(n);
        out.U.col(i) = s.input.pressures();
        out.Xn.col(i) = s.next_state.to_vector(n);
    }
    return out;
}

}  // namespace nkoop
