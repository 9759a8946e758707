#pragma once

#include <limits>
#include <string>
#include <vector>

#include "nkoop/core.hpp"

namespace nkoop {

enum class DictionaryKind { identity, monomial };

/// Ordered monomial exponent table over the state coordinates. The first n
/// entries are the coordinates themselves, then the constant, then the
/// remaining monomials by increasing degree. So C = [I_n 0].
class Dictionary {
public:
    static Dictionary identity(int n) { return Dictionary(DictionaryKind::identity, n, 1); }
    static Dictionary monomial(int n, int degree) { return Dictionary(DictionaryKind::monomial, n, degree); }

    DictionaryKind kind() const { return kind_; }
    int state_dim() const { return n_; }
    int degree() const { return degree_; }
    int size() const { return static_cast<int>(exponents_.size()); }
    const std::vector<std::vector<int>>& exponents() const { return exponents_; }

    Vec lift(const Vec& x) const {
        require_dim(x.size(), n_, "Dictionary::lift");
        Vec out(size());
        for (int k = 0; k < size(); ++k) {
            double v = 1.0;
            for (int i = 0; i < n_; ++i) {
                for (int p = 0; p < exponents_[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]; ++p) v *= x(i);
            }
            out(k) = v;
        }
        return out;
    }

    Mat projection() const {
        Mat c = Mat::Zero(n_, size());
        c.leftCols(n_).setIdentity();
        return c;
    }

    /// C(d + w, w), the number of monomials of degree <= w in d variables.
    static long long monomial_count(int d, int w) {
        long long r = 1;
        for (int i = 1; i <= w; ++i) r = r * (d + i) / i;
        return r;
    }

private:
    Dictionary(DictionaryKind kind, int n, int degree) : kind_(kind), n_(n), degree_(degree) {
        if (n < 1) throw std::invalid_argument("Dictionary: state dimension must be >= 1");
        if (degree < 1) throw std::invalid_argument("Dictionary: degree must be >= 1");
        for (int i = 0; i < n; ++i) {
            std::vector<int> e(static_cast<std::size_t>(n), 0);
            e[static_cast<std::size_t>(i)] = 1;
            exponents_.push_back(e);
        }
        if (kind == DictionaryKind::identity) return;
        exponents_.emplace_back(static_cast<std::size_t>(n), 0);
        for (int d = 2; d <= degree; ++d) append_degree(d);
    }

    // Exponent vectors summing to `d`, first coordinate's power descending.
    void append_degree(int d) {
        std::vector<int> e(static_cast<std::size_t>(n_), 0);
        auto rec = [&](auto&& self, int i, int left) -> void {
            if (i == n_ - 1) {
                e[static_cast<std::size_t>(i)] = left;
                exponents_.push_back(e);
                return;
            }
            for (int p = left; p >= 0; --p) {
                e[static_cast<std::size_t>(i)] = p;
                self(self, i + 1, left - p);
            }
        };
        rec(rec, 0, d);
    }

    DictionaryKind kind_;
    int n_;
    int degree_;
    std::vector<std::vector<int>> exponents_;
};

/// phi+ = A phi + B u in normalized coordinates; x = C phi.
struct LinearLiftedModel {
    Dictionary dictionary = Dictionary::identity(1);
    Mat A, B, C;
    Normalizer normalizer;

    int n() const { return dictionary.state_dim(); }
    int m() const { return static_cast<int>(B.cols()); }
    int lifted_dim() const { return dictionary.size(); }

    Vec lift(const Vec& x) const { return dictionary.lift(normalizer.normalize_state(x)); }
    Vec decode_state(const Vec& gamma) const { return normalizer.denormalize_state(C * gamma); }
    Vec encode_input(const Vec& /*x*/, const Vec& u) const { return normalizer.normalize_input(u); }
    Vec decode_input(const Vec& /*x*/, const Vec& u_lifted) const {
        return normalizer.denormalize_input(u_lifted);
    }
    bool input_affine() const { return true; }
    Vec step(const Vec& gamma, const Vec& u_lifted) const { return A * gamma + B * u_lifted; }
    const Mat& a_matrix() const { return A; }
    const Mat& b_matrix() const { return B; }
};

struct EdmdFitReport {
    double condition_number = 0.0;
    Eigen::Index rank = 0;
    bool rank_deficient = false;
    std::string warning;
};

struct EdmdOptions {
    double ridge = 1e-8;
    double rank_tolerance = 1e-10;  // relative singular value threshold
};

/// Rows [phi(x_i)', u_i'] -> [phi(x_i+)', u_i'] solved by a rank-revealing
/// orthogonal factorization; A and B are the upper blocks of the operator.
/// Snapshot columns are in physical units.
inline LinearLiftedModel fit_edmd(const SnapshotMatrices& snap, const Dictionary& dict, const Normalizer& normalizer,
                                  const EdmdOptions& opt = {}, EdmdFitReport* report = nullptr) {
    const int n = dict.state_dim();
    const int N = dict.size();
    const auto m = static_cast<int>(snap.U.rows());
    require_dim(snap.X.rows(), n, "fit_edmd states");
    require_dim(snap.Xn.rows(), n, "fit_edmd next states");
    require_dim(normalizer.state_dim(), n, "fit_edmd normalizer");
    require_dim(normalizer.input_dim(), m, "fit_edmd normalizer input");
    const Eigen::Index K = snap.X.cols();
    if (K < N + m) {
        throw std::invalid_argument("fit_edmd: need at least " + std::to_string(N + m) + " samples, got " +
                                    std::to_string(K));
    }
    const Eigen::Index extra = opt.ridge > 0.0 ? N + m : 0;
    Mat G = Mat::Zero(K + extra, N + m);
    Mat H = Mat::Zero(K + extra, N + m);
    for (Eigen::Index i = 0; i < K; ++i) {
        const Vec u = normalizer.normalize_input(snap.U.col(i));
        G.row(i) << dict.lift(normalizer.normalize_state(snap.X.col(i))).transpose(), u.transpose();
        H.row(i) << dict.lift(normalizer.normalize_state(snap.Xn.col(i))).transpose(), u.transpose();
    }
    if (extra > 0) G.bottomRows(extra) = std::sqrt(opt.ridge) * Mat::Identity(extra, N + m);

    const Eigen::BDCSVD<Mat> svd(G.topRows(K));
    const Vec& sv = svd.singularValues();
    const double smax = sv(0), smin = sv(sv.size() - 1);
    EdmdFitReport rep;
    rep.condition_number = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    rep.rank = (sv.array() > opt.rank_tolerance * smax).count();
    rep.rank_deficient = rep.rank < N + m;
    if (rep.rank_deficient) {
        rep.warning = "G is rank deficient (rank " + std::to_string(rep.rank) + " of " + std::to_string(N + m) +
                      ", condition number " + std::to_string(rep.condition_number) + "); using pseudo-inverse";
    }

    Eigen::CompleteOrthogonalDecomposition<Mat> cod(G);
    cod.setThreshold(opt.rank_tolerance);
    const Mat op = cod.solve(H).transpose();  // column convention: [phi+; u] = op [phi; u]

    LinearLiftedModel model;
    model.dictionary = dict;
    model.A = op.topLeftCorner(N, N);
    model.B = op.topRightCorner(N, m);
    model.C = dict.projection();
    model.normalizer = normalizer;
    if (!model.A.allFinite() || !model.B.allFinite()) throw std::runtime_error("fit_edmd: non-finite operator");
    if (report) *report = rep;
    return model;
}

inline LinearLiftedModel fit_edmd(const Dataset& data, const Dictionary& dict, const Normalizer& normalizer,
                                  const EdmdOptions& opt = {}, EdmdFitReport* report = nullptr) {
    return fit_edmd(snapshots(data, dict.state_dim()), dict, normalizer, opt, report);
}

inline LinearLiftedModel fit_edmd(const Dataset& data, const Dictionary& dict) {
    return fit_edmd(data, dict, Normalizer::identity(dict.state_dim(), 2));
}

/// Multi-step rollout in lifted space. With `relift` the decoded state is
/// lifted again before each step.
inline std::vector<Vec> predict(const LinearLiftedModel& model, const Vec& x0, const std::vector<Vec>& inputs,
                                bool relift = false) {
    if (inputs.empty()) throw std::invalid_argument("predict: steps must be >= 1");
    std::vector<Vec> out;
    Vec gamma = model.lift(x0);
    for (const Vec& u : inputs) {
        gamma = model.step(gamma, model.encode_input(Vec(), u));
        Vec x = model.decode_state(gamma);
        out.push_back(x);
        if (relift) gamma = model.lift(x);
    }
    return out;
}

inline std::vector<Vec> predict(const LinearLiftedModel& model, const Vec& x0, const Vec& u, int steps,
                                bool relift = false) {
    if (steps < 1) throw std::invalid_argument("predict: steps must be >= 1");
    return predict(model, x0, std::vector<Vec>(static_cast<std::size_t>(steps), u), relift);
}

}  // namespace nkoop
