#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "nkoop/core.hpp"

namespace nkoop {

enum class Activation { linear, tanh };

inline std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "linear"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "linear") return Activation::linear;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

struct DenseLayer {
    Mat W;  // out x in
    Vec b;
    Activation act = Activation::linear;
};

/// Non-owning view of one trainable tensor, flattened.
struct ParamRef {
    double* data = nullptr;
    Eigen::Index size = 0;

    Eigen::Map<Vec> map() const { return {data, size}; }
};

/// Feedforward network acting on column batches. Hidden layers use the
/// configured activation; the last layer is always linear.
class Mlp {
public:
    struct Cache {
        std::vector<Mat> inputs;  // input to each layer
        std::vector<Mat> outputs; // post-activation output of each layer
    };

    struct Grads {
        std::vector<Mat> dW;
        std::vector<Vec> db;

        void set_zero() {
            for (Mat& g : dW) g.setZero();
            for (Vec& g : db) g.setZero();
        }

        std::vector<ParamRef> refs() {
            std::vector<ParamRef> out;
            for (std::size_t i = 0; i < dW.size(); ++i) {
                out.push_back({dW[i].data(), dW[i].size()});
                out.push_back({db[i].data(), db[i].size()});
            }
            return out;
        }
    };

    Mlp() = default;
    explicit Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { check(); }

    /// Layer sizes {in, h1, ..., out}; uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init.
    static Mlp make(const std::vector<int>& sizes, Activation hidden, std::mt19937_64& rng) {
        if (sizes.size() < 2) throw std::invalid_argument("Mlp::make: need at least input and output sizes");
        std::vector<DenseLayer> layers;
        for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[i]));
            std::uniform_real_distribution<double> dist(-bound, bound);
            DenseLayer l;
            l.W = Mat::NullaryExpr(sizes[i + 1], sizes[i], [&] { return dist(rng); });
            l.b = Vec::NullaryExpr(sizes[i + 1], [&] { return dist(rng); });
            l.act = i + 2 == sizes.size() ? Activation::linear : hidden;
            layers.push_back(std::move(l));
        }
        return Mlp(std::move(layers));
    }

    int input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().W.cols()); }
    int output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().W.rows()); }
    bool empty() const { return layers_.empty(); }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }

    Mat forward(const Mat& X) const {
        require_dim(X.rows(), input_dim(), "Mlp::forward");
        Mat a = X;
        for (const DenseLayer& l : layers_) {
            Mat z = l.W * a;
            z.colwise() += l.b;
            if (l.act == Activation::tanh) z = z.array().tanh();
            a = std::move(z);
        }
        return a;
    }

    Vec forward(const Vec& v) const { return forward(Mat(v)).col(0); }

    Mat forward(const Mat& X, Cache& cache) const {
        require_dim(X.rows(), input_dim(), "Mlp::forward");
        cache.inputs.resize(layers_.size());
        cache.outputs.resize(layers_.size());
        const Mat* a = &X;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const DenseLayer& l = layers_[i];
            cache.inputs[i] = *a;
            Mat z = l.W * *a;
            z.colwise() += l.b;
            if (l.act == Activation::tanh) z = z.array().tanh();
            cache.outputs[i] = std::move(z);
            a = &cache.outputs[i];
        }
        return *a;
    }

    Grads zero_grads() const {
        Grads g;
        for (const DenseLayer& l : layers_) {
            g.dW.push_back(Mat::Zero(l.W.rows(), l.W.cols()));
            g.db.push_back(Vec::Zero(l.b.size()));
        }
        return g;
    }

    /// Accumulates parameter gradients into `grads`; returns dL/dX.
    Mat backward(const Cache& cache, const Mat& dY, Grads& grads) const {
        Mat delta = dY;
        for (std::size_t k = layers_.size(); k-- > 0;) {
            const DenseLayer& l = layers_[k];
            if (l.act == Activation::tanh) {
                delta.array() *= 1.0 - cache.outputs[k].array().square();
            }
            grads.dW[k].noalias() += delta * cache.inputs[k].transpose();
            grads.db[k] += delta.rowwise().sum();
            delta = l.W.transpose() * delta;
        }
        return delta;
    }

    std::vector<ParamRef> params() {
        std::vector<ParamRef> out;
        for (DenseLayer& l : layers_) {
            out.push_back({l.W.data(), l.W.size()});
            out.push_back({l.b.data(), l.b.size()});
        }
        return out;
    }

    bool all_finite() const {
        for (const DenseLayer& l : layers_) {
            if (!l.W.allFinite() || !l.b.allFinite()) return false;
        }
        return true;
    }

private:
    void check() const {
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            require_dim(layers_[i].b.size(), layers_[i].W.rows(), "Mlp bias");
            if (i > 0) require_dim(layers_[i].W.cols(), layers_[i - 1].W.rows(), "Mlp layer chain");
        }
    }

    std::vector<DenseLayer> layers_;
};

/// Adaptive moment estimation over a fixed list of tensors.
class Adam {
public:
    struct Options {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    Adam(std::vector<ParamRef> params, Options opt) : params_(std::move(params)), opt_(opt) {
        for (const ParamRef& p : params_) {
            m_.push_back(Vec::Zero(p.size));
            v_.push_back(Vec::Zero(p.size));
        }
    }

    void step(const std::vector<ParamRef>& grads) {
        if (grads.size() != params_.size()) throw DimensionError("Adam::step: gradient count mismatch");
        ++t_;
        const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            require_dim(grads[i].size, params_[i].size, "Adam::step");
            const auto g = grads[i].map();
            m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g;
            v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g.cwiseAbs2();
            params_[i].map().array() -=
                opt_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + opt_.eps);
        }
    }

private:
    std::vector<ParamRef> params_;
    Options opt_;
    std::vector<Vec> m_, v_;
    long long t_ = 0;
};

}  // namespace nkoop
