#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nkoop/core.hpp"
#include "nkoop/mlp.hpp"

namespace nkoop {

enum class Variant { nink, link };

inline std::string to_string(Variant v) { return v == Variant::nink ? "nink" : "link"; }

struct TrainConfig {
    int batch_size = 8;
    double learning_rate = 1e-3;
    int epochs = 200;
    int decoder_epochs = 200;
    int horizon = 4;  // R-step loss window
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double train_fraction = 0.8;  // share of whole trials used for training
    int lifted_dim = 30;
    int state_hidden = 128;
    int input_hidden = 32;
    int hidden_layers = 2;
    Activation activation = Activation::tanh;
    // Weight of the linear state readout from the predicted lifted states used
    // during the encoder stage; keeps the lifted space from collapsing to 0.
    double readout_weight = 1.0;

    void check() const {
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (horizon < 1) throw std::invalid_argument("TrainConfig: horizon must be >= 1");
        if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
            throw std::invalid_argument("TrainConfig: train_fraction must lie in (0, 1)");
        }
        if (epochs < 0 || decoder_epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
        if (lifted_dim < 1) throw std::invalid_argument("TrainConfig: lifted_dim must be >= 1");
    }
};

struct TrainMeta {
    std::vector<double> loss_curve;          // mean R-step lifted prediction loss per epoch
    std::vector<double> decoder_loss_curve;  // mean reconstruction loss per epoch
    Vec recon_rmse;                          // state decoder RMSE per dimension, physical units
    double input_roundtrip = std::numeric_limits<double>::quiet_NaN();  // mean |u - dec_u(x, enc_u(x, u))|, kPa
};

/// Encoders, lifted linear dynamics and decoders. All networks act on
/// normalized states/inputs; the public methods take physical units.
struct NeuralKoopmanModel {
    Variant variant = Variant::nink;
    int n = 3, m = 2, N = 30;
    Mlp enc_x;  // n -> N
    Mlp enc_u;  // (n + m) -> m, NINK only
    Mlp dec_x;  // N -> n
    Mlp dec_u;  // (n + m) -> m, NINK only
    Mat A, B;
    Normalizer normalizer;
    TrainMeta meta;

    int lifted_dim() const { return N; }
    bool input_affine() const { return variant == Variant::link; }

    Vec lift(const Vec& x) const { return enc_x.forward(normalizer.normalize_state(x)); }

    Vec decode_state(const Vec& gamma) const {
        require_dim(gamma.size(), N, "decode_state");
        return normalizer.denormalize_state(dec_x.forward(gamma));
    }

    Vec encode_input(const Vec& x, const Vec& u) const {
        const Vec un = normalizer.normalize_input(u);
        if (variant == Variant::link) return un;
        Vec in(n + m);
        in << normalizer.normalize_state(x), un;
        return enc_u.forward(in);
    }

    Vec decode_input(const Vec& x, const Vec& u_lifted) const {
        require_dim(u_lifted.size(), m, "decode_input");
        if (variant == Variant::link) return normalizer.denormalize_input(u_lifted);
        if (dec_u.empty()) throw std::logic_error("decode_input: NINK model has no trained input decoder");
        Vec in(n + m);
        in << normalizer.normalize_state(x), u_lifted;
        return normalizer.denormalize_input(dec_u.forward(in));
    }

    Vec step(const Vec& gamma, const Vec& u_lifted) const { return A * gamma + B * u_lifted; }
    const Mat& a_matrix() const { return A; }
    const Mat& b_matrix() const { return B; }
};

/// Rollout from x0: entry 0 is the decoded lift of x0, entry k the decoded
/// lifted state after k inputs. NINK re-encodes each input against the decoded
/// state of the current step.
inline std::vector<Vec> nk_predict(const NeuralKoopmanModel& model, const Vec& x0, const std::vector<Vec>& inputs,
                                   int steps) {
    if (steps != static_cast<int>(inputs.size())) throw std::invalid_argument("nk_predict: steps != inputs.size()");
    std::vector<Vec> out;
    Vec gamma = model.lift(x0);
    Vec x = model.decode_state(gamma);
    out.push_back(x);
    for (const Vec& u : inputs) {
        gamma = model.step(gamma, model.encode_input(x, u));
        x = model.decode_state(gamma);
        out.push_back(x);
    }
    return out;
}

/// Normalized per-trial sequences and the R-step windows over them.
struct WindowData {
    std::vector<Mat> states;  // per trial: n x (L + 1)
    std::vector<Mat> inputs;  // per trial: m x L
    std::vector<std::pair<int, int>> windows;  // (trial, offset)
    int horizon = 1;

    /// States time-major: column i * count + b is x_i of window b.
    void assemble(const std::vector<std::pair<int, int>>& batch, Mat& X, Mat& U) const {
        const auto count = static_cast<Eigen::Index>(batch.size());
        const Eigen::Index n = states.front().rows(), m = inputs.front().rows();
        X.resize(n, (horizon + 1) * count);
        U.resize(m, horizon * count);
        for (Eigen::Index b = 0; b < count; ++b) {
            const auto [t, o] = batch[static_cast<std::size_t>(b)];
            for (int i = 0; i <= horizon; ++i) X.col(i * count + b) = states[static_cast<std::size_t>(t)].col(o + i);
            for (int i = 0; i < horizon; ++i) U.col(i * count + b) = inputs[static_cast<std::size_t>(t)].col(o + i);
        }
    }
};

inline WindowData make_windows(const Dataset& data, const Normalizer& norm, int n, int horizon) {
    WindowData w;
    w.horizon = horizon;
    for (auto [begin, end] : data.trial_ranges()) {
        const auto L = static_cast<Eigen::Index>(end - begin);
        Mat X(n, L + 1), U(2, L);
        for (Eigen::Index k = 0; k < L; ++k) {
            const Sample& s = data.samples[begin + static_cast<std::size_t>(k)];
            X.col(k) = norm.normalize_state(s.state.to_vector(n));
            U.col(k) = norm.normalize_input(s.input.pressures());
        }
        X.col(L) = norm.normalize_state(data.samples[end - 1].next_state.to_vector(n));
        const int t = static_cast<int>(w.states.size());
        w.states.push_back(std::move(X));
        w.inputs.push_back(std::move(U));
        for (Eigen::Index o = 0; o + horizon <= L; ++o) w.windows.emplace_back(t, static_cast<int>(o));
    }
    return w;
}

struct EncoderGrads {
    Mlp::Grads enc_x, enc_u;
    Mat dA, dB, dW;

    std::vector<ParamRef> refs(Variant v) {
        std::vector<ParamRef> out = enc_x.refs();
        if (v == Variant::nink) {
            for (const ParamRef& r : enc_u.refs()) out.push_back(r);
        }
        out.push_back({dA.data(), dA.size()});
        out.push_back({dB.data(), dB.size()});
        out.push_back({dW.data(), dW.size()});
        return out;
    }
};

struct EncoderLoss {
    double prediction = 0.0;  // (1/R) sum_i |gamma_i - gamma_hat_i|^2, batch mean
    double readout = 0.0;
    double total = 0.0;
};

/// R-step lifted prediction loss of a batch (see WindowData::assemble for the
/// layout) plus the weighted readout term. Rollouts start from the window's
/// first encoded state only. Gradients are accumulated when `grads` is set.
inline EncoderLoss encoder_loss(const NeuralKoopmanModel& model, const Mat& W, const Mat& X, const Mat& U,
                                int horizon, double readout_weight, EncoderGrads* grads) {
    const Eigen::Index count = X.cols() / (horizon + 1);
    const auto R = static_cast<double>(horizon);
    const auto Bn = static_cast<double>(count);

    Mlp::Cache cx, cu;
    const Mat gamma = grads ? model.enc_x.forward(X, cx) : model.enc_x.forward(X);
    Mat u_enc;
    if (model.variant == Variant::nink) {
        Mat in(model.n + model.m, U.cols());
        const Eigen::Index cols = horizon * count;
        in.topRows(model.n) = X.leftCols(cols);
        in.bottomRows(model.m) = U;
        u_enc = grads ? model.enc_u.forward(in, cu) : model.enc_u.forward(in);
    } else {
        u_enc = U;
    }

    std::vector<Mat> pred(static_cast<std::size_t>(horizon + 1));
    pred[0] = gamma.leftCols(count);
    for (int i = 1; i <= horizon; ++i) {
        pred[static_cast<std::size_t>(i)] =
            model.A * pred[static_cast<std::size_t>(i - 1)] + model.B * u_enc.middleCols((i - 1) * count, count);
    }

    EncoderLoss loss;
    std::vector<Mat> dpred(static_cast<std::size_t>(horizon + 1));
    Mat dgamma = Mat::Zero(gamma.rows(), gamma.cols());
    const double wp = 1.0 / (R * Bn);
    const double wr = readout_weight / ((R + 1.0) * Bn);
    for (int i = 0; i <= horizon; ++i) {
        const auto si = static_cast<std::size_t>(i);
        dpred[si] = Mat::Zero(model.N, count);
        if (i > 0) {
            const Mat diff = gamma.middleCols(i * count, count) - pred[si];
            loss.prediction += wp * diff.squaredNorm();
            if (grads) {
                dpred[si] -= 2.0 * wp * diff;
                dgamma.middleCols(i * count, count) += 2.0 * wp * diff;
            }
        }
        if (readout_weight > 0.0) {
            const Mat res = X.middleCols(i * count, count) - W * pred[si];
            loss.readout += wr * res.squaredNorm();
            if (grads) {
                dpred[si] -= 2.0 * wr * (W.transpose() * res);
                grads->dW -= 2.0 * wr * res * pred[si].transpose();
            }
        }
    }
    loss.total = loss.prediction + loss.readout;
    if (!grads) return loss;

    Mat du = Mat::Zero(model.m, horizon * count);
    for (int i = horizon; i >= 1; --i) {
        const auto si = static_cast<std::size_t>(i);
        grads->dA.noalias() += dpred[si] * pred[si - 1].transpose();
        grads->dB.noalias() += dpred[si] * u_enc.middleCols((i - 1) * count, count).transpose();
        du.middleCols((i - 1) * count, count) = model.B.transpose() * dpred[si];
        dpred[si - 1].noalias() += model.A.transpose() * dpred[si];
    }
    dgamma.leftCols(count) += dpred[0];
    model.enc_x.backward(cx, dgamma, grads->enc_x);
    if (model.variant == Variant::nink) model.enc_u.backward(cu, du, grads->enc_u);
    return loss;
}

/// One-step lifted prediction error (batch mean of |enc(x+) - A enc(x) - B u~|^2).
inline double one_step_lifted_loss(const NeuralKoopmanModel& model, const Mat& X, const Mat& U, const Mat& Xn) {
    const Mat g0 = model.enc_x.forward(X), g1 = model.enc_x.forward(Xn);
    Mat u_enc = U;
    if (model.variant == Variant::nink) {
        Mat in(model.n + model.m, X.cols());
        in << X, U;
        u_enc = model.enc_u.forward(in);
    }
    return (g1 - model.A * g0 - model.B * u_enc).squaredNorm() / static_cast<double>(X.cols());
}

/// Whole-trial split: the first round(fraction * trials) trials train.
inline std::pair<Dataset, Dataset> split_by_trials(const Dataset& data, double train_fraction) {
    const std::vector<int> ids = data.trial_ids();
    if (ids.size() < 2) throw std::invalid_argument("split_by_trials: need at least two trials");
    auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(ids.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);
    return {data.select_trials({ids.begin(), ids.begin() + static_cast<long>(n_train)}),
            data.select_trials({ids.begin() + static_cast<long>(n_train), ids.end()})};
}

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline NeuralKoopmanModel init_neural_koopman(Variant variant, int n, int m, const Normalizer& norm,
                                              const TrainConfig& cfg) {
    cfg.check();
    std::mt19937_64 rng(cfg.seed);
    NeuralKoopmanModel model;
    model.variant = variant;
    model.n = n;
    model.m = m;
    model.N = cfg.lifted_dim;
    model.normalizer = norm;
    std::vector<int> sx{n}, su{n + m};
    for (int i = 0; i < cfg.hidden_layers; ++i) {
        sx.push_back(cfg.state_hidden);
        su.push_back(cfg.input_hidden);
    }
    sx.push_back(cfg.lifted_dim);
    su.push_back(m);
    model.enc_x = Mlp::make(sx, cfg.activation, rng);
    if (variant == Variant::nink) model.enc_u = Mlp::make(su, cfg.activation, rng);
    model.A = Mat::Identity(cfg.lifted_dim, cfg.lifted_dim);
    std::uniform_real_distribution<double> small(-0.1, 0.1);
    model.B = Mat::NullaryExpr(cfg.lifted_dim, m, [&] { return small(rng); });
    return model;
}

/// Encoder stage: jointly fits the encoders, A and B on R-step windows of the
/// training trials by mini-batch Adam.
inline NeuralKoopmanModel train_encoder_stage(const Dataset& train, const TrainConfig& cfg, Variant variant,
                                              int n) {
    cfg.check();
    const Normalizer norm = Normalizer::fit(train, n);
    NeuralKoopmanModel model = init_neural_koopman(variant, n, 2, norm, cfg);
    const WindowData wd = make_windows(train, norm, n, cfg.horizon);
    if (wd.windows.empty()) throw std::invalid_argument("train_encoder_stage: no complete R-step windows");

    Mat W = Mat::Zero(n, model.N);
    EncoderGrads g{model.enc_x.zero_grads(), model.enc_u.zero_grads(), Mat::Zero(model.N, model.N),
                   Mat::Zero(model.N, model.m), Mat::Zero(n, model.N)};
    std::vector<ParamRef> params = model.enc_x.params();
    if (variant == Variant::nink) {
        for (const ParamRef& r : model.enc_u.params()) params.push_back(r);
    }
    params.push_back({model.A.data(), model.A.size()});
    params.push_back({model.B.data(), model.B.size()});
    params.push_back({W.data(), W.size()});
    Adam adam(params, {cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps});
    const std::vector<ParamRef> grefs = g.refs(variant);

    std::mt19937_64 rng(cfg.seed + 1);
    auto order = wd.windows;
    Mat X, U;
    std::vector<std::pair<int, int>> batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.assign(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(stop));
            wd.assemble(batch, X, U);
            g.enc_x.set_zero();
            g.enc_u.set_zero();
            g.dA.setZero();
            g.dB.setZero();
            g.dW.setZero();
            const EncoderLoss loss = encoder_loss(model, W, X, U, cfg.horizon, cfg.readout_weight, &g);
            if (!std::isfinite(loss.total)) {
                throw TrainingError("encoder stage: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batches));
            }
            adam.step(grefs);
            sum += loss.prediction;
            ++batches;
        }
        model.meta.loss_curve.push_back(sum / batches);
    }
    return model;
}

/// Decoder stage with the encoders frozen: the state decoder on
/// (enc_x(x), x) and, for NINK, the input decoder on ((x, enc_u(x, u)), u).
inline NeuralKoopmanModel train_decoder_stage(NeuralKoopmanModel model, const Dataset& train,
                                              const TrainConfig& cfg) {
    cfg.check();
    const int n = model.n, m = model.m;
    std::mt19937_64 rng(cfg.seed + 2);
    std::vector<int> sx{model.N}, su{n + m};
    for (int i = 0; i < cfg.hidden_layers; ++i) {
        sx.push_back(cfg.state_hidden);
        su.push_back(cfg.input_hidden);
    }
    sx.push_back(n);
    su.push_back(m);
    model.dec_x = Mlp::make(sx, cfg.activation, rng);
    const bool with_input = model.variant == Variant::nink;
    if (with_input) model.dec_u = Mlp::make(su, cfg.activation, rng);

    const SnapshotMatrices snap = snapshots(train, n);
    const Eigen::Index K = snap.X.cols();
    Mat Xn(n, K), Un(m, K);
    for (Eigen::Index i = 0; i < K; ++i) {
        Xn.col(i) = model.normalizer.normalize_state(snap.X.col(i));
        Un.col(i) = model.normalizer.normalize_input(snap.U.col(i));
    }
    const Mat gamma = model.enc_x.forward(Xn);
    Mat in_u, u_enc;
    if (with_input) {
        in_u.resize(n + m, K);
        in_u << Xn, Un;
        u_enc = model.enc_u.forward(in_u);
        in_u.bottomRows(m) = u_enc;  // decoder input (x, u~)
    }

    Mlp::Grads gx = model.dec_x.zero_grads(), gu = model.dec_u.zero_grads();
    std::vector<ParamRef> params = model.dec_x.params(), grefs = gx.refs();
    if (with_input) {
        for (const ParamRef& r : model.dec_u.params()) params.push_back(r);
        for (const ParamRef& r : gu.refs()) grefs.push_back(r);
    }
    Adam adam(params, {cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps});

    std::vector<Eigen::Index> order(static_cast<std::size_t>(K));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Mlp::Cache cx, cu;
    for (int epoch = 0; epoch < cfg.decoder_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const auto count = static_cast<Eigen::Index>(stop - start);
            Mat gb(model.N, count), xb(n, count), ib, ub;
            if (with_input) {
                ib.resize(n + m, count);
                ub.resize(m, count);
            }
            for (Eigen::Index b = 0; b < count; ++b) {
                const Eigen::Index j = order[start + static_cast<std::size_t>(b)];
                gb.col(b) = gamma.col(j);
                xb.col(b) = Xn.col(j);
                if (with_input) {
                    ib.col(b) = in_u.col(j);
                    ub.col(b) = Un.col(j);
                }
            }
            gx.set_zero();
            const Mat rx = model.dec_x.forward(gb, cx) - xb;
            double loss = rx.squaredNorm() / static_cast<double>(count);
            model.dec_x.backward(cx, 2.0 * rx / static_cast<double>(count), gx);
            if (with_input) {
                gu.set_zero();
                const Mat ru = model.dec_u.forward(ib, cu) - ub;
                loss += ru.squaredNorm() / static_cast<double>(count);
                model.dec_u.backward(cu, 2.0 * ru / static_cast<double>(count), gu);
            }
            if (!std::isfinite(loss)) {
                throw TrainingError("decoder stage: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batches));
            }
            adam.step(grefs);
            sum += loss;
            ++batches;
        }
        model.meta.decoder_loss_curve.push_back(sum / batches);
    }

    const Mat rec = model.dec_x.forward(gamma) - Xn;
    model.meta.recon_rmse =
        (rec.array().square().rowwise().mean().sqrt().matrix()).cwiseProduct(model.normalizer.state_scale);
    if (with_input) {
        const Mat ru = (model.dec_u.forward(in_u) - Un).array().colwise() * model.normalizer.input_scale.array();
        model.meta.input_roundtrip = ru.colwise().norm().mean();
    }
    return model;
}

/// Both stages on the training trials of `data`.
inline NeuralKoopmanModel train_neural_koopman(const Dataset& train, const TrainConfig& cfg, Variant variant,
                                               int n) {
    return train_decoder_stage(train_encoder_stage(train, cfg, variant, n), train, cfg);
}

}  // namespace nkoop
