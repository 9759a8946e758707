#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "nkoop/lifted_model.hpp"
#include "nkoop/plant.hpp"

namespace nkoop {

using json = nlohmann::json;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace ckpt {

inline json from_vec(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vec to_vec(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Row-major nested arrays.
inline json from_mat(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(from_vec(m.row(r).transpose()));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

inline Mat to_mat(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
    Mat m(rows, cols);
    const json& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows) throw CheckpointError("matrix row count mismatch");
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Vec row = to_vec(data.at(static_cast<std::size_t>(r)));
        if (row.size() != cols) throw CheckpointError("matrix column count mismatch");
        m.row(r) = row.transpose();
    }
    return m;
}

inline json from_normalizer(const Normalizer& n) {
    return {{"state_mean", from_vec(n.state_mean)},
            {"state_scale", from_vec(n.state_scale)},
            {"input_mean", from_vec(n.input_mean)},
            {"input_scale", from_vec(n.input_scale)}};
}

inline Normalizer to_normalizer(const json& j) {
    Normalizer n{to_vec(j.at("state_mean")), to_vec(j.at("state_scale")), to_vec(j.at("input_mean")),
                 to_vec(j.at("input_scale"))};
    n.check();
    return n;
}

inline json from_mlp(const Mlp& net) {
    json layers = json::array();
    for (const DenseLayer& l : net.layers()) {
        layers.push_back({{"W", from_mat(l.W)}, {"b", from_vec(l.b)}, {"activation", to_string(l.act)}});
    }
    return layers;
}

inline Mlp to_mlp(const json& j) {
    std::vector<DenseLayer> layers;
    for (const json& l : j) {
        layers.push_back({to_mat(l.at("W")), to_vec(l.at("b")), activation_from_string(l.at("activation"))});
    }
    return Mlp(std::move(layers));
}

inline json from_quadratic(const pcc::Quadratic& q) { return {q.a, q.b, q.c}; }
inline pcc::Quadratic to_quadratic(const json& j) { return {j.at(0), j.at(1), j.at(2)}; }

}  // namespace ckpt

inline json model_to_json(const LinearLiftedModel& m) {
    const Dictionary& d = m.dictionary;
    return {{"kind", "edmd"},
            {"dict",
             {{"type", d.kind() == DictionaryKind::identity ? "identity" : "monomial"},
              {"state_dim", d.state_dim()},
              {"degree", d.degree()}}},
            {"A", ckpt::from_mat(m.A)},
            {"B", ckpt::from_mat(m.B)},
            {"C", ckpt::from_mat(m.C)},
            {"normalizer", ckpt::from_normalizer(m.normalizer)}};
}

inline json model_to_json(const NeuralKoopmanModel& m) {
    json meta = {{"loss_curve", m.meta.loss_curve},
                 {"decoder_loss_curve", m.meta.decoder_loss_curve},
                 {"recon_rmse", ckpt::from_vec(m.meta.recon_rmse)}};
    meta["input_roundtrip"] = std::isfinite(m.meta.input_roundtrip) ? json(m.meta.input_roundtrip) : json(nullptr);
    return {{"kind", to_string(m.variant)},
            {"dims", {{"n", m.n}, {"m", m.m}, {"N", m.N}}},
            {"A", ckpt::from_mat(m.A)},
            {"B", ckpt::from_mat(m.B)},
            {"enc_x", ckpt::from_mlp(m.enc_x)},
            {"dec_x", ckpt::from_mlp(m.dec_x)},
            {"enc_u", ckpt::from_mlp(m.enc_u)},
            {"dec_u", ckpt::from_mlp(m.dec_u)},
            {"normalizer", ckpt::from_normalizer(m.normalizer)},
            {"train_meta", meta}};
}

inline json model_to_json(const AnyModel& m) {
    if (const auto* l = m.linear()) return model_to_json(*l);
    if (const auto* n = m.neural()) return model_to_json(*n);
    throw CheckpointError("cannot serialize an empty model");
}

inline AnyModel model_from_json(const json& j) {
    try {
        const std::string kind = j.at("kind");
        if (kind == "edmd") {
            const json& d = j.at("dict");
            const int n = d.at("state_dim"), deg = d.at("degree");
            LinearLiftedModel m;
            m.dictionary = d.at("type") == "identity" ? Dictionary::identity(n) : Dictionary::monomial(n, deg);
            m.A = ckpt::to_mat(j.at("A"));
            m.B = ckpt::to_mat(j.at("B"));
            m.C = ckpt::to_mat(j.at("C"));
            m.normalizer = ckpt::to_normalizer(j.at("normalizer"));
            const int N = m.dictionary.size();
            require_dim(m.A.rows(), N, "checkpoint A");
            require_dim(m.A.cols(), N, "checkpoint A");
            require_dim(m.B.rows(), N, "checkpoint B");
            require_dim(m.C.cols(), N, "checkpoint C");
            require_dim(m.normalizer.input_dim(), m.B.cols(), "checkpoint normalizer");
            return m;
        }
        if (kind != "nink" && kind != "link") throw CheckpointError("unknown model kind '" + kind + "'");
        NeuralKoopmanModel m;
        m.variant = kind == "nink" ? Variant::nink : Variant::link;
        m.n = j.at("dims").at("n");
        m.m = j.at("dims").at("m");
        m.N = j.at("dims").at("N");
        m.A = ckpt::to_mat(j.at("A"));
        m.B = ckpt::to_mat(j.at("B"));
        m.enc_x = ckpt::to_mlp(j.at("enc_x"));
        m.dec_x = ckpt::to_mlp(j.at("dec_x"));
        m.enc_u = ckpt::to_mlp(j.at("enc_u"));
        m.dec_u = ckpt::to_mlp(j.at("dec_u"));
        m.normalizer = ckpt::to_normalizer(j.at("normalizer"));
        require_dim(m.A.rows(), m.N, "checkpoint A");
        require_dim(m.B.cols(), m.m, "checkpoint B");
        require_dim(m.enc_x.input_dim(), m.n, "checkpoint enc_x");
        require_dim(m.enc_x.output_dim(), m.N, "checkpoint enc_x");
        require_dim(m.dec_x.output_dim(), m.n, "checkpoint dec_x");
        if (const auto it = j.find("train_meta"); it != j.end()) {
            m.meta.loss_curve = it->value("loss_curve", std::vector<double>{});
            m.meta.decoder_loss_curve = it->value("decoder_loss_curve", std::vector<double>{});
            if (it->contains("recon_rmse")) m.meta.recon_rmse = ckpt::to_vec(it->at("recon_rmse"));
            if (it->contains("input_roundtrip") && !it->at("input_roundtrip").is_null()) {
                m.meta.input_roundtrip = it->at("input_roundtrip");
            }
        }
        return m;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed model checkpoint: ") + e.what());
    }
}

inline void save_model(const std::filesystem::path& path, const AnyModel& m) {
    std::ofstream os(path);
    if (!os) throw CheckpointError("cannot write " + path.string());
    os << model_to_json(m).dump() << '\n';
}

inline AnyModel load_model(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw CheckpointError("cannot read " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw CheckpointError(path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

inline json plant_config_to_json(const PlantConfig& c) {
    return {{"l1", c.l1},
            {"l2", c.l2},
            {"h1", c.h1},
            {"h2", c.h2},
            {"h3", c.h3},
            {"f1", ckpt::from_quadratic(c.f1)},
            {"f2", ckpt::from_quadratic(c.f2)},
            {"f3", ckpt::from_quadratic(c.f3)},
            {"f4", ckpt::from_quadratic(c.f4)},
            {"u_min", c.u_min},
            {"u_max", c.u_max},
            {"kappa", c.kappa},
            {"alpha", c.alpha},
            {"sigma_pos", c.sigma_pos},
            {"sigma_theta", c.sigma_theta},
            {"sample_rate_hz", c.sample_rate_hz},
            {"seed", c.seed}};
}

/// Missing keys keep their defaults.
inline PlantConfig plant_config_from_json(const json& j) {
    PlantConfig c;
    auto num = [&](const char* key, double& field) {
        if (j.contains(key)) field = j.at(key).get<double>();
    };
    auto quad = [&](const char* key, pcc::Quadratic& field) {
        if (j.contains(key)) field = ckpt::to_quadratic(j.at(key));
    };
    num("l1", c.l1);
    num("l2", c.l2);
    num("h1", c.h1);
    num("h2", c.h2);
    num("h3", c.h3);
    quad("f1", c.f1);
    quad("f2", c.f2);
    quad("f3", c.f3);
    quad("f4", c.f4);
    num("u_min", c.u_min);
    num("u_max", c.u_max);
    num("kappa", c.kappa);
    num("alpha", c.alpha);
    num("sigma_pos", c.sigma_pos);
    num("sigma_theta", c.sigma_theta);
    num("sample_rate_hz", c.sample_rate_hz);
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.check();
    return c;
}

}  // namespace nkoop
