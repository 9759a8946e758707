#pragma once

#include <concepts>
#include <string>
#include <variant>

#include "nkoop/edmd.hpp"
#include "nkoop/neural_koopman.hpp"

namespace nkoop {

/// What the MPC and the open-loop runner need from a lifted model.
template <class M>
concept LiftedModel = requires(const M& model, const Vec& v) {
    { model.lift(v) } -> std::convertible_to<Vec>;
    { model.decode_state(v) } -> std::convertible_to<Vec>;
    { model.encode_input(v, v) } -> std::convertible_to<Vec>;
    { model.decode_input(v, v) } -> std::convertible_to<Vec>;
    { model.step(v, v) } -> std::convertible_to<Vec>;
    { model.input_affine() } -> std::convertible_to<bool>;
    { model.a_matrix() } -> std::convertible_to<const Mat&>;
    { model.b_matrix() } -> std::convertible_to<const Mat&>;
};

/// Runtime-selected model (checkpoints, service sessions).
class AnyModel {
    template <class F>
    decltype(auto) visit(F&& f) const {
        if (impl_.index() == 0) throw std::logic_error("AnyModel: empty");
        return std::visit(
            [&](const auto& m) -> decltype(auto) {
                if constexpr (std::is_same_v<std::decay_t<decltype(m)>, std::monostate>) {
                    return f(std::get<LinearLiftedModel>(impl_));  // unreachable
                } else {
                    return f(m);
                }
            },
            impl_);
    }

public:
    AnyModel() = default;
    AnyModel(LinearLiftedModel m) : impl_(std::move(m)) {}   // NOLINT
    AnyModel(NeuralKoopmanModel m) : impl_(std::move(m)) {}  // NOLINT

    Vec lift(const Vec& x) const { return visit([&](const auto& m) { return m.lift(x); }); }
    Vec decode_state(const Vec& g) const { return visit([&](const auto& m) { return m.decode_state(g); }); }
    Vec encode_input(const Vec& x, const Vec& u) const {
        return visit([&](const auto& m) { return m.encode_input(x, u); });
    }
    Vec decode_input(const Vec& x, const Vec& u) const {
        return visit([&](const auto& m) { return m.decode_input(x, u); });
    }
    Vec step(const Vec& g, const Vec& u) const { return visit([&](const auto& m) { return m.step(g, u); }); }
    bool input_affine() const { return visit([](const auto& m) { return m.input_affine(); }); }
    const Mat& a_matrix() const { return visit([](const auto& m) -> const Mat& { return m.A; }); }
    const Mat& b_matrix() const { return visit([](const auto& m) -> const Mat& { return m.B; }); }
    int state_dim() const {
        return visit([](const auto& m) -> int {
            if constexpr (std::is_same_v<std::decay_t<decltype(m)>, LinearLiftedModel>) return m.n();
            else return m.n;
        });
    }

    /// "edmd" (dictionary models) or "nink"/"link".
    std::string kind() const {
        if (const auto* nk = std::get_if<NeuralKoopmanModel>(&impl_)) return to_string(nk->variant);
        return "edmd";
    }

    bool has_value() const { return impl_.index() != 0; }
    const LinearLiftedModel* linear() const { return std::get_if<LinearLiftedModel>(&impl_); }
    const NeuralKoopmanModel* neural() const { return std::get_if<NeuralKoopmanModel>(&impl_); }

private:
    std::variant<std::monostate, LinearLiftedModel, NeuralKoopmanModel> impl_;
};

}  // namespace nkoop
