#include "trainer/optimizer.hpp"

#include <cmath>

#include <fmt/format.h>

#include "common/error.hpp"

namespace vos::train {

OptimizerKind parse_optimizer_kind(std::string_view name) {
    if (name == "adam") return OptimizerKind::Adam;
    if (name == "sgd") return OptimizerKind::Sgd;
    fail_invalid(fmt::format("unknown optimizer '{}' (expected adam or sgd)", name));
}

std::string_view optimizer_kind_name(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

void optimizer_step(std::vector<net::NamedParam>& params, OptimizerState& state, const OptimizerSettings& s) {
    if (!(s.learning_rate > 0.0)) fail_invalid("optimizer: learning rate must be positive");
    for (const auto& p : params) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad())
            if (!std::isfinite(g)) fail_numeric(fmt::format("non-finite gradient in parameter '{}'", p.name));
    }

    if (s.kind == OptimizerKind::Sgd) {
        for (auto& p : params) {
            if (!p.tensor.has_grad()) continue;
            auto v = p.tensor.values();
            const auto g = p.tensor.grad();
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= s.learning_rate * g[i];
        }
        ++state.step;
        return;
    }

    if (state.first_moment.size() != params.size()) {
        state.first_moment.assign(params.size(), {});
        state.second_moment.assign(params.size(), {});
        for (std::size_t k = 0; k < params.size(); ++k) {
            state.first_moment[k].assign(params[k].tensor.numel(), 0.0);
            state.second_moment[k].assign(params[k].tensor.numel(), 0.0);
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(s.beta1, t);
    const double c2 = 1.0 - std::pow(s.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        if (!p.tensor.has_grad()) continue;
        auto v = p.tensor.values();
        const auto g = p.tensor.grad();
        auto& m1 = state.first_moment[k];
        auto& m2 = state.second_moment[k];
        for (std::size_t i = 0; i < v.size(); ++i) {
            m1[i] = s.beta1 * m1[i] + (1.0 - s.beta1) * g[i];
            m2[i] = s.beta2 * m2[i] + (1.0 - s.beta2) * g[i] * g[i];
            const double mhat = m1[i] / c1;
            const double vhat = m2[i] / c2;
            v[i] -= s.learning_rate * mhat / (std::sqrt(vhat) + s.epsilon);
        }
    }
}

} // namespace vos::train
