#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "network/model.hpp"

namespace vos::train {

enum class OptimizerKind { Adam, Sgd };

OptimizerKind parse_optimizer_kind(std::string_view name); // "adam" | "sgd"
std::string_view optimizer_kind_name(OptimizerKind kind);

struct OptimizerSettings {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    std::size_t step = 0;
    std::vector<std::vector<double>> first_moment;  // Adam m, per parameter
    std::vector<std::vector<double>> second_moment; // Adam v
};

// One update from the gradients currently held by `params`. Throws a numeric
// error, leaving every parameter untouched, if any gradient is non-finite.
// Parameters without a gradient buffer are skipped.
void optimizer_step(std::vector<net::NamedParam>& params, OptimizerState& state, const OptimizerSettings& settings);

} // namespace vos::train
