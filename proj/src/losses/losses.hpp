#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "common/grid.hpp"
#include "tensor/tensor.hpp"

namespace vos::loss {

inline constexpr double kProbEpsilon = 1e-7;
inline constexpr double kDiceSmoothing = 1.0;

struct WeightTag {};
// Per-pixel weight; background 1, foreground the shared ratio.
using WeightMap = Grid<double, WeightTag>;

struct LossValue {
    double value = 0.0;
    std::vector<double> grad; // d value / d pred, same layout as the prediction
};

enum class LossKind { WeightedCe, Dice, UnweightedCe };

LossKind parse_loss_kind(std::string_view name); // "wce" | "dice" | "ce"
std::string_view loss_kind_name(LossKind kind);

// (#background)/(#foreground). Throws on an all-background target; returns 0
// with a warning on an all-foreground one.
double foreground_weight(const BinaryMask& target);

// Weight map for training: foreground gets foreground_weight(target), floored
// to 1 when degenerate; an all-background target gets uniform weight 1.
WeightMap make_weight_map(const BinaryMask& target);
WeightMap uniform_weights(std::size_t height, std::size_t width);

// mean_x -w(x) [t log q + (1-t) log(1-q)], q clamped to [eps, 1-eps].
LossValue weighted_cross_entropy(const ProbabilityMap& pred, const BinaryMask& target, const WeightMap& weights);

// Same formula with soft targets in [0,1]; used by the multi-label negative control.
LossValue soft_cross_entropy(const ProbabilityMap& pred, std::span<const double> target, const WeightMap& weights);

// 1 - (2 sum p t + s) / (sum p + sum t + s)
LossValue dice_loss(const ProbabilityMap& pred, const BinaryMask& target, double smoothing = kDiceSmoothing);

// Batch mean of per-sample losses over a [N,1,H,W] probability tensor.
ad::Tensor batch_loss(const ad::Tensor& pred, std::span<const BinaryMask> targets, LossKind kind);

ad::Tensor batch_soft_cross_entropy(const ad::Tensor& pred, std::span<const std::vector<double>> targets);

} // namespace vos::loss
