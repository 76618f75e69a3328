#include "losses/losses.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "common/error.hpp"
#include "common/log.hpp"
#include "tensor/ops.hpp"

namespace vos::loss {

namespace {

void check_probabilities(const ProbabilityMap& pred, const char* op) {
    for (double v : pred.data)
        if (!(v >= 0.0 && v <= 1.0)) fail_invalid(fmt::format("{}: prediction value {} outside [0,1]", op, v));
}

LossValue cross_entropy_impl(const ProbabilityMap& pred, std::span<const double> target, const WeightMap& weights,
                             const char* op) {
    check_probabilities(pred, op);
    require_same_dims(pred, weights, op);
    if (target.size() != pred.size())
        fail_invalid(fmt::format("{}: target has {} pixels, prediction {}", op, target.size(), pred.size()));
    const double inv = 1.0 / static_cast<double>(pred.size());
    auto* trace = ad::BranchTrace::active();
    LossValue out;
    out.grad.resize(pred.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double raw = pred[i];
        const double q = std::clamp(raw, kProbEpsilon, 1.0 - kProbEpsilon);
        const bool inside = raw > kProbEpsilon && raw < 1.0 - kProbEpsilon;
        if (trace && !inside) trace->mix(i);
        const double t = target[i];
        const double w = weights[i];
        acc += -w * (t * std::log(q) + (1.0 - t) * std::log(1.0 - q));
        out.grad[i] = inside ? -w * (t / q - (1.0 - t) / (1.0 - q)) * inv : 0.0;
    }
    out.value = acc * inv;
    return out;
}

std::vector<double> as_doubles(const BinaryMask& m) { return {m.data.begin(), m.data.end()}; }

ProbabilityMap sample_map(const ad::Tensor& pred, std::size_t s) {
    const auto h = pred.dim(2), w = pred.dim(3);
    const auto v = pred.values();
    return ProbabilityMap(h, w, std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(s * h * w),
                                                    v.begin() + static_cast<std::ptrdiff_t>((s + 1) * h * w)));
}

void check_batch(const ad::Tensor& pred, std::size_t targets, const char* op) {
    if (pred.rank() != 4 || pred.dim(1) != 1)
        fail_invalid(fmt::format("{}: prediction must be [N,1,H,W], got {}", op, ad::shape_str(pred.shape())));
    if (pred.dim(0) != targets)
        fail_invalid(fmt::format("{}: {} predictions for {} targets", op, pred.dim(0), targets));
}

} // namespace

LossKind parse_loss_kind(std::string_view name) {
    if (name == "wce") return LossKind::WeightedCe;
    if (name == "dice") return LossKind::Dice;
    if (name == "ce") return LossKind::UnweightedCe;
    fail_invalid(fmt::format("unknown loss kind '{}' (expected wce, dice or ce)", name));
}

std::string_view loss_kind_name(LossKind kind) {
    switch (kind) {
    case LossKind::WeightedCe: return "wce";
    case LossKind::Dice: return "dice";
    case LossKind::UnweightedCe: return "ce";
    }
    return "?";
}

double foreground_weight(const BinaryMask& target) {
    std::size_t fg = 0;
    for (auto v : target.data) fg += v ? 1 : 0;
    if (fg == 0) fail_invalid("foreground_weight: target has no foreground pixels (unusable training sample)");
    const auto bg = target.size() - fg;
    if (bg == 0) log_warn("foreground_weight: target is all foreground, ratio is 0");
    return static_cast<double>(bg) / static_cast<double>(fg);
}

WeightMap make_weight_map(const BinaryMask& target) {
    const bool any = std::any_of(target.data.begin(), target.data.end(), [](auto v) { return v != 0; });
    double ratio = any ? foreground_weight(target) : 1.0;
    if (ratio <= 0.0) ratio = 1.0;
    WeightMap w(target.height, target.width, 1.0);
    for (std::size_t i = 0; i < target.size(); ++i)
        if (target[i]) w[i] = ratio;
    return w;
}

WeightMap uniform_weights(std::size_t height, std::size_t width) { return WeightMap(height, width, 1.0); }

LossValue weighted_cross_entropy(const ProbabilityMap& pred, const BinaryMask& target, const WeightMap& weights) {
    require_same_dims(pred, target, "weighted_cross_entropy");
    return cross_entropy_impl(pred, as_doubles(target), weights, "weighted_cross_entropy");
}

LossValue soft_cross_entropy(const ProbabilityMap& pred, std::span<const double> target, const WeightMap& weights) {
    return cross_entropy_impl(pred, target, weights, "soft_cross_entropy");
}

LossValue dice_loss(const ProbabilityMap& pred, const BinaryMask& target, double smoothing) {
    require_same_dims(pred, target, "dice_loss");
    check_probabilities(pred, "dice_loss");
    double inter = 0.0, psum = 0.0, tsum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        inter += pred[i] * target[i];
        psum += pred[i];
        tsum += target[i];
    }
    const double num = 2.0 * inter + smoothing;
    const double den = psum + tsum + smoothing;
    LossValue out;
    out.value = 1.0 - num / den;
    out.grad.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) out.grad[i] = (num - 2.0 * target[i] * den) / (den * den);
    return out;
}

ad::Tensor batch_loss(const ad::Tensor& pred, std::span<const BinaryMask> targets, LossKind kind) {
    check_batch(pred, targets.size(), "batch_loss");
    const auto n = targets.size();
    const auto plane = pred.dim(2) * pred.dim(3);
    std::vector<double> grad(pred.numel());
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const auto map = sample_map(pred, s);
        LossValue lv;
        switch (kind) {
        case LossKind::WeightedCe: lv = weighted_cross_entropy(map, targets[s], make_weight_map(targets[s])); break;
        case LossKind::UnweightedCe:
            lv = weighted_cross_entropy(map, targets[s], uniform_weights(map.height, map.width));
            break;
        case LossKind::Dice: lv = dice_loss(map, targets[s]); break;
        }
        total += lv.value;
        for (std::size_t i = 0; i < plane; ++i) grad[s * plane + i] = lv.grad[i] / static_cast<double>(n);
    }
    return ad::scalar_with_gradient(pred, total / static_cast<double>(n), std::move(grad), "batch_loss");
}

ad::Tensor batch_soft_cross_entropy(const ad::Tensor& pred, std::span<const std::vector<double>> targets) {
    check_batch(pred, targets.size(), "batch_soft_cross_entropy");
    const auto n = targets.size();
    const auto plane = pred.dim(2) * pred.dim(3);
    std::vector<double> grad(pred.numel());
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const auto map = sample_map(pred, s);
        const auto lv = soft_cross_entropy(map, targets[s], uniform_weights(map.height, map.width));
        total += lv.value;
        for (std::size_t i = 0; i < plane; ++i) grad[s * plane + i] = lv.grad[i] / static_cast<double>(n);
    }
    return ad::scalar_with_gradient(pred, total / static_cast<double>(n), std::move(grad), "batch_soft_cross_entropy");
}

} // namespace vos::loss
