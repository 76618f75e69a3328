#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "common/grid.hpp"

namespace vos::iso {

// H x W x N stack of binary layers, layer-major.
struct BinaryVolume {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t layers = 0;
    std::vector<std::uint8_t> data;

    std::uint8_t at(std::size_t layer, std::size_t y, std::size_t x) const {
        return data[(layer * height + y) * width + x];
    }
    BinaryMask layer(std::size_t k) const;
};

struct NormalizedMask {
    InstanceMask mask;                       // labels 0..N, contiguous
    std::vector<std::uint8_t> original_labels; // original_labels[k-1] is the source label of k
};

// Remaps the nonzero labels present to 1..N preserving order.
NormalizedMask normalize_labels(const InstanceMask& mask);

// Largest label present (the instance count of a normalized mask).
std::size_t instance_count(const InstanceMask& mask);

// One binary mask per label 1..N, N = max label. Rejects all-background masks.
std::vector<BinaryMask> isolate(const InstanceMask& mask);

// One binary mask per label 1..count; layers may be empty (instance absent).
std::vector<BinaryMask> isolate(const InstanceMask& mask, std::size_t count);

BinaryMask isolate_one(const InstanceMask& mask, std::size_t label);

BinaryVolume project_stack(const InstanceMask& mask);

// Per-pixel argmax over instances if it reaches `threshold`, else background.
// Ties resolve to the lowest instance label.
InstanceMask merge(std::span<const ProbabilityMap> preds, double threshold = 0.5);

ProbabilityMap to_probability(const BinaryMask& mask);
BinaryMask binarize(const ProbabilityMap& map, double threshold = 0.5);

} // namespace vos::iso
