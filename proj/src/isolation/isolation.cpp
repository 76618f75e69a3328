#include "isolation/isolation.hpp"

#include <algorithm>
#include <array>

#include <fmt/format.h>

#include "common/error.hpp"

namespace vos::iso {

BinaryMask BinaryVolume::layer(std::size_t k) const {
    if (k >= layers) fail_invalid(fmt::format("volume layer {} out of range ({} layers)", k, layers));
    BinaryMask m(height, width);
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(k * height * width), height * width, m.data.begin());
    return m;
}

NormalizedMask normalize_labels(const InstanceMask& mask) {
    std::array<bool, 256> present{};
    for (auto v : mask.data) present[v] = true;
    std::array<std::uint8_t, 256> remap{};
    NormalizedMask out;
    for (std::size_t label = 1; label < 256; ++label) {
        if (!present[label]) continue;
        out.original_labels.push_back(static_cast<std::uint8_t>(label));
        remap[label] = static_cast<std::uint8_t>(out.original_labels.size());
    }
    out.mask = mask;
    for (auto& v : out.mask.data) v = remap[v];
    return out;
}

std::size_t instance_count(const InstanceMask& mask) {
    std::uint8_t top = 0;
    for (auto v : mask.data) top = std::max(top, v);
    return top;
}

BinaryMask isolate_one(const InstanceMask& mask, std::size_t label) {
    BinaryMask out(mask.height, mask.width);
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] == label ? 1 : 0;
    return out;
}

std::vector<BinaryMask> isolate(const InstanceMask& mask, std::size_t count) {
    std::vector<BinaryMask> out;
    out.reserve(count);
    for (std::size_t k = 1; k <= count; ++k) out.push_back(isolate_one(mask, k));
    return out;
}

std::vector<BinaryMask> isolate(const InstanceMask& mask) {
    const auto n = instance_count(mask);
    if (n == 0) fail_invalid("isolate: mask has no instance labels (all background)");
    return isolate(mask, n);
}

BinaryVolume project_stack(const InstanceMask& mask) {
    const auto layers = isolate(mask);
    BinaryVolume vol{mask.height, mask.width, layers.size(), {}};
    vol.data.reserve(layers.size() * mask.size());
    for (const auto& l : layers) vol.data.insert(vol.data.end(), l.data.begin(), l.data.end());
    return vol;
}

InstanceMask merge(std::span<const ProbabilityMap> preds, double threshold) {
    if (preds.empty()) fail_invalid("merge: no instance predictions");
    const auto& first = preds.front();
    for (const auto& p : preds) require_same_dims(first, p, "merge");
    if (preds.size() > 255) fail_invalid("merge: more than 255 instances");
    InstanceMask out(first.height, first.width);
    for (std::size_t i = 0; i < first.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < preds.size(); ++k)
            if (preds[k][i] > preds[best][i]) best = k;
        if (preds[best][i] >= threshold) out[i] = static_cast<std::uint8_t>(best + 1);
    }
    return out;
}

ProbabilityMap to_probability(const BinaryMask& mask) {
    ProbabilityMap p(mask.height, mask.width);
    for (std::size_t i = 0; i < mask.size(); ++i) p[i] = mask[i] ? 1.0 : 0.0;
    return p;
}

BinaryMask binarize(const ProbabilityMap& map, double threshold) {
    BinaryMask m(map.height, map.width);
    for (std::size_t i = 0; i < map.size(); ++i) m[i] = map[i] >= threshold ? 1 : 0;
    return m;
}

} // namespace vos::iso
