#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dataset/sequence_io.hpp"

namespace vos::data {

enum class ShapeKind { Disc, Square, Triangle };

// Moving coloured shapes over a textured background. Every byte of the
// output is a pure function of this struct.
struct SyntheticConfig {
    std::size_t image_size = 64;
    std::size_t train_sequences = 12;
    std::size_t val_sequences = 4;
    std::size_t frames = 16;
    std::size_t instances = 2; // per sequence, 1..4
    std::vector<ShapeKind> shapes{ShapeKind::Disc, ShapeKind::Square, ShapeKind::Triangle};
    double min_radius = 6.0; // half-extent of each shape, pixels
    double max_radius = 9.0;
    double min_speed = 1.0; // pixels per frame
    double max_speed = 2.5;
    // Instance 1 leaves the frame and comes back.
    bool exit_return = false;
    // Instances 1 and 2 pass through each other mid-sequence.
    bool crossing = false;
    // Per-frame union foreground fraction bounds. Enforced by resampling
    // trajectories unless crossing or exit_return is set.
    double min_fg_fraction = 0.02;
    double max_fg_fraction = 0.20;
    std::uint64_t background_seed = 0;
    std::uint64_t seed = 1;
};

void validate_synthetic(const SyntheticConfig& config);

// Sequence `ordinal` counts train sequences first, then validation ones.
VideoSequence generate_sequence(const SyntheticConfig& config, std::size_t ordinal, const std::string& id);

std::string synthetic_sequence_id(const std::string& split, std::size_t i);

// Writes <out>/<split>/<id>/{frames,annotations}/ and <out>/index.txt.
DatasetIndex generate_synthetic(const SyntheticConfig& config, const std::filesystem::path& out);

} // namespace vos::data
