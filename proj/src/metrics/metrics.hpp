#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "common/grid.hpp"

namespace vos::metrics {

struct BoundaryScore {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

struct FrameScore {
    double j = 0.0;
    double f = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

// |M n G| / |M u G|; 1 when both are empty.
double region_similarity_j(const BinaryMask& m, const BinaryMask& g);

// Foreground pixels with a 4-neighbour outside the mask or on the image edge.
BoundaryMap extract_boundary(const BinaryMask& mask);

// Squared Euclidean distance from every pixel to the nearest set pixel of
// `sites`; +inf everywhere when `sites` is empty.
std::vector<double> squared_distance_transform(const BoundaryMap& sites);

// Contour precision/recall within `tolerance` pixels (Euclidean, inclusive)
// and their harmonic mean 2PR/(P+R).
BoundaryScore boundary_f(const BinaryMask& m, const BinaryMask& g, double tolerance);

// ceil(0.008 * image diagonal)
double default_tolerance(std::size_t height, std::size_t width);

FrameScore score_frame(const BinaryMask& m, const BinaryMask& g, double tolerance);

struct SequenceMasks {
    std::string id;
    std::vector<InstanceMask> frames;
};

struct InstanceScores {
    std::string sequence;
    std::size_t instance = 0;
    std::vector<FrameScore> frames; // frames 1..T-1; the annotated frame 0 is never scored
    double j_mean = 0.0;
    double f_mean = 0.0;
};

struct EvalReport {
    std::vector<InstanceScores> entries; // sorted by (sequence, instance)
    double j_mean = 0.0;                 // unweighted over entries
    double f_mean = 0.0;
};

// Instances are the labels present in each ground-truth first frame.
// `tolerance` defaults to default_tolerance() of each sequence's frame size.
EvalReport evaluate_dataset(std::span<const SequenceMasks> predictions, std::span<const SequenceMasks> ground_truth,
                            std::optional<double> tolerance = std::nullopt);

std::string format_report_text(const EvalReport& report);
std::string format_report_csv(const EvalReport& report);
std::string format_frames_csv(const EvalReport& report);

} // namespace vos::metrics
