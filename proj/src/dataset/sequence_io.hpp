#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "common/grid.hpp"
#include "metrics/metrics.hpp"

namespace vos::data {

struct VideoSequence {
    std::string id;
    std::vector<RgbImage> frames;
    InstanceMask first_mask;
    // Full per-frame annotation series (frame 0 included) when available,
    // empty in the semi-supervised test layout.
    std::vector<InstanceMask> ground_truth;

    bool has_ground_truth() const { return !ground_truth.empty(); }
    std::size_t length() const { return frames.size(); }
    // Largest label in the first-frame annotation.
    std::size_t instance_count() const;
};

// 5-digit zero-padded frame file name, e.g. frame_name(3, "ppm") == "00003.ppm".
std::string frame_name(std::size_t index, const char* extension);

// Reads <dir>/frames/NNNNN.ppm and <dir>/annotations/NNNNN.pgm. The sequence
// id is the directory name.
VideoSequence load_sequence(const std::filesystem::path& dir);

// Writes frames and whichever annotations the sequence carries.
void save_sequence(const std::filesystem::path& dir, const VideoSequence& sequence);

// Writes <dir>/annotations/NNNNN.pgm for every mask.
void write_annotations(const std::filesystem::path& dir, const std::vector<InstanceMask>& masks);

struct IndexEntry {
    std::string split;
    std::string id;
    std::size_t frames = 0;
    std::size_t instances = 0;

    friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

// <root>/index.txt: one "<split> <id> <frames> <instances>" line per sequence.
struct DatasetIndex {
    std::filesystem::path root;
    std::vector<IndexEntry> entries;

    std::filesystem::path sequence_dir(const IndexEntry& e) const { return root / e.split / e.id; }
    std::vector<IndexEntry> split(const std::string& name) const;
};

DatasetIndex load_index(const std::filesystem::path& root);
void write_index(const DatasetIndex& index);

// Every directory under `root` (root included) holding an annotations/
// subdirectory, loaded as an id -> mask series, sorted by id.
std::vector<metrics::SequenceMasks> load_annotation_tree(const std::filesystem::path& root);

} // namespace vos::data
