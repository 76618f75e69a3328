#include "dataset/sequence_io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "common/error.hpp"
#include "dataset/pnm.hpp"
#include "isolation/isolation.hpp"

namespace fs = std::filesystem;

namespace vos::data {

namespace {

// Indices of files named NNNNN.<ext> in dir, sorted; rejects gaps.
std::vector<std::size_t> scan_indices(const fs::path& dir, const std::string& ext) {
    std::vector<std::size_t> idx;
    if (!fs::is_directory(dir)) return idx;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (entry.path().extension() != "." + ext) continue;
        const auto stem = entry.path().stem().string();
        if (stem.size() != 5 || !std::all_of(stem.begin(), stem.end(), [](char c) { return c >= '0' && c <= '9'; }))
            continue;
        idx.push_back(std::stoul(stem));
    }
    std::sort(idx.begin(), idx.end());
    for (std::size_t i = 0; i < idx.size(); ++i)
        if (idx[i] != i)
            fail_invalid(fmt::format("{}: non-contiguous {} indices, missing {}", dir.string(), ext,
                                     frame_name(i, ext.c_str())));
    return idx;
}

std::string dir_name(const fs::path& dir) {
    auto name = dir.filename().string();
    return name.empty() ? dir.parent_path().filename().string() : name;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) fail_io(fmt::format("cannot create directory '{}'", dir.string()));
}

} // namespace

std::size_t VideoSequence::instance_count() const { return iso::instance_count(first_mask); }

std::string frame_name(std::size_t index, const char* extension) { return fmt::format("{:05d}.{}", index, extension); }

VideoSequence load_sequence(const fs::path& dir) {
    if (!fs::is_directory(dir)) fail_io(fmt::format("sequence directory '{}' does not exist", dir.string()));
    const auto frames = scan_indices(dir / "frames", "ppm");
    const auto annots = scan_indices(dir / "annotations", "pgm");
    if (frames.empty()) fail_invalid(fmt::format("{}: missing frames/00000.ppm", dir.string()));
    if (annots.empty()) fail_invalid(fmt::format("{}: missing annotations/00000.pgm", dir.string()));
    if (annots.size() != 1 && annots.size() != frames.size())
        fail_invalid(fmt::format("{}: {} annotations for {} frames (expected 1 or all)", dir.string(), annots.size(),
                                 frames.size()));

    VideoSequence seq;
    seq.id = dir_name(dir);
    for (auto i : frames) seq.frames.push_back(read_ppm(dir / "frames" / frame_name(i, "ppm")));
    std::vector<InstanceMask> masks;
    for (auto i : annots) masks.push_back(read_pgm(dir / "annotations" / frame_name(i, "pgm")));

    const auto& f0 = seq.frames.front();
    for (std::size_t i = 0; i < seq.frames.size(); ++i)
        if (!seq.frames[i].same_dims(f0))
            fail_invalid(fmt::format("{}: frame {} is {}x{}, frame 0 is {}x{}", dir.string(), i,
                                     seq.frames[i].height, seq.frames[i].width, f0.height, f0.width));
    for (std::size_t i = 0; i < masks.size(); ++i)
        if (!masks[i].same_dims(f0))
            fail_invalid(fmt::format("{}: annotation {} is {}x{} but frames are {}x{}", dir.string(), i,
                                     masks[i].height, masks[i].width, f0.height, f0.width));
    seq.first_mask = masks.front();
    if (masks.size() > 1) seq.ground_truth = std::move(masks);
    return seq;
}

void write_annotations(const fs::path& dir, const std::vector<InstanceMask>& masks) {
    ensure_dir(dir / "annotations");
    for (std::size_t i = 0; i < masks.size(); ++i) write_pgm(dir / "annotations" / frame_name(i, "pgm"), masks[i]);
}

void save_sequence(const fs::path& dir, const VideoSequence& sequence) {
    ensure_dir(dir / "frames");
    for (std::size_t i = 0; i < sequence.frames.size(); ++i)
        write_ppm(dir / "frames" / frame_name(i, "ppm"), sequence.frames[i]);
    if (sequence.has_ground_truth())
        write_annotations(dir, sequence.ground_truth);
    else
        write_annotations(dir, {sequence.first_mask});
}

std::vector<IndexEntry> DatasetIndex::split(const std::string& name) const {
    std::vector<IndexEntry> out;
    std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
                 [&](const IndexEntry& e) { return e.split == name; });
    return out;
}

DatasetIndex load_index(const fs::path& root) {
    std::ifstream in(root / "index.txt");
    if (!in) fail_io(fmt::format("cannot open '{}'", (root / "index.txt").string()));
    DatasetIndex index{root, {}};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        IndexEntry e;
        if (!(ls >> e.split >> e.id >> e.frames >> e.instances))
            fail_invalid(fmt::format("{}:{}: malformed index line '{}'", (root / "index.txt").string(), lineno, line));
        index.entries.push_back(std::move(e));
    }
    return index;
}

void write_index(const DatasetIndex& index) {
    ensure_dir(index.root);
    std::string text;
    for (const auto& e : index.entries) text += fmt::format("{} {} {} {}\n", e.split, e.id, e.frames, e.instances);
    write_file(index.root / "index.txt", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<metrics::SequenceMasks> load_annotation_tree(const fs::path& root) {
    if (!fs::is_directory(root)) fail_io(fmt::format("'{}' is not a directory", root.string()));
    std::vector<fs::path> dirs;
    if (fs::is_directory(root / "annotations")) dirs.push_back(root);
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_directory() && fs::is_directory(entry.path() / "annotations")) dirs.push_back(entry.path());

    std::map<std::string, metrics::SequenceMasks> found;
    for (const auto& dir : dirs) {
        metrics::SequenceMasks s;
        s.id = dir_name(dir);
        for (auto i : scan_indices(dir / "annotations", "pgm"))
            s.frames.push_back(read_pgm(dir / "annotations" / frame_name(i, "pgm")));
        if (found.count(s.id)) fail_invalid(fmt::format("sequence id '{}' appears twice under '{}'", s.id, root.string()));
        found.emplace(s.id, std::move(s));
    }
    std::vector<metrics::SequenceMasks> out;
    for (auto& [id, s] : found) out.push_back(std::move(s));
    return out;
}

} // namespace vos::data
