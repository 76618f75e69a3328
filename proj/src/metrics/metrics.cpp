#include "metrics/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "common/error.hpp"
#include "isolation/isolation.hpp"

namespace vos::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Felzenszwalb-Huttenlocher lower envelope of parabolas, one line.
void edt_1d(const double* f, std::size_t n, double* d, std::vector<std::size_t>& v, std::vector<double>& z) {
    std::size_t k = 0;
    std::size_t first = n;
    for (std::size_t q = 0; q < n; ++q)
        if (f[q] < kInf) {
            first = q;
            break;
        }
    if (first == n) {
        std::fill(d, d + n, kInf);
        return;
    }
    v[0] = first;
    z[0] = -kInf;
    z[1] = kInf;
    for (std::size_t q = first + 1; q < n; ++q) {
        if (!(f[q] < kInf)) continue;
        const auto qd = static_cast<double>(q);
        double s = 0.0;
        while (true) {
            const auto vk = static_cast<double>(v[k]);
            s = ((f[q] + qd * qd) - (f[v[k]] + vk * vk)) / (2.0 * qd - 2.0 * vk);
            if (s <= z[k] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        while (z[k + 1] < static_cast<double>(q)) ++k;
        const double dq = static_cast<double>(q) - static_cast<double>(v[k]);
        d[q] = dq * dq + f[v[k]];
    }
}

std::size_t count(const BoundaryMap& b) {
    std::size_t n = 0;
    for (auto v : b.data) n += v ? 1 : 0;
    return n;
}

double matched_fraction(const BoundaryMap& from, const std::vector<double>& dist_to_other, double tol2) {
    std::size_t total = 0, hit = 0;
    for (std::size_t i = 0; i < from.size(); ++i) {
        if (!from[i]) continue;
        ++total;
        if (dist_to_other[i] <= tol2) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(total);
}

double mean(const std::vector<double>& xs) {
    double acc = 0.0;
    for (double x : xs) acc += x;
    return xs.empty() ? 0.0 : acc / static_cast<double>(xs.size());
}

} // namespace

double region_similarity_j(const BinaryMask& m, const BinaryMask& g) {
    require_same_dims(m, g, "region_similarity_j");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        const bool a = m[i] != 0, b = g[i] != 0;
        inter += (a && b) ? 1 : 0;
        uni += (a || b) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

BoundaryMap extract_boundary(const BinaryMask& mask) {
    BoundaryMap out(mask.height, mask.width);
    const auto h = mask.height, w = mask.width;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            if (!mask.at(y, x)) continue;
            const bool edge = y == 0 || x == 0 || y + 1 == h || x + 1 == w;
            if (edge || !mask.at(y - 1, x) || !mask.at(y + 1, x) || !mask.at(y, x - 1) || !mask.at(y, x + 1))
                out.at(y, x) = 1;
        }
    return out;
}

std::vector<double> squared_distance_transform(const BoundaryMap& sites) {
    const auto h = sites.height, w = sites.width;
    std::vector<double> grid(h * w);
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = sites[i] ? 0.0 : kInf;
    const auto n = std::max(h, w);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<std::size_t> v(n);
    for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t y = 0; y < h; ++y) f[y] = grid[y * w + x];
        edt_1d(f.data(), h, d.data(), v, z);
        for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = d[y];
    }
    for (std::size_t y = 0; y < h; ++y) {
        std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(y * w), w, f.begin());
        edt_1d(f.data(), w, d.data(), v, z);
        std::copy_n(d.begin(), w, grid.begin() + static_cast<std::ptrdiff_t>(y * w));
    }
    return grid;
}

BoundaryScore boundary_f(const BinaryMask& m, const BinaryMask& g, double tolerance) {
    require_same_dims(m, g, "boundary_f");
    if (!(tolerance >= 0.0)) fail_invalid(fmt::format("boundary_f: tolerance must be >= 0, got {}", tolerance));
    const auto mb = extract_boundary(m);
    const auto gb = extract_boundary(g);
    const auto nm = count(mb), ng = count(gb);
    BoundaryScore s;
    if (nm == 0 && ng == 0) return {1.0, 1.0, 1.0};
    if (nm == 0) return {1.0, 0.0, 0.0};
    if (ng == 0) return {0.0, 1.0, 0.0};
    const double tol2 = tolerance * tolerance;
    s.precision = matched_fraction(mb, squared_distance_transform(gb), tol2);
    s.recall = matched_fraction(gb, squared_distance_transform(mb), tol2);
    s.f = (s.precision + s.recall) == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

double default_tolerance(std::size_t height, std::size_t width) {
    const double diag = std::sqrt(static_cast<double>(height * height + width * width));
    return std::ceil(0.008 * diag);
}

FrameScore score_frame(const BinaryMask& m, const BinaryMask& g, double tolerance) {
    const auto b = boundary_f(m, g, tolerance);
    return {region_similarity_j(m, g), b.f, b.precision, b.recall};
}

EvalReport evaluate_dataset(std::span<const SequenceMasks> predictions, std::span<const SequenceMasks> ground_truth,
                            std::optional<double> tolerance) {
    std::map<std::string, const SequenceMasks*> preds;
    for (const auto& p : predictions)
        if (!preds.emplace(p.id, &p).second) fail_invalid(fmt::format("duplicate prediction sequence '{}'", p.id));
    std::map<std::string, const SequenceMasks*> gts;
    for (const auto& g : ground_truth)
        if (!gts.emplace(g.id, &g).second) fail_invalid(fmt::format("duplicate ground-truth sequence '{}'", g.id));

    EvalReport report;
    std::vector<double> js, fs;
    for (const auto& [id, gt] : gts) {
        auto it = preds.find(id);
        if (it == preds.end()) fail_invalid(fmt::format("no predictions for sequence '{}'", id));
        const auto& pr = *it->second;
        if (pr.frames.size() != gt->frames.size())
            fail_invalid(fmt::format("sequence '{}': {} predicted frames vs {} ground-truth frames", id,
                                     pr.frames.size(), gt->frames.size()));
        if (gt->frames.empty()) continue;
        const auto& first = gt->frames.front();
        const double tol = tolerance.value_or(default_tolerance(first.height, first.width));

        std::vector<std::uint8_t> labels;
        {
            std::array<bool, 256> present{};
            for (auto v : first.data) present[v] = true;
            for (std::size_t l = 1; l < 256; ++l)
                if (present[l]) labels.push_back(static_cast<std::uint8_t>(l));
        }
        for (auto label : labels) {
            InstanceScores inst{id, label, {}, 0.0, 0.0};
            std::vector<double> fj, ff;
            for (std::size_t t = 1; t < gt->frames.size(); ++t) {
                require_same_dims(pr.frames[t], gt->frames[t],
                                  fmt::format("sequence '{}' frame {}", id, t).c_str());
                const auto score = score_frame(iso::isolate_one(pr.frames[t], label),
                                               iso::isolate_one(gt->frames[t], label), tol);
                inst.frames.push_back(score);
                fj.push_back(score.j);
                ff.push_back(score.f);
            }
            if (inst.frames.empty()) continue;
            inst.j_mean = mean(fj);
            inst.f_mean = mean(ff);
            js.push_back(inst.j_mean);
            fs.push_back(inst.f_mean);
            report.entries.push_back(std::move(inst));
        }
    }
    report.j_mean = mean(js);
    report.f_mean = mean(fs);
    return report;
}

std::string format_report_text(const EvalReport& report) {
    std::string out;
    for (const auto& e : report.entries)
        out += fmt::format("sequence={} instance={} frames={} j_mean={:.6f} f_mean={:.6f}\n", e.sequence, e.instance,
                           e.frames.size(), e.j_mean, e.f_mean);
    out += fmt::format("global pairs={} j_mean={:.6f} f_mean={:.6f}\n", report.entries.size(), report.j_mean,
                       report.f_mean);
    return out;
}

std::string format_report_csv(const EvalReport& report) {
    std::string out = "sequence,instance,frames,j_mean,f_mean\n";
    for (const auto& e : report.entries)
        out += fmt::format("{},{},{},{:.6f},{:.6f}\n", e.sequence, e.instance, e.frames.size(), e.j_mean, e.f_mean);
    out += fmt::format("global,,{},{:.6f},{:.6f}\n", report.entries.size(), report.j_mean, report.f_mean);
    return out;
}

std::string format_frames_csv(const EvalReport& report) {
    std::string out = "sequence,instance,frame,j,f,precision,recall\n";
    for (const auto& e : report.entries)
        for (std::size_t i = 0; i < e.frames.size(); ++i) {
            const auto& s = e.frames[i];
            out += fmt::format("{},{},{},{:.6f},{:.6f},{:.6f},{:.6f}\n", e.sequence, e.instance, i + 1, s.j, s.f,
                               s.precision, s.recall);
        }
    return out;
}

} // namespace vos::metrics
