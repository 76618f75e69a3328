#include "dataset/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "common/error.hpp"
#include "common/random.hpp"
#include "isolation/isolation.hpp"

namespace vos::data {

namespace {

constexpr std::size_t kMaxAttempts = 2000;
constexpr std::size_t kMinGap = 2; // background pixels kept between instances in the default motion model

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0, std::uint64_t d = 0) {
    return splitmix(splitmix(splitmix(splitmix(a) ^ b) ^ c) ^ d);
}

struct Track {
    ShapeKind kind = ShapeKind::Disc;
    double radius = 0.0;
    std::vector<double> cx, cy;
    std::array<double, 3> color{};
};

bool covers(const Track& tr, std::size_t t, double x, double y) {
    const double dx = x - tr.cx[t], dy = y - tr.cy[t], r = tr.radius;
    switch (tr.kind) {
    case ShapeKind::Disc: return dx * dx + dy * dy <= r * r;
    case ShapeKind::Square: return std::abs(dx) < r && std::abs(dy) < r;
    case ShapeKind::Triangle: return dy >= -r && dy < r && std::abs(dx) <= (dy + r) / 2.0;
    }
    return false;
}

BinaryMask render(const Track& tr, std::size_t t, std::size_t size) {
    BinaryMask m(size, size);
    const double r = tr.radius + 1.0;
    const auto lo = [&](double c) { return static_cast<std::ptrdiff_t>(std::floor(c - r)); };
    const auto hi = [&](double c) { return static_cast<std::ptrdiff_t>(std::ceil(c + r)); };
    const auto n = static_cast<std::ptrdiff_t>(size);
    for (auto y = std::max<std::ptrdiff_t>(0, lo(tr.cy[t])); y <= std::min(n - 1, hi(tr.cy[t])); ++y)
        for (auto x = std::max<std::ptrdiff_t>(0, lo(tr.cx[t])); x <= std::min(n - 1, hi(tr.cx[t])); ++x)
            if (covers(tr, t, static_cast<double>(x), static_cast<double>(y)))
                m.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 1;
    return m;
}

// Reflecting walk keeping the shape fully inside the frame.
void bouncing_motion(Rng& rng, Track& tr, const SyntheticConfig& c) {
    const double lo = tr.radius, hi = static_cast<double>(c.image_size) - 1.0 - tr.radius;
    double x = rng.uniform(lo, hi), y = rng.uniform(lo, hi);
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double speed = rng.uniform(c.min_speed, c.max_speed);
    double vx = speed * std::cos(angle), vy = speed * std::sin(angle);
    const auto reflect = [&](double& p, double& v) {
        if (p < lo) p = 2.0 * lo - p, v = -v;
        if (p > hi) p = 2.0 * hi - p, v = -v;
    };
    for (std::size_t t = 0; t < c.frames; ++t) {
        tr.cx.push_back(x);
        tr.cy.push_back(y);
        x += vx;
        y += vy;
        reflect(x, vx);
        reflect(y, vy);
    }
}

// Two tracks moving in opposite directions that meet near the image centre
// at the middle frame.
void crossing_motion(Rng& rng, Track& a, Track& b, const SyntheticConfig& c) {
    const double size = static_cast<double>(c.image_size);
    const double r = std::max(a.radius, b.radius);
    const double half = static_cast<double>(c.frames) / 2.0;
    const double reach = size / 2.0 - r * std::numbers::sqrt2 - 2.0;
    const double max_speed = std::max(0.25, std::min(c.max_speed, reach / std::max(half, 1.0)));
    const double speed = std::min(rng.uniform(c.min_speed, c.max_speed), max_speed);
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double ux = std::cos(angle), uy = std::sin(angle);
    const double offset = rng.uniform(0.0, std::min(a.radius, b.radius) / 2.0);
    const double mx = size / 2.0 + rng.uniform(-2.0, 2.0), my = size / 2.0 + rng.uniform(-2.0, 2.0);
    const auto mid = static_cast<double>(c.frames / 2);
    for (std::size_t t = 0; t < c.frames; ++t) {
        const double d = (static_cast<double>(t) - mid) * speed;
        a.cx.push_back(mx + ux * d - uy * offset / 2.0);
        a.cy.push_back(my + uy * d + ux * offset / 2.0);
        b.cx.push_back(mx - ux * d + uy * offset / 2.0);
        b.cy.push_back(my - uy * d - ux * offset / 2.0);
    }
}

// Heads for the nearest vertical edge, stays fully outside for a frame,
// then retraces its path back into view.
void exit_return_motion(Rng& rng, Track& tr, const SyntheticConfig& c) {
    const double size = static_cast<double>(c.image_size);
    const double r = tr.radius;
    const bool right = rng.uniform() < 0.5;
    const double speed = std::max(c.max_speed, 2.0 * r / std::max(1.0, static_cast<double>(c.frames) / 4.0));
    const double vx = right ? speed : -speed;
    const double vy = rng.uniform(-0.5, 0.5);
    const double x0 = right ? size - 1.0 - r - rng.uniform(0.0, 3.0) : r + rng.uniform(0.0, 3.0);
    const double y0 = rng.uniform(r + 4.0, size - 1.0 - r - 4.0);
    const auto outside = [&](double x) { return right ? x - r > size - 1.0 : x + r < 0.0; };
    std::size_t turn = c.frames;
    for (std::size_t t = 0; t < c.frames; ++t)
        if (outside(x0 + vx * static_cast<double>(t))) {
            turn = t + 1;
            break;
        }
    for (std::size_t t = 0; t < c.frames; ++t) {
        const double steps = t <= turn ? static_cast<double>(t) : 2.0 * static_cast<double>(turn) - static_cast<double>(t);
        tr.cx.push_back(x0 + vx * steps);
        tr.cy.push_back(std::clamp(y0 + vy * static_cast<double>(t), r, size - 1.0 - r));
    }
}

bool within_gap(const BinaryMask& a, const BinaryMask& b, std::size_t gap) {
    const auto n = static_cast<std::ptrdiff_t>(a.height);
    const auto g = static_cast<std::ptrdiff_t>(gap);
    for (std::ptrdiff_t y = 0; y < n; ++y)
        for (std::ptrdiff_t x = 0; x < n; ++x) {
            if (!a.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x))) continue;
            for (auto yy = std::max<std::ptrdiff_t>(0, y - g); yy <= std::min(n - 1, y + g); ++yy)
                for (auto xx = std::max<std::ptrdiff_t>(0, x - g); xx <= std::min(n - 1, x + g); ++xx)
                    if (b.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx))) return true;
        }
    return false;
}

ShapeKind pick_shape(Rng& rng, const SyntheticConfig& c) { return c.shapes[rng.below(c.shapes.size())]; }

std::array<double, 3> instance_color(Rng& rng, std::size_t k) {
    static constexpr std::array<std::array<double, 3>, 4> palette{{
        {220, 40, 40}, {40, 200, 60}, {50, 80, 230}, {230, 210, 40},
    }};
    auto c = palette[k % palette.size()];
    for (auto& v : c) v = std::clamp(v + rng.uniform(-20.0, 20.0), 0.0, 255.0);
    return c;
}

struct Texture {
    std::array<double, 3> base{};
    struct Wave {
        double amp, fx, fy, phase;
    };
    std::array<std::array<Wave, 3>, 3> waves{};
    std::vector<double> grain; // static per-pixel noise, 3 per pixel
};

Texture make_texture(Rng& rng, std::size_t size) {
    Texture tex;
    for (std::size_t ch = 0; ch < 3; ++ch) {
        tex.base[ch] = rng.uniform(70.0, 150.0);
        for (auto& w : tex.waves[ch]) {
            const double wavelength = rng.uniform(10.0, 30.0);
            const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double k = 2.0 * std::numbers::pi / wavelength;
            w = {rng.uniform(6.0, 14.0), k * std::cos(dir), k * std::sin(dir), rng.uniform(0.0, 2.0 * std::numbers::pi)};
        }
    }
    tex.grain.resize(size * size * 3);
    for (auto& g : tex.grain) g = rng.uniform(-6.0, 6.0);
    return tex;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

} // namespace

void validate_synthetic(const SyntheticConfig& c) {
    if (c.image_size == 0 || c.image_size % 16 != 0)
        fail_invalid(fmt::format("synthetic config: image size {} must be a positive multiple of 16", c.image_size));
    if (c.train_sequences + c.val_sequences == 0) fail_invalid("synthetic config: no sequences requested");
    if (c.frames == 0) fail_invalid("synthetic config: frames must be positive");
    if (c.instances < 1 || c.instances > 4)
        fail_invalid(fmt::format("synthetic config: instances must be in 1..4, got {}", c.instances));
    if (c.crossing && c.instances < 2) fail_invalid("synthetic config: crossing needs at least 2 instances");
    if (c.shapes.empty()) fail_invalid("synthetic config: no shape kinds enabled");
    if (!(c.min_radius >= 1.0 && c.max_radius >= c.min_radius &&
          c.max_radius * 2.0 + 2.0 < static_cast<double>(c.image_size)))
        fail_invalid("synthetic config: radius range invalid for the image size");
    if (!(c.min_speed >= 0.0 && c.max_speed >= c.min_speed)) fail_invalid("synthetic config: speed range invalid");
    if (!(c.min_fg_fraction >= 0.0 && c.max_fg_fraction <= 1.0 && c.min_fg_fraction <= c.max_fg_fraction))
        fail_invalid("synthetic config: foreground fraction bounds invalid");
}

VideoSequence generate_sequence(const SyntheticConfig& c, std::size_t ordinal, const std::string& id) {
    validate_synthetic(c);
    const auto size = c.image_size;
    Rng rng(derive_seed(c.seed, ordinal, 0x5eed));
    const bool enforce = !c.crossing && !c.exit_return;

    std::vector<Track> tracks;
    std::vector<std::vector<BinaryMask>> layers; // [instance][frame], unoccluded
    bool ok = false;
    for (std::size_t attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
        tracks.assign(c.instances, Track{});
        for (std::size_t k = 0; k < c.instances; ++k) {
            tracks[k].kind = pick_shape(rng, c);
            tracks[k].radius = rng.uniform(c.min_radius, c.max_radius);
            tracks[k].color = instance_color(rng, k);
        }
        std::size_t first_free = 0;
        if (c.crossing) {
            crossing_motion(rng, tracks[0], tracks[1], c);
            first_free = 2;
        } else if (c.exit_return) {
            exit_return_motion(rng, tracks[0], c);
            first_free = 1;
        }
        for (std::size_t k = first_free; k < c.instances; ++k) bouncing_motion(rng, tracks[k], c);

        layers.assign(c.instances, {});
        for (std::size_t k = 0; k < c.instances; ++k)
            for (std::size_t t = 0; t < c.frames; ++t) layers[k].push_back(render(tracks[k], t, size));

        ok = true;
        for (std::size_t t = 0; t < c.frames && ok; ++t) {
            for (std::size_t a = 0; a < c.instances && ok; ++a)
                for (std::size_t b = a + 1; b < c.instances && ok; ++b) {
                    if (c.crossing && a == 0 && b == 1) continue;
                    if (within_gap(layers[a][t], layers[b][t], kMinGap)) ok = false;
                }
            if (!ok || !enforce) continue;
            std::size_t fg = 0;
            for (std::size_t i = 0; i < size * size; ++i) {
                bool any = false;
                for (std::size_t k = 0; k < c.instances; ++k) any = any || layers[k][t][i];
                fg += any ? 1 : 0;
            }
            const double frac = static_cast<double>(fg) / static_cast<double>(size * size);
            if (frac < c.min_fg_fraction || frac > c.max_fg_fraction) ok = false;
        }
        // Every instance must be visible in the annotated first frame.
        for (std::size_t k = 0; k < c.instances && ok; ++k)
            ok = std::any_of(layers[k][0].data.begin(), layers[k][0].data.end(), [](auto v) { return v != 0; });
    }
    if (!ok)
        fail_invalid(fmt::format("synthetic config: could not place {} instances within {} attempts for '{}'",
                                 c.instances, kMaxAttempts, id));

    Rng tex_rng(derive_seed(c.seed, ordinal, c.background_seed, 0x7e47));
    const auto tex = make_texture(tex_rng, size);

    VideoSequence seq;
    seq.id = id;
    for (std::size_t t = 0; t < c.frames; ++t) {
        InstanceMask labels(size, size);
        for (std::size_t k = 0; k < c.instances; ++k)
            for (std::size_t i = 0; i < size * size; ++i)
                if (layers[k][t][i]) labels[i] = static_cast<std::uint8_t>(k + 1);

        Rng frame_rng(derive_seed(c.seed, ordinal, t, 0xf4a3e));
        RgbImage img(size, size);
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                auto* px = img.px(y, x);
                const auto label = labels.at(y, x);
                for (std::size_t ch = 0; ch < 3; ++ch) {
                    double v;
                    if (label) {
                        v = tracks[label - 1].color[ch] + frame_rng.uniform(-4.0, 4.0);
                    } else {
                        v = tex.base[ch] + tex.grain[(y * size + x) * 3 + ch] + frame_rng.uniform(-3.0, 3.0);
                        for (const auto& w : tex.waves[ch])
                            v += w.amp * std::sin(w.fx * static_cast<double>(x) + w.fy * static_cast<double>(y) +
                                                  w.phase);
                    }
                    px[ch] = to_byte(v);
                }
            }
        seq.frames.push_back(std::move(img));
        seq.ground_truth.push_back(std::move(labels));
    }
    seq.first_mask = seq.ground_truth.front();
    return seq;
}

std::string synthetic_sequence_id(const std::string& split, std::size_t i) { return fmt::format("{}-{:03d}", split, i); }

DatasetIndex generate_synthetic(const SyntheticConfig& c, const std::filesystem::path& out) {
    validate_synthetic(c);
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec || !std::filesystem::is_directory(out))
        fail_io(fmt::format("cannot create output directory '{}'", out.string()));

    DatasetIndex index{out, {}};
    std::size_t ordinal = 0;
    const auto emit = [&](const std::string& split, std::size_t count) {
        for (std::size_t i = 0; i < count; ++i, ++ordinal) {
            const auto id = synthetic_sequence_id(split, i);
            const auto seq = generate_sequence(c, ordinal, id);
            save_sequence(out / split / id, seq);
            index.entries.push_back({split, id, seq.length(), seq.instance_count()});
        }
    };
    emit("train", c.train_sequences);
    emit("val", c.val_sequences);
    write_index(index);
    return index;
}

} // namespace vos::data
