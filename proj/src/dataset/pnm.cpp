#include "dataset/pnm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include <fmt/format.h>

#include "common/error.hpp"

namespace vos::data {

namespace {

struct Header {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t payload_offset = 0;
};

class HeaderParser {
public:
    explicit HeaderParser(std::span<const std::uint8_t> in) : in_(in) {}

    void skip_space_and_comments() {
        while (pos_ < in_.size()) {
            if (in_[pos_] == '#') {
                while (pos_ < in_.size() && in_[pos_] != '\n') ++pos_;
            } else if (std::isspace(in_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t number(const char* what) {
        skip_space_and_comments();
        const auto start = pos_;
        std::size_t v = 0;
        while (pos_ < in_.size() && std::isdigit(in_[pos_])) {
            v = v * 10 + (in_[pos_] - '0');
            if (v > 1'000'000) fail_invalid(fmt::format("pnm: {} too large at byte {}", what, start));
            ++pos_;
        }
        if (pos_ == start) fail_invalid(fmt::format("pnm: expected {} at byte {}", what, start));
        return v;
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }
    std::span<const std::uint8_t> input() const { return in_; }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

Header parse_header(std::span<const std::uint8_t> bytes, char kind) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != kind)
        fail_invalid(fmt::format("pnm: bad magic at byte 0, expected 'P{}'", kind));
    HeaderParser p(bytes);
    p.advance(2);
    Header h;
    h.width = p.number("width");
    h.height = p.number("height");
    const auto maxval_at = p.pos();
    const auto maxval = p.number("maxval");
    if (maxval != 255) fail_invalid(fmt::format("pnm: maxval {} at byte {} unsupported (must be 255)", maxval, maxval_at));
    if (h.width == 0 || h.height == 0) fail_invalid("pnm: zero image dimension");
    if (p.pos() >= bytes.size() || !std::isspace(bytes[p.pos()]))
        fail_invalid(fmt::format("pnm: expected single whitespace after maxval at byte {}", p.pos()));
    h.payload_offset = p.pos() + 1;
    return h;
}

void check_payload(std::span<const std::uint8_t> bytes, const Header& h, std::size_t expected) {
    const auto actual = bytes.size() - h.payload_offset;
    if (actual < expected)
        fail_invalid(fmt::format("pnm: truncated payload at byte {}: expected {} bytes, got {}", h.payload_offset,
                                 expected, actual));
}

std::vector<std::uint8_t> header_bytes(char kind, std::size_t w, std::size_t h) {
    const auto s = fmt::format("P{}\n{} {}\n255\n", kind, w, h);
    return {s.begin(), s.end()};
}

} // namespace

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
    auto out = header_bytes('6', image.width, image.height);
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
    const auto h = parse_header(bytes, '6');
    const auto expected = h.width * h.height * 3;
    check_payload(bytes, h, expected);
    RgbImage img(h.height, h.width);
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset), expected, img.pixels.begin());
    return img;
}

std::vector<std::uint8_t> encode_pgm(const InstanceMask& mask) {
    auto out = header_bytes('5', mask.width, mask.height);
    out.insert(out.end(), mask.data.begin(), mask.data.end());
    return out;
}

InstanceMask decode_pgm(std::span<const std::uint8_t> bytes) {
    const auto h = parse_header(bytes, '5');
    const auto expected = h.width * h.height;
    check_payload(bytes, h, expected);
    InstanceMask m(h.height, h.width);
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset), expected, m.data.begin());
    return m;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_io(fmt::format("cannot open '{}'", path.string()));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_io(fmt::format("cannot open '{}' for writing", path.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail_io(fmt::format("failed writing '{}'", path.string()));
}

RgbImage read_ppm(const std::filesystem::path& path) {
    try {
        return decode_ppm(read_file(path));
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Invalid) throw;
        fail_invalid(fmt::format("{}: {}", path.string(), e.what()));
    }
}

InstanceMask read_pgm(const std::filesystem::path& path) {
    try {
        return decode_pgm(read_file(path));
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Invalid) throw;
        fail_invalid(fmt::format("{}: {}", path.string(), e.what()));
    }
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) { write_file(path, encode_ppm(image)); }
void write_pgm(const std::filesystem::path& path, const InstanceMask& mask) { write_file(path, encode_pgm(mask)); }

} // namespace vos::data
