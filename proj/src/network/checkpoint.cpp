#include "network/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string_view>

#include <fmt/format.h>

#include "common/error.hpp"

namespace vos::net {

namespace {

constexpr std::string_view kMagic{"VOSCKPT\0", 8};

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    void need(std::size_t n, const char* what) const {
        if (pos_ + n > in_.size())
            fail_invalid(fmt::format("checkpoint truncated at byte {} reading {} ({} bytes needed, {} left)", pos_,
                                     what, n, in_.size() - pos_));
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return in_[pos_++];
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == in_.size(); }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
    const auto& c = model.config();
    Writer w;
    w.bytes(kMagic.data(), kMagic.size());
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(c.input_channels));
    w.u32(static_cast<std::uint32_t>(c.upsample_mode));
    w.u32(static_cast<std::uint32_t>(c.convs_per_level));
    w.u32(static_cast<std::uint32_t>(c.kernel_size));
    w.u8(c.skip_connections ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(c.encoder_filters.size()));
    for (auto f : c.encoder_filters) w.u32(static_cast<std::uint32_t>(f));
    w.u32(static_cast<std::uint32_t>(model.params().size()));
    for (const auto& p : model.params()) {
        w.u32(static_cast<std::uint32_t>(p.name.size()));
        w.bytes(p.name.data(), p.name.size());
        w.u32(static_cast<std::uint32_t>(p.tensor.rank()));
        for (auto d : p.tensor.shape()) w.u64(d);
        for (double v : p.tensor.values()) w.f64(v);
    }
    return w.take();
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (r.str(kMagic.size(), "magic") != kMagic) fail_invalid("checkpoint: bad magic at byte 0");
    const auto version = r.u32("version");
    if (version != kCheckpointVersion)
        fail_invalid(fmt::format("checkpoint: unsupported version {} (expected {})", version, kCheckpointVersion));
    ModelConfig c;
    c.input_channels = r.u32("input_channels");
    const auto mode = r.u32("upsample_mode");
    if (mode > 1) fail_invalid(fmt::format("checkpoint: unknown upsample mode {}", mode));
    c.upsample_mode = static_cast<UpsampleMode>(mode);
    c.convs_per_level = r.u32("convs_per_level");
    c.kernel_size = r.u32("kernel_size");
    const auto skip = r.u8("skip_connections");
    if (skip > 1) fail_invalid(fmt::format("checkpoint: skip flag must be 0 or 1, got {}", skip));
    c.skip_connections = skip == 1;
    const auto nf = r.u32("filter_count");
    r.need(std::size_t{4} * nf, "filters");
    c.encoder_filters.clear();
    for (std::uint32_t i = 0; i < nf; ++i) c.encoder_filters.push_back(r.u32("filter"));
    validate_config(c);

    const auto np = r.u32("param_count");
    std::vector<NamedParam> params;
    for (std::uint32_t i = 0; i < np; ++i) {
        const auto len = r.u32("name length");
        auto name = r.str(len, "name");
        const auto rank = r.u32("rank");
        if (rank == 0 || rank > 8) fail_invalid(fmt::format("checkpoint: parameter '{}' has rank {}", name, rank));
        ad::Shape shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u64("dim"));
        const auto n = ad::shape_numel(shape);
        r.need(n * 8, "payload");
        std::vector<double> values(n);
        for (auto& v : values) v = r.f64("value");
        params.push_back({std::move(name), ad::Tensor::from(std::move(shape), std::move(values), true)});
    }
    if (!r.done()) fail_invalid(fmt::format("checkpoint: trailing bytes after offset {}", r.pos()));
    return Model::from_parameters(c, std::move(params));
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_io(fmt::format("cannot open '{}' for writing", path.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail_io(fmt::format("failed writing '{}'", path.string()));
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_io(fmt::format("cannot open checkpoint '{}'", path.string()));
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

} // namespace vos::net
