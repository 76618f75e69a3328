#include "network/model.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "common/error.hpp"
#include "common/random.hpp"
#include "tensor/ops.hpp"

namespace vos::net {

namespace {

constexpr std::size_t kNoParams = std::numeric_limits<std::size_t>::max();
constexpr std::size_t kUpKernel = 2;

bool has_params(LayerKind kind) {
    return kind == LayerKind::ConvRelu || kind == LayerKind::UpNearest || kind == LayerKind::UpTransposed ||
           kind == LayerKind::HeadSigmoid;
}

ad::Shape weight_shape(const Layer& l) {
    if (l.kind == LayerKind::UpTransposed) return {l.in_channels, l.out_channels, l.kernel, l.kernel};
    return {l.out_channels, l.in_channels, l.kernel, l.kernel};
}

double init_stddev(const Layer& l) {
    switch (l.kind) {
    case LayerKind::HeadSigmoid: return std::sqrt(1.0 / static_cast<double>(l.in_channels));
    // Each output of a 2x2 stride-2 transposed conv sees exactly in_channels taps.
    case LayerKind::UpTransposed: return std::sqrt(2.0 / static_cast<double>(l.in_channels));
    default: return std::sqrt(2.0 / static_cast<double>(l.in_channels * l.kernel * l.kernel));
    }
}

} // namespace

ModelConfig unet_config(std::vector<std::size_t> filters) {
    ModelConfig c;
    c.encoder_filters = std::move(filters);
    return c;
}

ModelConfig segnet_config(std::vector<std::size_t> filters) {
    ModelConfig c;
    c.encoder_filters = std::move(filters);
    c.skip_connections = false;
    c.upsample_mode = UpsampleMode::TransposedConv;
    return c;
}

void validate_config(const ModelConfig& config) {
    const auto& f = config.encoder_filters;
    if (f.empty()) fail_invalid("model config: encoder_filters must not be empty");
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (f[i] == 0) fail_invalid("model config: filter counts must be positive");
        if (i > 0 && f[i] <= f[i - 1])
            fail_invalid(fmt::format("model config: encoder_filters must be strictly increasing, got [{}]",
                                     fmt::join(f, ",")));
    }
    if (config.input_channels == 0) fail_invalid("model config: input_channels must be positive");
    if (config.convs_per_level == 0) fail_invalid("model config: convs_per_level must be positive");
    if (config.kernel_size == 0 || config.kernel_size % 2 == 0)
        fail_invalid(fmt::format("model config: kernel_size must be odd and positive, got {}", config.kernel_size));
    if (config.upsample_mode != UpsampleMode::NearestConv && config.upsample_mode != UpsampleMode::TransposedConv)
        fail_invalid("model config: unknown upsample mode");
}

void check_spatial(const ModelConfig& config, std::size_t height, std::size_t width) {
    std::size_t h = height, w = width;
    for (std::size_t level = 1; level <= config.encoder_filters.size(); ++level) {
        if (h % 2 != 0 || w % 2 != 0 || h < 2 || w < 2)
            fail_invalid(fmt::format("input {}x{} cannot be pooled at level {} (spatial size {}x{} is not even); "
                                     "sizes must be divisible by {}",
                                     height, width, level, h, w, std::size_t{1} << config.encoder_filters.size()));
        h /= 2;
        w /= 2;
    }
}

std::vector<Layer> layer_graph(const ModelConfig& config) {
    validate_config(config);
    std::vector<Layer> layers;
    const auto k = config.kernel_size;
    const auto& f = config.encoder_filters;
    std::size_t ch = config.input_channels;

    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto prefix = fmt::format("enc{}", i + 1);
        for (std::size_t j = 0; j < config.convs_per_level; ++j) {
            layers.push_back({fmt::format("{}.conv{}", prefix, j + 1), LayerKind::ConvRelu, ch, f[i], k});
            ch = f[i];
        }
        if (config.skip_connections) layers.push_back({prefix + ".skip", LayerKind::SaveSkip, ch, ch, 0});
        layers.push_back({prefix + ".pool", LayerKind::MaxPool, ch, ch, 0});
    }

    const auto bottleneck = 2 * f.back();
    for (std::size_t j = 0; j < config.convs_per_level; ++j) {
        layers.push_back({fmt::format("bottleneck.conv{}", j + 1), LayerKind::ConvRelu, ch, bottleneck, k});
        ch = bottleneck;
    }

    const auto up_kind =
        config.upsample_mode == UpsampleMode::NearestConv ? LayerKind::UpNearest : LayerKind::UpTransposed;
    for (std::size_t i = f.size(); i-- > 0;) {
        const auto prefix = fmt::format("dec{}", i + 1);
        layers.push_back({prefix + ".up", up_kind, ch, f[i], kUpKernel});
        ch = f[i];
        if (config.skip_connections) {
            layers.push_back({prefix + ".merge", LayerKind::CropConcat, ch + f[i], ch + f[i], 0});
            ch += f[i];
        }
        for (std::size_t j = 0; j < config.convs_per_level; ++j) {
            layers.push_back({fmt::format("{}.conv{}", prefix, j + 1), LayerKind::ConvRelu, ch, f[i], k});
            ch = f[i];
        }
    }
    layers.push_back({"head", LayerKind::HeadSigmoid, ch, 1, 1});
    return layers;
}

Model Model::build(const ModelConfig& config, std::uint64_t seed) {
    Model m;
    m.config_ = config;
    m.layers_ = layer_graph(config);
    Rng rng(seed);
    for (const auto& l : m.layers_) {
        if (!has_params(l.kind)) {
            m.param_index_.push_back(kNoParams);
            continue;
        }
        m.param_index_.push_back(m.params_.size());
        const auto shape = weight_shape(l);
        std::vector<double> w(ad::shape_numel(shape));
        const double sd = init_stddev(l);
        for (auto& v : w) v = rng.normal(0.0, sd);
        m.params_.push_back({l.name + ".weight", ad::Tensor::from(shape, std::move(w), true)});
        m.params_.push_back({l.name + ".bias", ad::Tensor::zeros({l.out_channels}, true)});
    }
    return m;
}

Model Model::build_unet(const ModelConfig& config, std::uint64_t seed) {
    if (!config.skip_connections) fail_invalid("build_unet: config has skip connections disabled");
    return build(config, seed);
}

Model Model::build_segnet_variant(const ModelConfig& config, std::uint64_t seed) {
    if (config.skip_connections || config.upsample_mode != UpsampleMode::TransposedConv)
        fail_invalid("build_segnet_variant: config must disable skips and use transposed-conv upsampling");
    return build(config, seed);
}

Model Model::from_parameters(const ModelConfig& config, std::vector<NamedParam> params) {
    Model m = build(config, 0);
    if (params.size() != m.params_.size())
        fail_invalid(fmt::format("parameter set has {} tensors, config implies {}", params.size(), m.params_.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& want = m.params_[i];
        const auto& got = params[i];
        if (got.name != want.name || got.tensor.shape() != want.tensor.shape())
            fail_invalid(fmt::format("parameter {} is '{}' {}, config implies '{}' {}", i, got.name,
                                     ad::shape_str(got.tensor.shape()), want.name,
                                     ad::shape_str(want.tensor.shape())));
        params[i].tensor.set_requires_grad(true);
    }
    m.params_ = std::move(params);
    return m;
}

ad::Tensor Model::forward(const ad::Tensor& input) const {
    if (input.rank() != 4)
        fail_invalid(fmt::format("forward: input must be [N,C,H,W], got {}", ad::shape_str(input.shape())));
    if (input.dim(1) != config_.input_channels)
        fail_invalid(fmt::format("forward: input has {} channels, model expects {}", input.dim(1),
                                 config_.input_channels));
    check_spatial(config_, input.dim(2), input.dim(3));

    const auto pad = config_.kernel_size / 2;
    std::vector<ad::Tensor> skips;
    ad::Tensor x = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        const auto pi = param_index_[i];
        switch (l.kind) {
        case LayerKind::ConvRelu:
            x = ad::relu(ad::conv2d(x, params_[pi].tensor, params_[pi + 1].tensor, 1, pad));
            break;
        case LayerKind::SaveSkip: skips.push_back(x); break;
        case LayerKind::MaxPool: x = ad::maxpool2d(x, 2, 2); break;
        case LayerKind::UpNearest:
            x = ad::conv2d(ad::upsample_nearest(x, 2), params_[pi].tensor, params_[pi + 1].tensor, 1,
                           ad::Padding2d{0, 0, 1, 1});
            break;
        case LayerKind::UpTransposed:
            x = ad::transposed_conv2d(x, params_[pi].tensor, params_[pi + 1].tensor, 2);
            break;
        case LayerKind::CropConcat:
            x = ad::crop_concat(skips.back(), x);
            skips.pop_back();
            break;
        case LayerKind::HeadSigmoid:
            x = ad::sigmoid(ad::conv2d(x, params_[pi].tensor, params_[pi + 1].tensor, 1, 0));
            break;
        }
    }
    return x;
}

std::size_t Model::param_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

const ad::Tensor& Model::param(std::string_view name) const {
    for (const auto& p : params_)
        if (p.name == name) return p.tensor;
    fail_invalid(fmt::format("model has no parameter '{}'", name));
}

Model Model::clone() const {
    Model m;
    m.config_ = config_;
    m.layers_ = layers_;
    m.param_index_ = param_index_;
    m.params_.reserve(params_.size());
    for (const auto& p : params_) {
        auto t = p.tensor.detach();
        t.set_requires_grad(true);
        m.params_.push_back({p.name, std::move(t)});
    }
    return m;
}

void Model::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

std::size_t param_count(const Model& model) { return model.param_count(); }

} // namespace vos::net
