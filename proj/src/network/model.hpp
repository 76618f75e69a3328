#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tensor/tensor.hpp"

namespace vos::net {

enum class UpsampleMode : std::uint32_t { NearestConv = 0, TransposedConv = 1 };

struct ModelConfig {
    std::vector<std::size_t> encoder_filters{64, 128, 256, 512};
    bool skip_connections = true;
    std::size_t input_channels = 4;
    UpsampleMode upsample_mode = UpsampleMode::NearestConv;
    std::size_t convs_per_level = 2;
    std::size_t kernel_size = 3;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// U-Net: skips on, nearest-neighbour upsampling followed by a 2x2 conv.
ModelConfig unet_config(std::vector<std::size_t> filters);
// Skip-less decoder with 2x2 stride-2 transposed convolutions.
ModelConfig segnet_config(std::vector<std::size_t> filters);

// Throws unless the filter list is non-empty and strictly increasing and the
// remaining sizes are positive.
void validate_config(const ModelConfig& config);

// Throws naming the first pooling level whose input is not divisible by 2.
void check_spatial(const ModelConfig& config, std::size_t height, std::size_t width);

enum class LayerKind {
    ConvRelu,  // kernel_size conv, same padding, relu
    SaveSkip,  // push the current activation for a later CropConcat
    MaxPool,   // 2x2, stride 2
    UpNearest, // nearest x2 then 2x2 conv (pad bottom/right), channel halving
    UpTransposed, // 2x2 stride-2 transposed conv, channel halving
    CropConcat,   // pop the saved activation and merge it in front
    HeadSigmoid,  // 1x1 conv to one channel, sigmoid
};

struct Layer {
    std::string name;
    LayerKind kind;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
};

struct NamedParam {
    std::string name;
    ad::Tensor tensor;
};

class Model {
public:
    // Dispatches on config.skip_connections.
    static Model build(const ModelConfig& config, std::uint64_t seed);
    static Model build_unet(const ModelConfig& config, std::uint64_t seed);
    static Model build_segnet_variant(const ModelConfig& config, std::uint64_t seed);

    // Rebuilds the layer graph for `config` and adopts `params`; shapes and
    // names must match what the config implies. Used by checkpoint loading.
    static Model from_parameters(const ModelConfig& config, std::vector<NamedParam> params);

    // [N, input_channels, H, W] -> [N, 1, H, W] per-pixel foreground probability.
    ad::Tensor forward(const ad::Tensor& input) const;

    const ModelConfig& config() const noexcept { return config_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    const std::vector<NamedParam>& params() const noexcept { return params_; }
    std::vector<NamedParam>& params() noexcept { return params_; }
    std::size_t param_count() const;

    const ad::Tensor& param(std::string_view name) const;

    // Deep copy: no storage shared with this model.
    Model clone() const;

    void zero_grad();

private:
    Model() = default;

    ModelConfig config_;
    std::vector<Layer> layers_;
    std::vector<NamedParam> params_;
    std::vector<std::size_t> param_index_; // per layer: first param index, or npos
};

std::vector<Layer> layer_graph(const ModelConfig& config);

std::size_t param_count(const Model& model);

} // namespace vos::net
