#pragma once

#include "colormamba/color.hpp"

namespace colormamba {

struct ModelConfig {
    int64_t in_channels = 1;
    int64_t depth = 3;  // resolution levels; inputs must divide by 2^depth
    std::vector<int64_t> widths = {16, 32, 64};
    int64_t state_size = 4;
    int64_t agent_count = 16;
    int64_t conv_kernel = 3;
    int64_t tex_channels = 8;
    int64_t disc_width = 16;
    bool use_mamba = true;
    bool use_attention = true;
    bool learnable_padding = true;
    ScanKind scan_kind = ScanKind::kSequential;

    void validate() const;
    VssbConfig vssb_config(int64_t channels) const;
};

// Shared encoder trunk: a VSSB per level with stride-2 convs between levels.
struct UnetEncoder {
    std::vector<Conv2dLayer> down;  // depth-1 entries
    std::vector<Vssb> blocks;       // depth entries

    static UnetEncoder init(const ModelConfig& cfg, Rng& rng);
    // Per-level features after each block, fine -> coarse.
    std::vector<Tensor> forward(const Tensor& stem_out) const;
    NamedParams named_params(const std::string& prefix) const;
};

// HSV Color Prediction Sub-network. Produces the HSV color map, the
// multi-scale decoder features used as SPADE conditioning, and the texture
// map consumed by the fusion head.
struct GeneratorB {
    ModelConfig cfg;
    Sfe sfe;
    UnetEncoder encoder;
    std::vector<Conv2dLayer> up_conv;    // depth-1
    std::vector<Conv2dLayer> skip_fuse;  // depth-1, 1x1
    Conv2dLayer hsv_head;

    struct Output {
        Tensor y_hsv;                    // (1,H,W,3) in [0,1]
        std::vector<Tensor> multiscale;  // coarse -> fine, one per level
        Tensor x_tex;                    // (1,H,W,tex_channels)
    };

    static GeneratorB init(const ModelConfig& cfg, Rng& rng);
    Output forward(const Tensor& nir) const;
    NamedParams named_params(const std::string& prefix) const;
};

// RGB Reconstruction Network with SPADE-conditioned decoder and the
// texture/cross-attention fusion head.
struct GeneratorA {
    ModelConfig cfg;
    Conv2dLayer stem;
    UnetEncoder encoder;
    SpadeResblock bottleneck_spade;
    std::vector<Conv2dLayer> up_conv;
    std::vector<Conv2dLayer> skip_fuse;
    std::vector<SpadeResblock> spade;  // depth-1, conditioned per scale
    Conv2dLayer color_proj;            // finest G_B feature -> fusion width
    SpadeResblock fusion_spade;        // texture-enriched color map
    CrissCrossFusion fuse;
    Conv2dLayer out_conv;

    static GeneratorA init(const ModelConfig& cfg, Rng& rng);
    Tensor forward(const Tensor& nir, const std::vector<Tensor>& multiscale,
                   const Tensor& x_tex) const;
    NamedParams named_params(const std::string& prefix) const;
};

// Patch critic: stride-2 conv stack emitting a logits map.
struct Discriminator {
    Conv2dLayer c1, c2, c3, head;

    static Discriminator init(const ModelConfig& cfg, Rng& rng);
    Tensor forward(const Tensor& rgb) const;  // (1,H,W,3) -> (1,H/8,W/8,1)
    NamedParams named_params(const std::string& prefix) const;
};

struct GeneratorOutputs {
    Tensor y_rgb;
    Tensor y_hsv;
    std::vector<Tensor> multiscale;
    Tensor x_tex;
};

GeneratorOutputs generator_forward(const GeneratorA& ga, const GeneratorB& gb,
                                   const Tensor& nir);

// Rejects spatial sizes that would truncate inside the U-Net.
void check_divisibility(const ModelConfig& cfg, int64_t h, int64_t w);

}  // namespace colormamba
