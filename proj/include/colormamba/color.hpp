#pragma once

#include "colormamba/blocks.hpp"

namespace colormamba {

// Hexcone conversions on (H,W,3) value tensors. Hue normalized to [0,1);
// achromatic pixels map to H=0, S=0. Out-of-range inputs are clamped and
// counted rather than rejected.
Tensor rgb_to_hsv(const Tensor& img);
Tensor hsv_to_rgb(const Tensor& img);

int64_t color_clamp_count();
void reset_color_clamp_count();

// Replicates NIR to three channels and converts: H=0, S=0, V=nir.
// Accepts (H,W,1) or (1,H,W,1) and matches the input rank.
Tensor to_hsv_from_nir(const Tensor& nir);

// Fixed 4-neighbour Laplacian [[0,1,0],[1,-4,1],[0,1,0]], replicate padding.
// Differentiable with respect to x.
Tensor laplacian_edge(const Tensor& x);

// Shallow Feature Extraction: HSV embedding + edge map + texture conv, then
// a 5-channel concat projected to the embedding width.
struct Sfe {
    Conv2dLayer tex_conv;    // 1 -> tex_channels
    Conv2dLayer embed_conv;  // 5 -> embed_width

    struct Output {
        Tensor x_hsv;      // (1,H,W,3), constant w.r.t. parameters
        Tensor x_edge;     // (1,H,W,1)
        Tensor x_tex;      // (1,H,W,tex_channels), fusion texture input
        Tensor x_nir_hsv;  // (1,H,W,embed_width)
    };

    static Sfe init(int64_t embed_width, int64_t tex_channels, Rng& rng);
    Output forward(const Tensor& nir) const;  // (1,H,W,1)
    NamedParams named_params(const std::string& prefix) const;
};

}  // namespace colormamba
