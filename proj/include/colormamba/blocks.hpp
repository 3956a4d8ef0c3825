#pragma once

#include "colormamba/scan2d.hpp"

namespace colormamba {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

void append_params(NamedParams& dst, const NamedParams& src);

// Position-wise affine map; weights (in,out), bias (out).
struct LinearLayer {
    Tensor w, b;
    static LinearLayer init(int64_t in, int64_t out, Rng& rng, bool bias = true);
    static LinearLayer zeros(int64_t in, int64_t out, bool bias = true);
    Tensor forward(const Tensor& x) const { return linear(x, w, b); }
    NamedParams named_params(const std::string& prefix) const;
};

struct Conv2dLayer {
    Tensor w, b;  // (kh,kw,Cin,Cout), (Cout)
    int stride = 1;
    PadMode mode = PadMode::kZero;
    static Conv2dLayer init(int64_t k, int64_t cin, int64_t cout, Rng& rng, int stride = 1,
                            PadMode mode = PadMode::kZero);
    static Conv2dLayer zeros(int64_t k, int64_t cin, int64_t cout, int stride = 1,
                             PadMode mode = PadMode::kZero);
    Tensor forward(const Tensor& x) const { return conv2d(x, w, b, stride, mode); }
    NamedParams named_params(const std::string& prefix) const;
};

struct DepthwiseConv {
    Tensor w, b;  // (kh,kw,C), (C)
    static DepthwiseConv init(int64_t k, int64_t channels, Rng& rng);
    Tensor forward(const Tensor& x) const {
        return conv2d_depthwise(x, w, b, 1, PadMode::kZero);
    }
    NamedParams named_params(const std::string& prefix) const;
};

struct LayerNormLayer {
    Tensor gamma, beta;
    real eps = real(1e-5);
    static LayerNormLayer init(int64_t channels);
    Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
    NamedParams named_params(const std::string& prefix) const;
};

struct VssbConfig {
    int64_t channels = 16;
    int64_t state_size = 4;
    int64_t agent_count = 16;
    int64_t conv_kernel = 3;
    bool use_mamba = true;
    bool use_attention = true;
    bool learnable_padding = true;
    ScanKind scan_kind = ScanKind::kSequential;
};

// Vision State Space Module:
//   X1 = LN(Crop(2D-SSM(Pad(SiLU(DWConv(Linear(Xin)))))))
//   X2 = SiLU(Linear(Xin))
//   X3 = Linear(X1 ⊙ X2) + s·Xin
struct Vssm {
    LinearLayer in_proj, gate_proj, out_proj;
    DepthwiseConv dwconv;
    Scan2d scan;
    LayerNormLayer ln_out;
    Tensor skip_scale;  // s, per channel
    ScanKind scan_kind = ScanKind::kSequential;

    static Vssm init(const VssbConfig& cfg, Rng& rng);
    Tensor forward(const Tensor& x) const;  // (1,H,W,C) -> (1,H,W,C)
    NamedParams named_params(const std::string& prefix) const;
};

// Width-matched stand-in used by the "w/o Mamba" ablation: expansion-2
// depthwise conv block behind the same residual contract as the VSSM.
struct DwConvResidual {
    LinearLayer in_proj, out_proj;
    DepthwiseConv dw1, dw2;
    Tensor skip_scale;

    static DwConvResidual init(int64_t channels, Rng& rng);
    Tensor forward(const Tensor& x) const;
    NamedParams named_params(const std::string& prefix) const;
};

// Two-stage linear-complexity attention through pooled agent tokens.
struct AgentAttention {
    LinearLayer q_proj, k_proj, v_proj, out_proj;
    int64_t agent_count = 16;

    static AgentAttention init(int64_t channels, int64_t agent_count, Rng& rng);
    Tensor forward(const Tensor& x) const;  // (L,C) -> (L,C)
    NamedParams named_params(const std::string& prefix) const;
};

// Full Visual State Space Block:
//   X3 = VSSM(LN(x)); X4 = MLP(Agent(Conv(LN(X3)))); out = X4 + s·X3
struct Vssb {
    VssbConfig cfg;
    LayerNormLayer ln_in, ln_mid;
    Vssm vssm;
    DwConvResidual conv_substitute;  // active when cfg.use_mamba is false
    Conv2dLayer local_conv;
    AgentAttention attn;
    LinearLayer mlp_w1, mlp_w2;
    Tensor skip_scale;  // second skip site, separate from the VSSM's s

    static Vssb init(const VssbConfig& cfg, Rng& rng);
    Tensor forward(const Tensor& x) const;
    NamedParams named_params(const std::string& prefix) const;
};

// SPADE-style residual block: parameter-free normalization modulated by
// conv-generated (1+gamma, beta) maps from a resampled conditioning input.
struct SpadeResblock {
    Conv2dLayer mod_gamma, mod_beta;  // zero-initialized
    Conv2dLayer conv1, conv2;
    int64_t cond_channels = 0;

    static SpadeResblock init(int64_t channels, int64_t cond_channels, Rng& rng);
    Tensor forward(const Tensor& x, const Tensor& cond) const;
    NamedParams named_params(const std::string& prefix) const;
};

// Criss-cross attention applied twice; queries from the generator features,
// keys/values from the texture-enriched color map.
struct CrissCrossFusion {
    LinearLayer q_proj, k_proj, v_proj, out_proj;
    int64_t kv_channels = 0;

    static CrissCrossFusion init(int64_t q_channels, int64_t kv_channels, Rng& rng);
    // Single criss-cross pass (each position attends over its row + column).
    Tensor attend(const Tensor& q_feat, const Tensor& kv_feat) const;
    Tensor forward(const Tensor& gen_feat, const Tensor& kv_feat) const;
    NamedParams named_params(const std::string& prefix) const;
};

// (1,H,W,C) <-> (H*W, C)
Tensor flatten_hw(const Tensor& x);
Tensor unflatten_hw(const Tensor& x, int64_t h, int64_t w);

}  // namespace colormamba
