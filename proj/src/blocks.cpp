#include "colormamba/blocks.hpp"

#include <cmath>

namespace colormamba {

void append_params(NamedParams& dst, const NamedParams& src) {
    dst.insert(dst.end(), src.begin(), src.end());
}

Tensor flatten_hw(const Tensor& x) {
    if (x.ndim() != 4 || x.dim(0) != 1) throw ShapeError("flatten_hw: expects (1,H,W,C)");
    return reshape(x, {x.dim(1) * x.dim(2), x.dim(3)});
}

Tensor unflatten_hw(const Tensor& x, int64_t h, int64_t w) {
    return reshape(x, {1, h, w, x.dim(1)});
}

// ---------------------------------------------------------------------------
// Primitive layers
// ---------------------------------------------------------------------------

LinearLayer LinearLayer::init(int64_t in, int64_t out, Rng& rng, bool bias) {
    LinearLayer l;
    real k = real(1) / std::sqrt(real(in));
    l.w = Tensor::uniform({in, out}, rng, -k, k).set_requires_grad(true);
    if (bias) l.b = Tensor::zeros({out}).set_requires_grad(true);
    return l;
}

LinearLayer LinearLayer::zeros(int64_t in, int64_t out, bool bias) {
    LinearLayer l;
    l.w = Tensor::zeros({in, out}).set_requires_grad(true);
    if (bias) l.b = Tensor::zeros({out}).set_requires_grad(true);
    return l;
}

NamedParams LinearLayer::named_params(const std::string& prefix) const {
    NamedParams p{{prefix + ".w", w}};
    if (b.defined()) p.emplace_back(prefix + ".b", b);
    return p;
}

Conv2dLayer Conv2dLayer::init(int64_t k, int64_t cin, int64_t cout, Rng& rng, int stride,
                              PadMode mode) {
    Conv2dLayer c;
    real bound = real(1) / std::sqrt(real(k * k * cin));
    c.w = Tensor::uniform({k, k, cin, cout}, rng, -bound, bound).set_requires_grad(true);
    c.b = Tensor::zeros({cout}).set_requires_grad(true);
    c.stride = stride;
    c.mode = mode;
    return c;
}

Conv2dLayer Conv2dLayer::zeros(int64_t k, int64_t cin, int64_t cout, int stride, PadMode mode) {
    Conv2dLayer c;
    c.w = Tensor::zeros({k, k, cin, cout}).set_requires_grad(true);
    c.b = Tensor::zeros({cout}).set_requires_grad(true);
    c.stride = stride;
    c.mode = mode;
    return c;
}

NamedParams Conv2dLayer::named_params(const std::string& prefix) const {
    return {{prefix + ".w", w}, {prefix + ".b", b}};
}

DepthwiseConv DepthwiseConv::init(int64_t k, int64_t channels, Rng& rng) {
    DepthwiseConv c;
    real bound = real(1) / std::sqrt(real(k * k));
    c.w = Tensor::uniform({k, k, channels}, rng, -bound, bound).set_requires_grad(true);
    c.b = Tensor::zeros({channels}).set_requires_grad(true);
    return c;
}

NamedParams DepthwiseConv::named_params(const std::string& prefix) const {
    return {{prefix + ".w", w}, {prefix + ".b", b}};
}

LayerNormLayer LayerNormLayer::init(int64_t channels) {
    LayerNormLayer l;
    l.gamma = Tensor::full({channels}, real(1)).set_requires_grad(true);
    l.beta = Tensor::zeros({channels}).set_requires_grad(true);
    return l;
}

NamedParams LayerNormLayer::named_params(const std::string& prefix) const {
    return {{prefix + ".gamma", gamma}, {prefix + ".beta", beta}};
}

// ---------------------------------------------------------------------------
// VSSM
// ---------------------------------------------------------------------------

Vssm Vssm::init(const VssbConfig& cfg, Rng& rng) {
    Vssm v;
    v.in_proj = LinearLayer::init(cfg.channels, cfg.channels, rng);
    v.gate_proj = LinearLayer::init(cfg.channels, cfg.channels, rng);
    v.out_proj = LinearLayer::init(cfg.channels, cfg.channels, rng);
    v.dwconv = DepthwiseConv::init(cfg.conv_kernel, cfg.channels, rng);
    v.scan = Scan2d::init(cfg.channels, cfg.state_size, rng, cfg.learnable_padding);
    v.ln_out = LayerNormLayer::init(cfg.channels);
    v.skip_scale = Tensor::full({cfg.channels}, real(1)).set_requires_grad(true);
    v.scan_kind = cfg.scan_kind;
    return v;
}

Tensor Vssm::forward(const Tensor& x) const {
    if (x.ndim() != 4 || x.dim(3) != in_proj.w.dim(0))
        throw ConfigError("Vssm: channel width mismatch");
    int64_t h = x.dim(1), w = x.dim(2);
    Tensor xf = flatten_hw(x);
    Tensor t = unflatten_hw(in_proj.forward(xf), h, w);
    t = silu(dwconv.forward(t));
    t = scan.forward(t, scan_kind);  // pad -> 4-direction scan -> merge -> crop
    Tensor x1 = ln_out.forward(t);
    Tensor x2 = silu(gate_proj.forward(xf));
    Tensor x3 = add(out_proj.forward(mul(flatten_hw(x1), x2)), mul(xf, skip_scale));
    return unflatten_hw(x3, h, w);
}

NamedParams Vssm::named_params(const std::string& prefix) const {
    NamedParams p;
    append_params(p, in_proj.named_params(prefix + ".in_proj"));
    append_params(p, gate_proj.named_params(prefix + ".gate_proj"));
    append_params(p, out_proj.named_params(prefix + ".out_proj"));
    append_params(p, dwconv.named_params(prefix + ".dwconv"));
    append_params(p, scan.named_params(prefix + ".scan"));
    append_params(p, ln_out.named_params(prefix + ".ln_out"));
    p.emplace_back(prefix + ".skip_scale", skip_scale);
    return p;
}

DwConvResidual DwConvResidual::init(int64_t channels, Rng& rng) {
    DwConvResidual d;
    d.in_proj = LinearLayer::init(channels, channels * 2, rng);
    d.dw1 = DepthwiseConv::init(3, channels * 2, rng);
    d.dw2 = DepthwiseConv::init(3, channels * 2, rng);
    d.out_proj = LinearLayer::init(channels * 2, channels, rng);
    d.skip_scale = Tensor::full({channels}, real(1)).set_requires_grad(true);
    return d;
}

Tensor DwConvResidual::forward(const Tensor& x) const {
    int64_t h = x.dim(1), w = x.dim(2);
    Tensor xf = flatten_hw(x);
    Tensor t = unflatten_hw(in_proj.forward(xf), h, w);
    t = silu(dw1.forward(t));
    t = silu(dw2.forward(t));
    Tensor out = add(out_proj.forward(flatten_hw(t)), mul(xf, skip_scale));
    return unflatten_hw(out, h, w);
}

NamedParams DwConvResidual::named_params(const std::string& prefix) const {
    NamedParams p;
    append_params(p, in_proj.named_params(prefix + ".in_proj"));
    append_params(p, dw1.named_params(prefix + ".dw1"));
    append_params(p, dw2.named_params(prefix + ".dw2"));
    append_params(p, out_proj.named_params(prefix + ".out_proj"));
    p.emplace_back(prefix + ".skip_scale", skip_scale);
    return p;
}

// ---------------------------------------------------------------------------
// Agent attention
// ---------------------------------------------------------------------------

AgentAttention AgentAttention::init(int64_t channels, int64_t agent_count, Rng& rng) {
    if (agent_count < 1) throw ConfigError("AgentAttention: agent_count must be >= 1");
    AgentAttention a;
    a.q_proj = LinearLayer::init(channels, channels, rng);
    a.k_proj = LinearLayer::init(channels, channels, rng);
    a.v_proj = LinearLayer::init(channels, channels, rng);
    a.out_proj = LinearLayer::init(channels, channels, rng);
    a.agent_count = agent_count;
    return a;
}

Tensor AgentAttention::forward(const Tensor& x) const {
    if (x.ndim() != 2) throw ShapeError("AgentAttention: expects (L,C)");
    int64_t tokens = x.dim(0), c = x.dim(1);
    if (agent_count > tokens)
        throw ConfigError("AgentAttention: agent_count exceeds token count");
    real scale = real(1) / std::sqrt(real(c));
    Tensor q = q_proj.forward(x);
    Tensor k = k_proj.forward(x);
    Tensor v = v_proj.forward(x);
    Tensor agents = segment_mean_rows(q, agent_count);  // pooled queries
    Tensor agg = softmax(mul_scalar(matmul(agents, transpose(k)), scale), 1);  // (a,L)
    Tensor v_agents = matmul(agg, v);                                          // (a,C)
    Tensor bcast = softmax(mul_scalar(matmul(q, transpose(agents)), scale), 1);  // (L,a)
    return out_proj.forward(matmul(bcast, v_agents));
}

NamedParams AgentAttention::named_params(const std::string& prefix) const {
    NamedParams p;
    append_params(p, q_proj.named_params(prefix + ".q"));
    append_params(p, k_proj.named_params(prefix + ".k"));
    append_params(p, v_proj.named_params(prefix + ".v"));
    append_params(p, out_proj.named_params(prefix + ".out"));
    return p;
}

// ---------------------------------------------------------------------------
// VSSB
// ---------------------------------------------------------------------------

Vssb Vssb::init(const VssbConfig& cfg, Rng& rng) {
    Vssb b;
    b.cfg = cfg;
    b.ln_in = LayerNormLayer::init(cfg.channels);
    b.ln_mid = LayerNormLayer::init(cfg.channels);
    if (cfg.use_mamba) {
        b.vssm = Vssm::init(cfg, rng);
    } else {
        b.conv_substitute = DwConvResidual::init(cfg.channels, rng);
    }
    b.local_conv = Conv2dLayer::init(cfg.conv_kernel, cfg.channels, cfg.channels, rng);
    if (cfg.use_attention) b.attn = AgentAttention::init(cfg.channels, cfg.agent_count, rng);
    b.mlp_w1 = LinearLayer::init(cfg.channels, cfg.channels * 2, rng);
    b.mlp_w2 = LinearLayer::init(cfg.channels * 2, cfg.channels, rng);
    b.skip_scale = Tensor::full({cfg.channels}, real(1)).set_requires_grad(true);
    return b;
}

Tensor Vssb::forward(const Tensor& x) const {
    if (x.ndim() != 4 || x.dim(3) != cfg.channels) throw ConfigError("Vssb: channel mismatch");
    int64_t h = x.dim(1), w = x.dim(2);
    Tensor u = ln_in.forward(x);
    Tensor x3 = cfg.use_mamba ? vssm.forward(u) : conv_substitute.forward(u);
    Tensor t = local_conv.forward(ln_mid.forward(x3));
    Tensor tl = flatten_hw(t);
    if (cfg.use_attention) tl = attn.forward(tl);
    Tensor x4 = mlp(tl, mlp_w1.w, mlp_w1.b, mlp_w2.w, mlp_w2.b);
    Tensor out = add(x4, mul(flatten_hw(x3), skip_scale));
    return unflatten_hw(out, h, w);
}

NamedParams Vssb::named_params(const std::string& prefix) const {
    NamedParams p;
    append_params(p, ln_in.named_params(prefix + ".ln_in"));
    append_params(p, ln_mid.named_params(prefix + ".ln_mid"));
    if (cfg.use_mamba) {
        append_params(p, vssm.named_params(prefix + ".vssm"));
    } else {
        append_params(p, conv_substitute.named_params(prefix + ".conv_sub"));
    }
    append_params(p, local_conv.named_params(prefix + ".local_conv"));
    if (cfg.use_attention) append_params(p, attn.named_params(prefix + ".attn"));
    append_params(p, mlp_w1.named_params(prefix + ".mlp_w1"));
    append_params(p, mlp_w2.named_params(prefix + ".mlp_w2"));
    p.emplace_back(prefix + ".skip_scale", skip_scale);
    return p;
}

// ---------------------------------------------------------------------------
// SPADE residual block
// ---------------------------------------------------------------------------

SpadeResblock SpadeResblock::init(int64_t channels, int64_t cond_channels, Rng& rng) {
    SpadeResblock s;
    s.mod_gamma = Conv2dLayer::zeros(3, cond_channels, channels);
    s.mod_beta = Conv2dLayer::zeros(3, cond_channels, channels);
    s.conv1 = Conv2dLayer::init(3, channels, channels, rng);
    s.conv2 = Conv2dLayer::init(3, channels, channels, rng);
    s.cond_channels = cond_channels;
    return s;
}

Tensor SpadeResblock::forward(const Tensor& x, const Tensor& cond) const {
    if (cond.ndim() != 4 || cond.dim(3) != cond_channels)
        throw ConfigError("SpadeResblock: conditioning width mismatch");
    Tensor cr = resize_nearest(cond, x.dim(1), x.dim(2));
    Tensor gamma = mod_gamma.forward(cr);
    Tensor beta = mod_beta.forward(cr);
    Tensor t = instance_norm(x);
    t = add(mul(t, add_scalar(gamma, real(1))), beta);
    t = conv1.forward(t);
    t = conv2.forward(t);
    return add(x, t);
}

NamedParams SpadeResblock::named_params(const std::string& prefix) const {
    NamedParams p;
    append_params(p, mod_gamma.named_params(prefix + ".mod_gamma"));
    append_params(p, mod_beta.named_params(prefix + ".mod_beta"));
    append_params(p, conv1.named_params(prefix + ".conv1"));
    append_params(p, conv2.named_params(prefix + ".conv2"));
    return p;
}

// ---------------------------------------------------------------------------
// Criss-cross fusion
// ---------------------------------------------------------------------------

CrissCrossFusion CrissCrossFusion::init(int64_t q_channels, int64_t kv_channels, Rng& rng) {
    CrissCrossFusion f;
    f.q_proj = LinearLayer::init(q_channels, q_channels, rng);
    f.k_proj = LinearLayer::init(kv_channels, q_channels, rng);
    f.v_proj = LinearLayer::init(kv_channels, q_channels, rng);
    f.out_proj = LinearLayer::init(q_channels, q_channels, rng);
    f.kv_channels = kv_channels;
    return f;
}

Tensor CrissCrossFusion::attend(const Tensor& q_feat, const Tensor& kv_feat) const {
    if (q_feat.dim(1) != kv_feat.dim(1) || q_feat.dim(2) != kv_feat.dim(2))
        throw ConfigError("CrissCrossFusion: spatial size mismatch");
    if (kv_feat.dim(3) != kv_channels)
        throw ConfigError("CrissCrossFusion: key/value channel mismatch");
    int64_t h = q_feat.dim(1), w = q_feat.dim(2);
    int64_t tokens = h * w;
    int64_t foot = h + w - 1;  // full row + column, center counted once
    std::vector<int64_t> idx(static_cast<size_t>(tokens * foot));
    for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
            int64_t base = (i * w + j) * foot;
            int64_t f = 0;
            for (int64_t t = 0; t < w; ++t) idx[base + f++] = i * w + t;
            for (int64_t s = 0; s < h; ++s)
                if (s != i) idx[base + f++] = s * w + j;
        }

    int64_t d = q_proj.w.dim(1);
    real scale = real(1) / std::sqrt(real(d));
    Tensor q = q_proj.forward(flatten_hw(q_feat));
    Tensor k = k_proj.forward(flatten_hw(kv_feat));
    Tensor v = v_proj.forward(flatten_hw(kv_feat));
    Tensor kg = reshape(gather_rows(k, idx), {tokens, foot, d});
    Tensor scores = mul_scalar(sum_axis(mul(reshape(q, {tokens, 1, d}), kg), 2, false), scale);
    Tensor attn = softmax(scores, 1);  // (tokens, foot)
    Tensor vg = reshape(gather_rows(v, idx), {tokens, foot, d});
    Tensor out = sum_axis(mul(reshape(attn, {tokens, foot, 1}), vg), 1, false);
    return unflatten_hw(out_proj.forward(out), h, w);
}

Tensor CrissCrossFusion::forward(const Tensor& gen_feat, const Tensor& kv_feat) const {
    // two passes so information propagates beyond a single row/column hop
    Tensor r1 = attend(gen_feat, kv_feat);
    Tensor r2 = attend(add(gen_feat, r1), kv_feat);
    return add(gen_feat, r2);
}

NamedParams CrissCrossFusion::named_params(const std::string& prefix) const {
    NamedParams p;
    append_params(p, q_proj.named_params(prefix + ".q"));
    append_params(p, k_proj.named_params(prefix + ".k"));
    append_params(p, v_proj.named_params(prefix + ".v"));
    append_params(p, out_proj.named_params(prefix + ".out"));
    return p;
}

}  // namespace colormamba
