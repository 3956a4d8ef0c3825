#include "colormamba/networks.hpp"

namespace colormamba {

void ModelConfig::validate() const {
    if (depth < 1) throw ConfigError("ModelConfig: depth must be >= 1");
    if (static_cast<int64_t>(widths.size()) != depth)
        throw ConfigError("ModelConfig: widths must list one channel count per level");
    for (int64_t w : widths)
        if (w < 1) throw ConfigError("ModelConfig: channel widths must be positive");
    if (conv_kernel % 2 == 0) throw ConfigError("ModelConfig: conv kernel must be odd");
    if (agent_count < 1) throw ConfigError("ModelConfig: agent_count must be >= 1");
}

VssbConfig ModelConfig::vssb_config(int64_t channels) const {
    VssbConfig v;
    v.channels = channels;
    v.state_size = state_size;
    v.agent_count = agent_count;
    v.conv_kernel = conv_kernel;
    v.use_mamba = use_mamba;
    v.use_attention = use_attention;
    v.learnable_padding = learnable_padding;
    v.scan_kind = scan_kind;
    return v;
}

void check_divisibility(const ModelConfig& cfg, int64_t h, int64_t w) {
    int64_t m = int64_t(1) << cfg.depth;
    if (h % m != 0 || w % m != 0) {
        throw ShapeError("input " + std::to_string(h) + "x" + std::to_string(w) +
                         " not divisible by 2^depth = " + std::to_string(m));
    }
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

UnetEncoder UnetEncoder::init(const ModelConfig& cfg, Rng& rng) {
    UnetEncoder e;
    for (int64_t l = 0; l < cfg.depth; ++l) {
        if (l > 0) {
            e.down.push_back(
                Conv2dLayer::init(cfg.conv_kernel, cfg.widths[l - 1], cfg.widths[l], rng, 2));
        }
        e.blocks.push_back(Vssb::init(cfg.vssb_config(cfg.widths[l]), rng));
    }
    return e;
}

std::vector<Tensor> UnetEncoder::forward(const Tensor& stem_out) const {
    std::vector<Tensor> feats;
    Tensor x = stem_out;
    for (size_t l = 0; l < blocks.size(); ++l) {
        if (l > 0) x = silu(down[l - 1].forward(x));
        x = blocks[l].forward(x);
        feats.push_back(x);
    }
    return feats;
}

NamedParams UnetEncoder::named_params(const std::string& prefix) const {
    NamedParams p;
    for (size_t l = 0; l < blocks.size(); ++l) {
        if (l > 0) append_params(p, down[l - 1].named_params(prefix + ".down" + std::to_string(l)));
        append_params(p, blocks[l].named_params(prefix + ".block" + std::to_string(l)));
    }
    return p;
}

// ---------------------------------------------------------------------------
// GeneratorB
// ---------------------------------------------------------------------------

GeneratorB GeneratorB::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    GeneratorB g;
    g.cfg = cfg;
    g.sfe = Sfe::init(cfg.widths[0], cfg.tex_channels, rng);
    g.encoder = UnetEncoder::init(cfg, rng);
    for (int64_t l = cfg.depth - 2; l >= 0; --l) {
        g.up_conv.push_back(
            Conv2dLayer::init(cfg.conv_kernel, cfg.widths[l + 1], cfg.widths[l], rng));
        g.skip_fuse.push_back(Conv2dLayer::init(1, cfg.widths[l] * 2, cfg.widths[l], rng));
    }
    g.hsv_head = Conv2dLayer::init(cfg.conv_kernel, cfg.widths[0], 3, rng);
    return g;
}

GeneratorB::Output GeneratorB::forward(const Tensor& nir) const {
    if (nir.ndim() != 4 || nir.dim(0) != 1 || nir.dim(3) != cfg.in_channels)
        throw ShapeError("GeneratorB: expects (1,H,W,1) NIR input");
    check_divisibility(cfg, nir.dim(1), nir.dim(2));

    Sfe::Output sfe_out = sfe.forward(nir);
    std::vector<Tensor> enc = encoder.forward(sfe_out.x_nir_hsv);

    Output out;
    out.x_tex = sfe_out.x_tex;
    Tensor x = enc.back();
    out.multiscale.push_back(x);
    for (int64_t l = cfg.depth - 2; l >= 0; --l) {
        size_t stage = static_cast<size_t>(cfg.depth - 2 - l);
        x = silu(up_conv[stage].forward(upsample_nearest2(x)));
        x = silu(skip_fuse[stage].forward(concat_last({x, enc[static_cast<size_t>(l)]})));
        out.multiscale.push_back(x);
    }
    out.y_hsv = sigmoid(hsv_head.forward(x));
    return out;
}

NamedParams GeneratorB::named_params(const std::string& prefix) const {
    NamedParams p;
    append_params(p, sfe.named_params(prefix + ".sfe"));
    append_params(p, encoder.named_params(prefix + ".enc"));
    for (size_t s = 0; s < up_conv.size(); ++s) {
        append_params(p, up_conv[s].named_params(prefix + ".up" + std::to_string(s)));
        append_params(p, skip_fuse[s].named_params(prefix + ".skip" + std::to_string(s)));
    }
    append_params(p, hsv_head.named_params(prefix + ".hsv_head"));
    return p;
}

// ---------------------------------------------------------------------------
// GeneratorA
// ---------------------------------------------------------------------------

GeneratorA GeneratorA::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    GeneratorA g;
    g.cfg = cfg;
    g.stem = Conv2dLayer::init(cfg.conv_kernel, cfg.in_channels, cfg.widths[0], rng);
    g.encoder = UnetEncoder::init(cfg, rng);
    g.bottleneck_spade =
        SpadeResblock::init(cfg.widths[cfg.depth - 1], cfg.widths[cfg.depth - 1], rng);
    for (int64_t l = cfg.depth - 2; l >= 0; --l) {
        g.up_conv.push_back(
            Conv2dLayer::init(cfg.conv_kernel, cfg.widths[l + 1], cfg.widths[l], rng));
        g.skip_fuse.push_back(Conv2dLayer::init(1, cfg.widths[l] * 2, cfg.widths[l], rng));
        g.spade.push_back(SpadeResblock::init(cfg.widths[l], cfg.widths[l], rng));
    }
    g.color_proj = Conv2dLayer::init(1, cfg.widths[0], cfg.widths[0], rng);
    g.fusion_spade = SpadeResblock::init(cfg.widths[0], cfg.tex_channels, rng);
    g.fuse = CrissCrossFusion::init(cfg.widths[0], cfg.widths[0], rng);
    g.out_conv = Conv2dLayer::init(cfg.conv_kernel, cfg.widths[0], 3, rng);
    return g;
}

Tensor GeneratorA::forward(const Tensor& nir, const std::vector<Tensor>& multiscale,
                           const Tensor& x_tex) const {
    if (nir.ndim() != 4 || nir.dim(0) != 1 || nir.dim(3) != cfg.in_channels)
        throw ShapeError("GeneratorA: expects (1,H,W,1) NIR input");
    check_divisibility(cfg, nir.dim(1), nir.dim(2));
    if (static_cast<int64_t>(multiscale.size()) != cfg.depth)
        throw ConfigError("GeneratorA: expected one conditioning feature per scale");

    std::vector<Tensor> enc = encoder.forward(silu(stem.forward(nir)));

    Tensor x = enc.back();
    if (x.dim(1) != multiscale[0].dim(1) || x.dim(2) != multiscale[0].dim(2))
        throw ConfigError("GeneratorA: conditioning feature scale mismatch");
    x = bottleneck_spade.forward(x, multiscale[0]);
    for (int64_t l = cfg.depth - 2; l >= 0; --l) {
        size_t stage = static_cast<size_t>(cfg.depth - 2 - l);
        x = silu(up_conv[stage].forward(upsample_nearest2(x)));
        x = silu(skip_fuse[stage].forward(concat_last({x, enc[static_cast<size_t>(l)]})));
        x = spade[stage].forward(x, multiscale[stage + 1]);
    }

    // fusion head: texture-enriched color map, then criss-cross attention
    Tensor color_map = color_proj.forward(multiscale.back());
    Tensor enriched = fusion_spade.forward(color_map, x_tex);
    Tensor fused = fuse.forward(x, enriched);
    return sigmoid(out_conv.forward(fused));
}

NamedParams GeneratorA::named_params(const std::string& prefix) const {
    NamedParams p;
    append_params(p, stem.named_params(prefix + ".stem"));
    append_params(p, encoder.named_params(prefix + ".enc"));
    append_params(p, bottleneck_spade.named_params(prefix + ".spade_bottleneck"));
    for (size_t s = 0; s < up_conv.size(); ++s) {
        append_params(p, up_conv[s].named_params(prefix + ".up" + std::to_string(s)));
        append_params(p, skip_fuse[s].named_params(prefix + ".skip" + std::to_string(s)));
        append_params(p, spade[s].named_params(prefix + ".spade" + std::to_string(s)));
    }
    append_params(p, color_proj.named_params(prefix + ".color_proj"));
    append_params(p, fusion_spade.named_params(prefix + ".fusion_spade"));
    append_params(p, fuse.named_params(prefix + ".fuse"));
    append_params(p, out_conv.named_params(prefix + ".out_conv"));
    return p;
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

Discriminator Discriminator::init(const ModelConfig& cfg, Rng& rng) {
    Discriminator d;
    int64_t f = cfg.disc_width;
    d.c1 = Conv2dLayer::init(3, 3, f, rng, 2);
    d.c2 = Conv2dLayer::init(3, f, 2 * f, rng, 2);
    d.c3 = Conv2dLayer::init(3, 2 * f, 4 * f, rng, 2);
    d.head = Conv2dLayer::init(3, 4 * f, 1, rng, 1);
    return d;
}

Tensor Discriminator::forward(const Tensor& rgb) const {
    if (rgb.ndim() != 4 || rgb.dim(0) != 1 || rgb.dim(3) != 3)
        throw ShapeError("Discriminator: expects (1,H,W,3)");
    Tensor t = silu(c1.forward(rgb));  // no normalization on the first stage
    t = silu(instance_norm(c2.forward(t)));
    t = silu(instance_norm(c3.forward(t)));
    return head.forward(t);  // logits; sigmoid lives in the loss
}

NamedParams Discriminator::named_params(const std::string& prefix) const {
    NamedParams p;
    append_params(p, c1.named_params(prefix + ".c1"));
    append_params(p, c2.named_params(prefix + ".c2"));
    append_params(p, c3.named_params(prefix + ".c3"));
    append_params(p, head.named_params(prefix + ".head"));
    return p;
}

GeneratorOutputs generator_forward(const GeneratorA& ga, const GeneratorB& gb,
                                   const Tensor& nir) {
    GeneratorOutputs out;
    GeneratorB::Output gbo = gb.forward(nir);
    out.y_hsv = gbo.y_hsv;
    out.multiscale = gbo.multiscale;
    out.x_tex = gbo.x_tex;
    out.y_rgb = ga.forward(nir, gbo.multiscale, gbo.x_tex);
    return out;
}

}  // namespace colormamba
