#include "colormamba/color.hpp"

#include <atomic>
#include <cmath>

namespace colormamba {

namespace {

std::atomic<int64_t> g_clamp_count{0};

real clamp01(real v) {
    if (v < 0) {
        g_clamp_count.fetch_add(1, std::memory_order_relaxed);
        return 0;
    }
    if (v > 1) {
        g_clamp_count.fetch_add(1, std::memory_order_relaxed);
        return 1;
    }
    return v;
}

void check_hw3(const char* op, const Tensor& img) {
    if (img.ndim() != 3 || img.dim(2) != 3)
        throw ShapeError(std::string(op) + ": expects (H,W,3)");
}

}  // namespace

int64_t color_clamp_count() { return g_clamp_count.load(); }
void reset_color_clamp_count() { g_clamp_count.store(0); }

Tensor rgb_to_hsv(const Tensor& img) {
    check_hw3("rgb_to_hsv", img);
    const auto& v = img.values();
    std::vector<real> out(v.size());
    for (size_t p = 0; p < v.size(); p += 3) {
        real r = clamp01(v[p]), g = clamp01(v[p + 1]), b = clamp01(v[p + 2]);
        real mx = std::max({r, g, b});
        real mn = std::min({r, g, b});
        real c = mx - mn;
        real h = 0;
        if (c > 0) {
            real hp;
            if (mx == r) {
                hp = std::fmod((g - b) / c, real(6));
                if (hp < 0) hp += 6;
            } else if (mx == g) {
                hp = (b - r) / c + 2;
            } else {
                hp = (r - g) / c + 4;
            }
            h = hp / 6;
        }
        out[p] = h;
        out[p + 1] = mx > 0 ? c / mx : real(0);
        out[p + 2] = mx;
    }
    return Tensor::from_data(img.shape(), std::move(out));
}

Tensor hsv_to_rgb(const Tensor& img) {
    check_hw3("hsv_to_rgb", img);
    const auto& vdata = img.values();
    std::vector<real> out(vdata.size());
    for (size_t p = 0; p < vdata.size(); p += 3) {
        real h = vdata[p];
        if (h < 0 || h >= 1) {
            g_clamp_count.fetch_add(1, std::memory_order_relaxed);
            h = h - std::floor(h);  // hue is periodic
        }
        real s = clamp01(vdata[p + 1]);
        real v = clamp01(vdata[p + 2]);
        real h6 = h * 6;
        int i = static_cast<int>(h6) % 6;
        real f = h6 - std::floor(h6);
        real pp = v * (1 - s);
        real q = v * (1 - f * s);
        real t = v * (1 - (1 - f) * s);
        real r, g, b;
        switch (i) {
            case 0: r = v; g = t; b = pp; break;
            case 1: r = q; g = v; b = pp; break;
            case 2: r = pp; g = v; b = t; break;
            case 3: r = pp; g = q; b = v; break;
            case 4: r = t; g = pp; b = v; break;
            default: r = v; g = pp; b = q; break;
        }
        out[p] = r;
        out[p + 1] = g;
        out[p + 2] = b;
    }
    return Tensor::from_data(img.shape(), std::move(out));
}

Tensor to_hsv_from_nir(const Tensor& nir) {
    bool rank4 = nir.ndim() == 4;
    if (!(rank4 && nir.dim(0) == 1 && nir.dim(3) == 1) &&
        !(nir.ndim() == 3 && nir.dim(2) == 1)) {
        throw ShapeError("to_hsv_from_nir: expects (H,W,1) or (1,H,W,1)");
    }
    int64_t h = rank4 ? nir.dim(1) : nir.dim(0);
    int64_t w = rank4 ? nir.dim(2) : nir.dim(1);
    const auto& v = nir.values();
    std::vector<real> rgb(v.size() * 3);
    for (size_t p = 0; p < v.size(); ++p) rgb[3 * p] = rgb[3 * p + 1] = rgb[3 * p + 2] = v[p];
    Tensor hsv = rgb_to_hsv(Tensor::from_data({h, w, 3}, std::move(rgb)));
    return rank4 ? Tensor::from_data({1, h, w, 3}, hsv.values()) : hsv;
}

Tensor laplacian_edge(const Tensor& x) {
    bool rank3 = x.ndim() == 3;
    Tensor in = rank3 ? reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)}) : x;
    if (in.ndim() != 4 || in.dim(3) != 1)
        throw ShapeError("laplacian_edge: expects a single-channel map");
    static const std::vector<real> taps = {0, 1, 0, 1, -4, 1, 0, 1, 0};
    Tensor kernel = Tensor::from_data({3, 3, 1, 1}, taps);
    Tensor out = conv2d(in, kernel, Tensor(), 1, PadMode::kReplicate);
    return rank3 ? reshape(out, {x.dim(0), x.dim(1), 1}) : out;
}

Sfe Sfe::init(int64_t embed_width, int64_t tex_channels, Rng& rng) {
    Sfe s;
    s.tex_conv = Conv2dLayer::init(3, 1, tex_channels, rng);
    s.embed_conv = Conv2dLayer::init(3, 5, embed_width, rng);
    return s;
}

Sfe::Output Sfe::forward(const Tensor& nir) const {
    if (nir.ndim() != 4 || nir.dim(0) != 1 || nir.dim(3) != 1)
        throw ShapeError("Sfe: expects (1,H,W,1)");
    Output out;
    out.x_hsv = to_hsv_from_nir(nir);
    out.x_edge = laplacian_edge(nir);
    out.x_tex = tex_conv.forward(out.x_edge);
    Tensor cat = concat_last({nir, out.x_edge, out.x_hsv});  // 1+1+3 channels
    out.x_nir_hsv = embed_conv.forward(cat);
    return out;
}

NamedParams Sfe::named_params(const std::string& prefix) const {
    NamedParams p;
    append_params(p, tex_conv.named_params(prefix + ".tex_conv"));
    append_params(p, embed_conv.named_params(prefix + ".embed_conv"));
    return p;
}

}  // namespace colormamba
