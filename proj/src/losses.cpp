#include "colormamba/losses.hpp"

#include <cmath>

namespace colormamba {

Tensor mse_loss(const Tensor& x, const Tensor& y) {
    if (x.shape() != y.shape()) throw ShapeError("mse_loss: shape mismatch");
    return mean_all(square(sub(x, y)));
}

Tensor cosine_similarity(const Tensor& x, const Tensor& y) {
    if (x.numel() != y.numel()) throw ShapeError("cosine_similarity: length mismatch");
    Tensor xf = reshape(x, {x.numel()});
    Tensor yf = reshape(y, {y.numel()});
    Tensor dot = sum_all(mul(xf, yf));
    Tensor nx = sqrt(sum_all(square(xf)));
    Tensor ny = sqrt(sum_all(square(yf)));
    return div(dot, add_scalar(mul(nx, ny), real(1e-12)));
}

namespace {

// Standard MS-SSIM exponents, renormalized to the first `scales` entries.
std::vector<real> msssim_weights(int scales) {
    static const real base[5] = {real(0.0448), real(0.2856), real(0.3001), real(0.2363),
                                 real(0.1333)};
    if (scales < 1 || scales > 5) throw ConfigError("ms_ssim: scales must be in [1,5]");
    std::vector<real> w(base, base + scales);
    real total = 0;
    for (real v : w) total += v;
    for (real& v : w) v /= total;
    return w;
}

Tensor gaussian_window(int window, real sigma, int64_t channels) {
    std::vector<real> taps1(static_cast<size_t>(window));
    real sum = 0;
    for (int i = 0; i < window; ++i) {
        real d = real(i) - real(window - 1) / 2;
        taps1[i] = std::exp(-(d * d) / (2 * sigma * sigma));
        sum += taps1[i];
    }
    for (real& v : taps1) v /= sum;
    std::vector<real> taps2(static_cast<size_t>(window * window * channels));
    for (int y = 0; y < window; ++y)
        for (int x = 0; x < window; ++x)
            for (int64_t c = 0; c < channels; ++c)
                taps2[(y * window + x) * channels + c] = taps1[y] * taps1[x];
    return Tensor::from_data({window, window, channels}, std::move(taps2));
}

struct SsimMaps {
    Tensor luminance_cs;  // l*cs map
    Tensor cs;            // cs map
};

SsimMaps ssim_maps(const Tensor& x, const Tensor& y, const Tensor& win) {
    const real c1 = real(0.01) * real(0.01);
    const real c2 = real(0.03) * real(0.03);
    auto blur = [&](const Tensor& t) {
        return conv2d_depthwise(t, win, Tensor(), 1, PadMode::kZero, 0);  // valid
    };
    Tensor mu_x = blur(x);
    Tensor mu_y = blur(y);
    Tensor mu_xx = mul(mu_x, mu_x);
    Tensor mu_yy = mul(mu_y, mu_y);
    Tensor mu_xy = mul(mu_x, mu_y);
    Tensor sigma_x = sub(blur(mul(x, x)), mu_xx);
    Tensor sigma_y = sub(blur(mul(y, y)), mu_yy);
    Tensor sigma_xy = sub(blur(mul(x, y)), mu_xy);
    Tensor l = div(add_scalar(mul_scalar(mu_xy, 2), c1), add_scalar(add(mu_xx, mu_yy), c1));
    Tensor cs = div(add_scalar(mul_scalar(sigma_xy, 2), c2), add_scalar(add(sigma_x, sigma_y), c2));
    return {mul(l, cs), cs};
}

}  // namespace

Tensor ms_ssim(const Tensor& x, const Tensor& y, int scales, int window, real sigma) {
    if (x.shape() != y.shape()) throw ShapeError("ms_ssim: shape mismatch");
    if (x.ndim() != 4 || x.dim(0) != 1) throw ShapeError("ms_ssim: expects (1,H,W,C)");
    if (window % 2 == 0 || window < 3) throw ConfigError("ms_ssim: window must be odd and >= 3");
    int64_t need = (int64_t(1) << (scales - 1)) * window;
    if (x.dim(1) < need || x.dim(2) < need)
        throw ShapeError("ms_ssim: image smaller than " + std::to_string(need) +
                         " px required for " + std::to_string(scales) + " scales");

    std::vector<real> weights = msssim_weights(scales);
    Tensor win = gaussian_window(window, sigma, x.dim(3));
    // terms are clamped away from zero before the power so the log stays
    // finite when a scale's cs dips negative
    const real floor_eps = real(1e-6);

    Tensor cur_x = x, cur_y = y;
    Tensor acc;
    for (int j = 0; j < scales; ++j) {
        SsimMaps maps = ssim_maps(cur_x, cur_y, win);
        Tensor term = j == scales - 1 ? mean_all(maps.luminance_cs) : mean_all(maps.cs);
        Tensor powed = exp(mul_scalar(log(clamp_min(term, floor_eps)), weights[j]));
        acc = j == 0 ? powed : mul(acc, powed);
        if (j != scales - 1) {
            cur_x = avg_pool2(cur_x);
            cur_y = avg_pool2(cur_y);
        }
    }
    return acc;
}

TinyAutoencoder TinyAutoencoder::init(Rng& rng) {
    TinyAutoencoder ae;
    ae.e1 = Conv2dLayer::init(3, 3, 8, rng, 2);
    ae.e2 = Conv2dLayer::init(3, 8, 16, rng, 2);
    ae.d1 = Conv2dLayer::init(3, 16, 8, rng);
    ae.d2 = Conv2dLayer::init(3, 8, 3, rng);
    return ae;
}

Tensor TinyAutoencoder::encode(const Tensor& img) const {
    if (img.ndim() != 4 || img.dim(3) != 3) throw ShapeError("TinyAutoencoder: expects (1,H,W,3)");
    return silu(e2.forward(silu(e1.forward(img))));
}

Tensor TinyAutoencoder::decode(const Tensor& code) const {
    Tensor t = silu(d1.forward(upsample_nearest2(code)));
    return sigmoid(d2.forward(upsample_nearest2(t)));
}

NamedParams TinyAutoencoder::named_params(const std::string& prefix) const {
    NamedParams p;
    append_params(p, e1.named_params(prefix + ".e1"));
    append_params(p, e2.named_params(prefix + ".e2"));
    append_params(p, d1.named_params(prefix + ".d1"));
    append_params(p, d2.named_params(prefix + ".d2"));
    return p;
}

void TinyAutoencoder::freeze() {
    for (auto& [name, t] : named_params("ae")) {
        Tensor copy = t;
        copy.set_requires_grad(false);
    }
}

bool TinyAutoencoder::frozen() const {
    for (const auto& [name, t] : named_params("ae"))
        if (t.requires_grad()) return false;
    return true;
}

Tensor feature_consistency_loss(const Tensor& x_img, const Tensor& y_img,
                                const TinyAutoencoder& encoder, const FeatureLossWeights& w,
                                int msssim_scales, int msssim_window) {
    Tensor ex = encoder.encode(x_img);
    Tensor ey = encoder.encode(y_img);
    Tensor term_mse = mse_loss(ex, ey);
    Tensor term_cos = add_scalar(neg(cosine_similarity(ex, ey)), 1);
    Tensor term_ssim = add_scalar(neg(ms_ssim(x_img, y_img, msssim_scales, msssim_window)), 1);
    return add(add(mul_scalar(term_mse, w.alpha), mul_scalar(term_cos, w.gamma)),
               mul_scalar(term_ssim, w.beta));
}

AdversarialLosses adversarial_losses(const Tensor& d_real_logits, const Tensor& d_fake_logits) {
    Tensor sr = sigmoid(d_real_logits);
    Tensor sf = sigmoid(d_fake_logits);
    Tensor real_term = neg(mean_all(log(clamp_min(sr, kLogEps))));
    Tensor fake_term = neg(mean_all(log(clamp_min(add_scalar(neg(sf), 1), kLogEps))));
    AdversarialLosses out;
    out.loss_d = add(real_term, fake_term);
    out.loss_g = neg(mean_all(log(clamp_min(sf, kLogEps))));  // non-saturating
    return out;
}

Tensor total_loss(const Tensor& l_mse, const Tensor& l_fea, const Tensor& l_adv,
                  const LossWeights& w) {
    return add(add(mul_scalar(l_mse, w.lambda_mse), mul_scalar(l_fea, w.lambda_fea)),
               mul_scalar(l_adv, w.lambda_adv));
}

}  // namespace colormamba
