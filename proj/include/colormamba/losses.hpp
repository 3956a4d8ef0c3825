#pragma once

#include "colormamba/blocks.hpp"

namespace colormamba {

// Mean squared error over all elements.
Tensor mse_loss(const Tensor& x, const Tensor& y);

// Cosine similarity of the flattened tensors (scalar in [-1,1]).
Tensor cosine_similarity(const Tensor& x, const Tensor& y);

// Multi-scale SSIM on (1,H,W,C) images in [0,1]. Gaussian window (default
// 11x11, sigma 1.5), standard per-scale exponents renormalized to the
// requested scale count. Differentiable.
Tensor ms_ssim(const Tensor& x, const Tensor& y, int scales = 3, int window = 11,
               real sigma = real(1.5));

// Frozen surrogate for the pretrained perceptual autoencoder: a tiny conv
// autoencoder trained locally on the task corpus, then used encoder-only.
struct TinyAutoencoder {
    Conv2dLayer e1, e2;  // stride-2 encoder
    Conv2dLayer d1, d2;  // nearest-upsample decoder

    static TinyAutoencoder init(Rng& rng);
    Tensor encode(const Tensor& img) const;   // (1,H,W,3) -> (1,H/4,W/4,16)
    Tensor decode(const Tensor& code) const;  // back to (1,H,W,3), sigmoid
    Tensor reconstruct(const Tensor& img) const { return decode(encode(img)); }
    NamedParams named_params(const std::string& prefix) const;
    void freeze();
    bool frozen() const;
};

struct FeatureLossWeights {
    real alpha = 1;  // embedding MSE
    real gamma = 1;  // cosine term
    real beta = 1;   // MS-SSIM term
};

// alpha*MSE(X,Y) + gamma*(1 - cos(X,Y)) + beta*(1 - MS-SSIM(x_img,y_img))
// with X, Y the frozen encoder embeddings of the two images.
Tensor feature_consistency_loss(const Tensor& x_img, const Tensor& y_img,
                                const TinyAutoencoder& encoder, const FeatureLossWeights& w,
                                int msssim_scales = 3, int msssim_window = 11);

// Patch-critic objectives. loss_d is the literal two-term form, loss_g the
// non-saturating generator form; logs are eps-clamped.
inline constexpr real kLogEps = real(1e-7);

struct AdversarialLosses {
    Tensor loss_d;
    Tensor loss_g;
};

AdversarialLosses adversarial_losses(const Tensor& d_real_logits, const Tensor& d_fake_logits);

struct LossWeights {
    real lambda_mse = 15;
    real lambda_fea = 15;
    real lambda_adv = 1;
    FeatureLossWeights feature;
};

Tensor total_loss(const Tensor& l_mse, const Tensor& l_fea, const Tensor& l_adv,
                  const LossWeights& w);

}  // namespace colormamba
