#pragma once

#include "colormamba/tensor.hpp"

namespace colormamba {

// ---------------------------------------------------------------------------
// Elementwise (numpy-style broadcasting on binary ops)
// ---------------------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, real s);
Tensor mul_scalar(const Tensor& a, real s);

Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor clamp_min(const Tensor& x, real lo);
Tensor clamp(const Tensor& x, real lo, real hi);

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);  // 2D
Tensor concat_last(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx);    // (M,C),(K) -> (K,C)
Tensor segment_mean_rows(const Tensor& x, int64_t bins);                 // (L,C) -> (bins,C)

// ---------------------------------------------------------------------------
// Reductions / softmax
// ---------------------------------------------------------------------------
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor sum_axis(const Tensor& x, int axis, bool keepdim = true);
Tensor mean_axis(const Tensor& x, int axis, bool keepdim = true);
Tensor softmax(const Tensor& x, int axis);

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);                          // (M,K)x(K,N)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);         // (M,K),(K,N),(N)

// ---------------------------------------------------------------------------
// Spatial ops on (1,H,W,C) maps
// ---------------------------------------------------------------------------
enum class PadMode { kZero, kReplicate };

// Cross-correlation; default padding (k-1)/2, pad=0 gives a valid conv.
// Kernel layout (kh,kw,Cin,Cout); spatial extent must be odd.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
              PadMode mode, int pad = -1);
// One kernel per channel, layout (kh,kw,C).
Tensor conv2d_depthwise(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
                        PadMode mode, int pad = -1);

Tensor avg_pool2(const Tensor& x);
Tensor upsample_nearest2(const Tensor& x);
Tensor resize_nearest(const Tensor& x, int64_t out_h, int64_t out_w);
Tensor crop_border(const Tensor& x, int64_t border);

// ---------------------------------------------------------------------------
// Normalization / composite
// ---------------------------------------------------------------------------
// Zero mean / unit variance over the trailing (channel) axis, then affine.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps = 1e-5);
// Parameter-free per-channel normalization over the spatial axes of (1,H,W,C).
Tensor instance_norm(const Tensor& x, real eps = 1e-5);
// Linear -> SiLU -> Linear.
Tensor mlp(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
           const Tensor& b2);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, real s) { return mul_scalar(a, s); }
inline Tensor operator*(real s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator+(const Tensor& a, real s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, real s) { return add_scalar(a, -s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace colormamba
