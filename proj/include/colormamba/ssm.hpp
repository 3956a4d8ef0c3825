#pragma once

#include "colormamba/ops.hpp"

namespace colormamba {

// Continuous state-space weights with diagonal A. In selective mode delta,
// B and C become per-step quantities; this struct is the time-invariant view.
struct SsmParams {
    std::vector<real> a;  // diag(A), length N
    std::vector<real> b;  // length N
    std::vector<real> c;  // length N
    real d = 0;
    real delta = 0;  // > 0
};

struct DiscretizedSsm {
    std::vector<real> a_bar, b_bar;  // length N
};

// Switch point for the removable singularity in B̄ = (exp(Δa)-1)/a · B.
inline constexpr real kZohBranchThreshold = 1e-8;

// Scalar ZOH rule shared by every discretization path.
// phi = (exp(delta*a)-1)/a, or delta when |delta*a| < threshold; b_bar = phi*b.
void discretize_entry(real a, real delta, real b, real& a_bar, real& b_bar);

DiscretizedSsm discretize(const SsmParams& p);

// Associative scan element: h -> a*h + b.
struct ScanElem {
    real a, b;
};

// x ∘ y applies y first: (a_x a_y, a_x b_y + b_x).
inline ScanElem compose(const ScanElem& x, const ScanElem& y) {
    return {x.a * y.a, x.a * y.b + x.b};
}

namespace kernels {

// h_k = a_k h_{k-1} + bx_k with h_0 = 0, per state column n independently.
// Layout: a, bx, h are (L,N) row-major.
void scan_h_sequential(const real* a, const real* bx, int64_t len, int64_t n_state, real* h);

// Blelloch up/down-sweep form of the same recurrence; numerically equal to
// the sequential kernel within rounding.
void scan_h_parallel(const real* a, const real* bx, int64_t len, int64_t n_state, real* h);

}  // namespace kernels

// Reference recurrence y_k = C h_k + D x_k over a scalar input sequence.
std::vector<real> scan_sequential(const DiscretizedSsm& disc, const std::vector<real>& c, real d,
                                  const std::vector<real>& x);
std::vector<real> scan_parallel(const DiscretizedSsm& disc, const std::vector<real>& c, real d,
                                const std::vector<real>& x);

enum class ScanKind { kSequential, kParallel };

// Learnable parameter set for one data-dependent scan over (L,C) sequences.
struct SelectiveSsm {
    Tensor a_diag;   // (C,N)
    Tensor w_delta;  // (C,C)
    Tensor b_delta;  // (C)
    Tensor w_b;      // (C,N)
    Tensor w_c;      // (C,N)
    Tensor d_skip;   // (C)

    static SelectiveSsm init(int64_t channels, int64_t state_size, Rng& rng);
    Tensor forward(const Tensor& x, ScanKind kind = ScanKind::kSequential) const;
    std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix) const;
};

struct SelectiveProjection {
    Tensor delta;  // (L,C), softplus-positive
    Tensor b;      // (L,N)
    Tensor c;      // (L,N)
};

SelectiveProjection selective_project(const Tensor& x, const SelectiveSsm& p);

// Fused per-step discretization + recurrence + output map:
//   y[l,c] = sum_n c_in[l,n] * h[l,c,n] + d_skip[c] * x[l,c]
// with h from the ZOH-discretized selective recurrence. Custom backward.
Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& b_in,
                      const Tensor& c_in, const Tensor& a_diag, const Tensor& d_skip,
                      ScanKind kind = ScanKind::kSequential);

}  // namespace colormamba
