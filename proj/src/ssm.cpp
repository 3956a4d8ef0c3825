#include "colormamba/ssm.hpp"

#include <cmath>

#include "colormamba/parallel.hpp"

namespace colormamba {

void discretize_entry(real a, real delta, real b, real& a_bar, real& b_bar) {
    real x = delta * a;
    a_bar = std::exp(x);
    if (std::abs(x) < kZohBranchThreshold) {
        b_bar = delta * b;  // series limit of (exp(x)-1)/a * b as x -> 0
    } else {
        b_bar = (std::expm1(x) / a) * b;
    }
}

DiscretizedSsm discretize(const SsmParams& p) {
    if (!(p.delta > 0)) throw NumericsError("discretize: delta must be strictly positive");
    size_t n = p.a.size();
    if (p.b.size() != n) throw ShapeError("discretize: A and B length mismatch");
    DiscretizedSsm out;
    out.a_bar.resize(n);
    out.b_bar.resize(n);
    for (size_t i = 0; i < n; ++i)
        discretize_entry(p.a[i], p.delta, p.b[i], out.a_bar[i], out.b_bar[i]);
    return out;
}

namespace kernels {

void scan_h_sequential(const real* a, const real* bx, int64_t len, int64_t n_state, real* h) {
    for (int64_t n = 0; n < n_state; ++n) {
        real state = 0;
        for (int64_t l = 0; l < len; ++l) {
            state = a[l * n_state + n] * state + bx[l * n_state + n];
            h[l * n_state + n] = state;
        }
    }
}

void scan_h_parallel(const real* a, const real* bx, int64_t len, int64_t n_state, real* h) {
    int64_t m = 1;
    while (m < len) m <<= 1;
    parallel_for(n_state, [&](int64_t n) {
        std::vector<real> wa(static_cast<size_t>(m)), wb(static_cast<size_t>(m));
        for (int64_t l = 0; l < len; ++l) {
            wa[l] = a[l * n_state + n];
            wb[l] = bx[l * n_state + n];
        }
        for (int64_t l = len; l < m; ++l) {
            wa[l] = 1;  // identity element
            wb[l] = 0;
        }
        // up-sweep: each internal slot accumulates its subtree in sequence order
        for (int64_t d = 1; d < m; d <<= 1) {
            for (int64_t i = 2 * d - 1; i < m; i += 2 * d) {
                real la = wa[i - d], lb = wb[i - d];
                real ra = wa[i], rb = wb[i];
                wa[i] = ra * la;
                wb[i] = ra * lb + rb;
            }
        }
        // down-sweep: distribute exclusive prefixes
        wa[m - 1] = 1;
        wb[m - 1] = 0;
        for (int64_t d = m >> 1; d >= 1; d >>= 1) {
            for (int64_t i = 2 * d - 1; i < m; i += 2 * d) {
                real ta = wa[i - d], tb = wb[i - d];
                real pa = wa[i], pb = wb[i];
                wa[i - d] = pa;
                wb[i - d] = pb;
                wa[i] = ta * pa;
                wb[i] = ta * pb + tb;
            }
        }
        // inclusive value from exclusive prefix and the original element
        for (int64_t l = 0; l < len; ++l)
            h[l * n_state + n] = a[l * n_state + n] * wb[l] + bx[l * n_state + n];
    });
}

}  // namespace kernels

namespace {

std::vector<real> scan_y(const DiscretizedSsm& disc, const std::vector<real>& c, real d,
                         const std::vector<real>& x, bool use_parallel) {
    int64_t n = static_cast<int64_t>(disc.a_bar.size());
    int64_t len = static_cast<int64_t>(x.size());
    if (static_cast<int64_t>(c.size()) != n) throw ShapeError("scan: C length != state size");
    if (len < 1) throw ShapeError("scan: empty sequence");
    std::vector<real> a(static_cast<size_t>(len * n)), bx(static_cast<size_t>(len * n)),
        h(static_cast<size_t>(len * n));
    for (int64_t l = 0; l < len; ++l)
        for (int64_t i = 0; i < n; ++i) {
            a[l * n + i] = disc.a_bar[i];
            bx[l * n + i] = disc.b_bar[i] * x[l];
        }
    if (use_parallel) {
        kernels::scan_h_parallel(a.data(), bx.data(), len, n, h.data());
    } else {
        kernels::scan_h_sequential(a.data(), bx.data(), len, n, h.data());
    }
    std::vector<real> y(static_cast<size_t>(len));
    for (int64_t l = 0; l < len; ++l) {
        real acc = d * x[l];
        for (int64_t i = 0; i < n; ++i) acc += c[i] * h[l * n + i];
        y[l] = acc;
    }
    return y;
}

}  // namespace

std::vector<real> scan_sequential(const DiscretizedSsm& disc, const std::vector<real>& c, real d,
                                  const std::vector<real>& x) {
    return scan_y(disc, c, d, x, false);
}

std::vector<real> scan_parallel(const DiscretizedSsm& disc, const std::vector<real>& c, real d,
                                const std::vector<real>& x) {
    return scan_y(disc, c, d, x, true);
}

// ---------------------------------------------------------------------------
// Selective (data-dependent) scan
// ---------------------------------------------------------------------------

SelectiveSsm SelectiveSsm::init(int64_t channels, int64_t state_size, Rng& rng) {
    SelectiveSsm p;
    // Negative, distinct decay spectrum per channel: a[c][n] = -(n+1).
    std::vector<real> a(static_cast<size_t>(channels * state_size));
    for (int64_t c = 0; c < channels; ++c)
        for (int64_t n = 0; n < state_size; ++n) a[c * state_size + n] = -real(n + 1);
    p.a_diag = Tensor::from_data({channels, state_size}, std::move(a)).set_requires_grad(true);

    real k = real(1) / std::sqrt(real(channels));
    p.w_delta = Tensor::uniform({channels, channels}, rng, -k, k).set_requires_grad(true);
    // Bias chosen so softplus lands in ~[0.01, 0.1] at init.
    std::vector<real> bd(static_cast<size_t>(channels));
    for (auto& v : bd) {
        real target = rng.uniform(real(0.01), real(0.1));
        v = std::log(std::exp(target) - 1);
    }
    p.b_delta = Tensor::from_data({channels}, std::move(bd)).set_requires_grad(true);
    p.w_b = Tensor::uniform({channels, state_size}, rng, -k, k).set_requires_grad(true);
    p.w_c = Tensor::uniform({channels, state_size}, rng, -k, k).set_requires_grad(true);
    p.d_skip = Tensor::full({channels}, real(1)).set_requires_grad(true);
    return p;
}

std::vector<std::pair<std::string, Tensor>> SelectiveSsm::named_params(
    const std::string& prefix) const {
    return {{prefix + ".a_diag", a_diag},   {prefix + ".w_delta", w_delta},
            {prefix + ".b_delta", b_delta}, {prefix + ".w_b", w_b},
            {prefix + ".w_c", w_c},         {prefix + ".d_skip", d_skip}};
}

SelectiveProjection selective_project(const Tensor& x, const SelectiveSsm& p) {
    if (x.ndim() != 2 || x.dim(1) != p.w_delta.dim(0))
        throw ShapeError("selective_project: input must be (L,C) matching projection width");
    SelectiveProjection out;
    out.delta = softplus(linear(x, p.w_delta, p.b_delta));
    out.b = matmul(x, p.w_b);
    out.c = matmul(x, p.w_c);
    return out;
}

Tensor SelectiveSsm::forward(const Tensor& x, ScanKind kind) const {
    SelectiveProjection proj = selective_project(x, *this);
    return selective_scan(x, proj.delta, proj.b, proj.c, a_diag, d_skip, kind);
}

Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& b_in,
                      const Tensor& c_in, const Tensor& a_diag, const Tensor& d_skip,
                      ScanKind kind) {
    if (x.ndim() != 2) throw ShapeError("selective_scan: x must be (L,C)");
    int64_t len = x.dim(0), ch = x.dim(1);
    int64_t ns = a_diag.dim(1);
    if (delta.shape() != Shape{len, ch}) throw ShapeError("selective_scan: delta must be (L,C)");
    if (b_in.shape() != Shape{len, ns} || c_in.shape() != Shape{len, ns})
        throw ShapeError("selective_scan: B/C must be (L,N)");
    if (a_diag.dim(0) != ch || d_skip.numel() != ch)
        throw ShapeError("selective_scan: A/D channel mismatch");
    const auto& dv = delta.values();
    for (real v : dv)
        if (!(v > 0)) throw NumericsError("selective_scan: delta must be strictly positive");

    const auto& xv = x.values();
    const auto& bv = b_in.values();
    const auto& av = a_diag.values();
    const auto& cv = c_in.values();
    const auto& dskip = d_skip.values();

    // Per (channel, state) discretized coefficients and state trajectory,
    // kept for the backward pass. Layout (L,C,N).
    auto a_bar = std::make_shared<std::vector<real>>(static_cast<size_t>(len * ch * ns));
    auto phi = std::make_shared<std::vector<real>>(static_cast<size_t>(len * ch * ns));
    auto h = std::make_shared<std::vector<real>>(static_cast<size_t>(len * ch * ns));

    bool parallel_kind = kind == ScanKind::kParallel;
    parallel_for(ch, [&](int64_t c) {
        std::vector<real> a_cn(static_cast<size_t>(len * ns)), bx_cn(static_cast<size_t>(len * ns)),
            h_cn(static_cast<size_t>(len * ns));
        for (int64_t l = 0; l < len; ++l) {
            real dlc = dv[l * ch + c];
            real xlc = xv[l * ch + c];
            for (int64_t n = 0; n < ns; ++n) {
                real a = av[c * ns + n];
                real zx = dlc * a;
                real ab = std::exp(zx);
                real ph = std::abs(zx) < kZohBranchThreshold ? dlc : std::expm1(zx) / a;
                a_cn[l * ns + n] = ab;
                bx_cn[l * ns + n] = ph * bv[l * ns + n] * xlc;
                (*a_bar)[(l * ch + c) * ns + n] = ab;
                (*phi)[(l * ch + c) * ns + n] = ph;
            }
        }
        if (parallel_kind) {
            kernels::scan_h_parallel(a_cn.data(), bx_cn.data(), len, ns, h_cn.data());
        } else {
            kernels::scan_h_sequential(a_cn.data(), bx_cn.data(), len, ns, h_cn.data());
        }
        for (int64_t l = 0; l < len; ++l)
            for (int64_t n = 0; n < ns; ++n)
                (*h)[(l * ch + c) * ns + n] = h_cn[l * ns + n];
    });

    std::vector<real> y(static_cast<size_t>(len * ch));
    for (int64_t l = 0; l < len; ++l)
        for (int64_t c = 0; c < ch; ++c) {
            real acc = dskip[c] * xv[l * ch + c];
            for (int64_t n = 0; n < ns; ++n) acc += cv[l * ns + n] * (*h)[(l * ch + c) * ns + n];
            y[l * ch + c] = acc;
        }

    return make_op_result(
        "selective_scan", {len, ch}, std::move(y), {x, delta, b_in, c_in, a_diag, d_skip},
        [len, ch, ns, a_bar, phi, h](detail::Node& node) {
            const auto& g = node.grad;
            const auto& xv = node.parents[0]->value;
            const auto& dv = node.parents[1]->value;
            const auto& bv = node.parents[2]->value;
            const auto& cv = node.parents[3]->value;
            const auto& av = node.parents[4]->value;
            const auto& dskip = node.parents[5]->value;

            auto want = [&](size_t i) { return node.parents[i]->requires_grad; };
            for (size_t i = 0; i < 6; ++i)
                if (want(i)) node.parents[i]->ensure_grad();
            auto& gx = node.parents[0]->grad;
            auto& gdelta = node.parents[1]->grad;
            auto& gb = node.parents[2]->grad;
            auto& gc = node.parents[3]->grad;
            auto& ga = node.parents[4]->grad;
            auto& gd = node.parents[5]->grad;

            // dh is materialized one channel at a time by the reverse
            // recurrence dh_l = C_l g_l + a_bar_{l+1} dh_{l+1}.
            std::vector<real> dh(static_cast<size_t>(len * ns));
            for (int64_t c = 0; c < ch; ++c) {
                for (int64_t l = len - 1; l >= 0; --l) {
                    real glc = g[l * ch + c];
                    for (int64_t n = 0; n < ns; ++n) {
                        real acc = glc * cv[l * ns + n];
                        if (l + 1 < len)
                            acc += (*a_bar)[((l + 1) * ch + c) * ns + n] * dh[(l + 1) * ns + n];
                        dh[l * ns + n] = acc;
                    }
                }
                for (int64_t l = 0; l < len; ++l) {
                    real glc = g[l * ch + c];
                    real xlc = xv[l * ch + c];
                    real dlc = dv[l * ch + c];
                    real dx_acc = glc * dskip[c];
                    real ddelta_acc = 0;
                    for (int64_t n = 0; n < ns; ++n) {
                        size_t lcn = static_cast<size_t>((l * ch + c) * ns + n);
                        real dh_ln = dh[l * ns + n];
                        real ab = (*a_bar)[lcn];
                        real ph = (*phi)[lcn];
                        real a = av[c * ns + n];
                        real b = bv[l * ns + n];
                        real h_prev = l > 0 ? (*h)[((l - 1) * ch + c) * ns + n] : real(0);
                        real b_bar = ph * b;
                        bool series = std::abs(dlc * a) < kZohBranchThreshold;

                        if (want(3)) gc[l * ns + n] += glc * (*h)[lcn];
                        if (want(0)) dx_acc += dh_ln * b_bar;
                        if (want(2)) gb[l * ns + n] += dh_ln * xlc * ph;
                        // d a_bar = dh * h_prev; d b_bar = dh * x
                        real dab = dh_ln * h_prev;
                        real dbb = dh_ln * xlc * b;  // through phi
                        if (want(1)) {
                            // d a_bar/d delta = a*exp(delta a); d phi/d delta = exp(delta a)
                            // (series branch: phi = delta, d phi/d delta = 1)
                            ddelta_acc += dab * a * ab + dbb * (series ? real(1) : ab);
                        }
                        if (want(4)) {
                            // d a_bar/d a = delta*exp(delta a)
                            // d phi/d a = (delta*exp(delta a) - phi)/a, 0 in the series branch
                            real dphi_da = series ? real(0) : (dlc * ab - ph) / a;
                            ga[c * ns + n] += dab * dlc * ab + dbb * dphi_da;
                        }
                    }
                    if (want(0)) gx[l * ch + c] += dx_acc;
                    if (want(1)) gdelta[l * ch + c] += ddelta_acc;
                    if (want(5)) gd[c] += glc * xlc;
                }
            }
        });
}

}  // namespace colormamba
