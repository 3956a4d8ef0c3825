#include "colormamba/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace colormamba {

namespace {

using detail::Node;

const std::vector<real>& pval(Node& n, size_t i) { return n.parents[i]->value; }

bool preq(Node& n, size_t i) { return n.parents[i]->requires_grad; }

std::vector<real>& pgrad(Node& n, size_t i) {
    n.parents[i]->ensure_grad();
    return n.parents[i]->grad;
}

std::vector<int64_t> strides_of(const Shape& s) {
    std::vector<int64_t> st(s.size());
    int64_t acc = 1;
    for (size_t i = s.size(); i-- > 0;) {
        st[i] = acc;
        acc *= s[i];
    }
    return st;
}

struct BroadcastPlan {
    Shape out_shape;
    std::vector<int64_t> out_strides;
    std::vector<int64_t> a_strides;  // 0 where broadcast
    std::vector<int64_t> b_strides;
    bool same_shape = false;
};

BroadcastPlan broadcast_plan(const char* op, const Shape& a, const Shape& b) {
    BroadcastPlan plan;
    if (a == b) {
        plan.out_shape = a;
        plan.same_shape = true;
        return plan;
    }
    size_t nd = std::max(a.size(), b.size());
    Shape ap(nd, 1), bp(nd, 1);
    std::copy(a.begin(), a.end(), ap.begin() + (nd - a.size()));
    std::copy(b.begin(), b.end(), bp.begin() + (nd - b.size()));
    plan.out_shape.resize(nd);
    for (size_t d = 0; d < nd; ++d) {
        if (ap[d] != bp[d] && ap[d] != 1 && bp[d] != 1) {
            throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not broadcastable");
        }
        plan.out_shape[d] = std::max(ap[d], bp[d]);
    }
    plan.out_strides = strides_of(plan.out_shape);
    auto astr = strides_of(ap);
    auto bstr = strides_of(bp);
    plan.a_strides.resize(nd);
    plan.b_strides.resize(nd);
    for (size_t d = 0; d < nd; ++d) {
        plan.a_strides[d] = (ap[d] == 1 && plan.out_shape[d] > 1) ? 0 : astr[d];
        plan.b_strides[d] = (bp[d] == 1 && plan.out_shape[d] > 1) ? 0 : bstr[d];
    }
    return plan;
}

template <class Fn>
void for_each_broadcast(const BroadcastPlan& plan, int64_t n, Fn fn) {
    if (plan.same_shape) {
        for (int64_t i = 0; i < n; ++i) fn(i, i, i);
        return;
    }
    size_t nd = plan.out_shape.size();
    for (int64_t oi = 0; oi < n; ++oi) {
        int64_t rem = oi, ai = 0, bi = 0;
        for (size_t d = 0; d < nd; ++d) {
            int64_t c = rem / plan.out_strides[d];
            rem -= c * plan.out_strides[d];
            ai += c * plan.a_strides[d];
            bi += c * plan.b_strides[d];
        }
        fn(oi, ai, bi);
    }
}

// dfa(oi, ai, bi) and dfb(...) return the local partials given element indices.
template <class FwdFn, class DaFn, class DbFn>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, FwdFn f, DaFn dfa, DbFn dfb) {
    BroadcastPlan plan = broadcast_plan(name, a.shape(), b.shape());
    int64_t n = numel(plan.out_shape);
    std::vector<real> out(static_cast<size_t>(n));
    const auto& av = a.values();
    const auto& bv = b.values();
    for_each_broadcast(plan, n, [&](int64_t oi, int64_t ai, int64_t bi) { out[oi] = f(av[ai], bv[bi]); });
    return make_op_result(name, plan.out_shape, std::move(out), {a, b},
                          [plan, n, dfa, dfb](Node& node) {
                              const auto& g = node.grad;
                              const auto& av = pval(node, 0);
                              const auto& bv = pval(node, 1);
                              bool wa = preq(node, 0), wb = preq(node, 1);
                              std::vector<real>* ga = wa ? &pgrad(node, 0) : nullptr;
                              std::vector<real>* gb = wb ? &pgrad(node, 1) : nullptr;
                              for_each_broadcast(plan, n, [&](int64_t oi, int64_t ai, int64_t bi) {
                                  if (wa) (*ga)[ai] += g[oi] * dfa(av[ai], bv[bi]);
                                  if (wb) (*gb)[bi] += g[oi] * dfb(av[ai], bv[bi]);
                              });
                          });
}

// Backward receives (x, y, g) and returns the upstream contribution.
template <class FwdFn, class BwdFn>
Tensor unary_op(const char* name, const Tensor& x, FwdFn f, BwdFn df) {
    const auto& xv = x.values();
    std::vector<real> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    return make_op_result(name, x.shape(), std::move(out), {x}, [df](Node& node) {
        if (!preq(node, 0)) return;
        auto& gx = pgrad(node, 0);
        const auto& xv = pval(node, 0);
        const auto& yv = node.value;
        const auto& g = node.grad;
        for (size_t i = 0; i < g.size(); ++i) gx[i] += df(xv[i], yv[i], g[i]);
    });
}

real stable_sigmoid(real x) {
    if (x >= 0) {
        real z = std::exp(-x);
        return 1 / (1 + z);
    }
    real z = std::exp(x);
    return z / (1 + z);
}

real stable_softplus(real x) {
    if (x > 30) return x;
    if (x < -30) return std::exp(x);
    return std::log1p(std::exp(x));
}

struct AxisSplit {
    int64_t outer, n, inner;
};

AxisSplit axis_split(const char* op, const Shape& s, int axis) {
    int nd = static_cast<int>(s.size());
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) throw ShapeError(std::string(op) + ": axis out of range");
    AxisSplit sp{1, s[axis], 1};
    for (int d = 0; d < axis; ++d) sp.outer *= s[d];
    for (int d = axis + 1; d < nd; ++d) sp.inner *= s[d];
    return sp;
}

int normalize_axis(const Shape& s, int axis) {
    int nd = static_cast<int>(s.size());
    return axis < 0 ? axis + nd : axis;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](real x, real y) { return x + y; }, [](real, real) { return real(1); },
        [](real, real) { return real(1); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](real x, real y) { return x - y; }, [](real, real) { return real(1); },
        [](real, real) { return real(-1); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](real x, real y) { return x * y; }, [](real, real y) { return y; },
        [](real x, real) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        "div", a, b, [](real x, real y) { return x / y; }, [](real, real y) { return 1 / y; },
        [](real x, real y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& a, real s) {
    return unary_op(
        "add_scalar", a, [s](real x) { return x + s; },
        [](real, real, real g) { return g; });
}

Tensor mul_scalar(const Tensor& a, real s) {
    return unary_op(
        "mul_scalar", a, [s](real x) { return x * s; },
        [s](real, real, real g) { return g * s; });
}

Tensor neg(const Tensor& x) { return mul_scalar(x, real(-1)); }

Tensor exp(const Tensor& x) {
    return unary_op(
        "exp", x, [](real v) { return std::exp(v); },
        [](real, real y, real g) { return g * y; });
}

Tensor log(const Tensor& x) {
    return unary_op(
        "log", x, [](real v) { return std::log(v); },
        [](real v, real, real g) { return g / v; });
}

Tensor sqrt(const Tensor& x) {
    return unary_op(
        "sqrt", x, [](real v) { return std::sqrt(v); },
        [](real, real y, real g) { return g / (2 * y); });
}

Tensor square(const Tensor& x) {
    return unary_op(
        "square", x, [](real v) { return v * v; },
        [](real v, real, real g) { return 2 * v * g; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        "sigmoid", x, [](real v) { return stable_sigmoid(v); },
        [](real, real y, real g) { return g * y * (1 - y); });
}

Tensor silu(const Tensor& x) {
    return unary_op(
        "silu", x, [](real v) { return v * stable_sigmoid(v); },
        [](real v, real, real g) {
            real s = stable_sigmoid(v);
            return g * (s + v * s * (1 - s));
        });
}

Tensor softplus(const Tensor& x) {
    return unary_op(
        "softplus", x, [](real v) { return stable_softplus(v); },
        [](real v, real, real g) { return g * stable_sigmoid(v); });
}

Tensor clamp_min(const Tensor& x, real lo) {
    return unary_op(
        "clamp_min", x, [lo](real v) { return v < lo ? lo : v; },
        [lo](real v, real, real g) { return v < lo ? real(0) : g; });
}

Tensor clamp(const Tensor& x, real lo, real hi) {
    return unary_op(
        "clamp", x, [lo, hi](real v) { return v < lo ? lo : (v > hi ? hi : v); },
        [lo, hi](real v, real, real g) { return (v < lo || v > hi) ? real(0) : g; });
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    return make_op_result("reshape", std::move(shape), x.values(), {x}, [](Node& node) {
        if (!preq(node, 0)) return;
        auto& gx = pgrad(node, 0);
        const auto& g = node.grad;
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Tensor transpose(const Tensor& x) {
    if (x.ndim() != 2) throw ShapeError("transpose: expects a 2D tensor");
    int64_t m = x.dim(0), n = x.dim(1);
    std::vector<real> out(static_cast<size_t>(m * n));
    const auto& xv = x.values();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
    return make_op_result("transpose", {n, m}, std::move(out), {x}, [m, n](Node& node) {
        if (!preq(node, 0)) return;
        auto& gx = pgrad(node, 0);
        const auto& g = node.grad;
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
    });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_last: no inputs");
    Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
    int64_t total = 0;
    for (const Tensor& p : parts) {
        Shape pl(p.shape().begin(), p.shape().end() - 1);
        if (pl != lead) throw ShapeError("concat_last: leading dimensions differ");
        total += p.shape().back();
    }
    Shape out_shape = lead;
    out_shape.push_back(total);
    int64_t rows = numel(lead);
    std::vector<real> out(static_cast<size_t>(rows * total));
    std::vector<int64_t> widths;
    int64_t off = 0;
    for (const Tensor& p : parts) {
        int64_t w = p.shape().back();
        widths.push_back(w);
        const auto& pv = p.values();
        for (int64_t r = 0; r < rows; ++r)
            std::memcpy(&out[r * total + off], &pv[r * w], sizeof(real) * static_cast<size_t>(w));
        off += w;
    }
    return make_op_result("concat_last", std::move(out_shape), std::move(out), parts,
                          [rows, total, widths](Node& node) {
                              const auto& g = node.grad;
                              int64_t off = 0;
                              for (size_t p = 0; p < widths.size(); ++p) {
                                  int64_t w = widths[p];
                                  if (preq(node, p)) {
                                      auto& gp = pgrad(node, p);
                                      for (int64_t r = 0; r < rows; ++r)
                                          for (int64_t c = 0; c < w; ++c)
                                              gp[r * w + c] += g[r * total + off + c];
                                  }
                                  off += w;
                              }
                          });
}

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx) {
    if (x.ndim() != 2) throw ShapeError("gather_rows: expects (M,C)");
    int64_t m = x.dim(0), c = x.dim(1);
    int64_t k = static_cast<int64_t>(idx.size());
    std::vector<real> out(static_cast<size_t>(k * c));
    const auto& xv = x.values();
    for (int64_t r = 0; r < k; ++r) {
        int64_t s = idx[r];
        if (s < 0 || s >= m) throw ShapeError("gather_rows: index out of range");
        std::memcpy(&out[r * c], &xv[s * c], sizeof(real) * static_cast<size_t>(c));
    }
    return make_op_result("gather_rows", {k, c}, std::move(out), {x}, [idx, c](Node& node) {
        if (!preq(node, 0)) return;
        auto& gx = pgrad(node, 0);
        const auto& g = node.grad;
        for (size_t r = 0; r < idx.size(); ++r)
            for (int64_t j = 0; j < c; ++j) gx[idx[r] * c + j] += g[r * c + j];
    });
}

Tensor segment_mean_rows(const Tensor& x, int64_t bins) {
    if (x.ndim() != 2) throw ShapeError("segment_mean_rows: expects (L,C)");
    int64_t l = x.dim(0), c = x.dim(1);
    if (bins < 1 || bins > l) throw ConfigError("segment_mean_rows: bins must be in [1, L]");
    std::vector<real> out(static_cast<size_t>(bins * c), real(0));
    const auto& xv = x.values();
    std::vector<int64_t> starts(bins + 1);
    for (int64_t b = 0; b <= bins; ++b) starts[b] = b * l / bins;
    for (int64_t b = 0; b < bins; ++b) {
        real inv = real(1) / real(starts[b + 1] - starts[b]);
        for (int64_t r = starts[b]; r < starts[b + 1]; ++r)
            for (int64_t j = 0; j < c; ++j) out[b * c + j] += xv[r * c + j] * inv;
    }
    return make_op_result("segment_mean_rows", {bins, c}, std::move(out), {x},
                          [starts, bins, c](Node& node) {
                              if (!preq(node, 0)) return;
                              auto& gx = pgrad(node, 0);
                              const auto& g = node.grad;
                              for (int64_t b = 0; b < bins; ++b) {
                                  real inv = real(1) / real(starts[b + 1] - starts[b]);
                                  for (int64_t r = starts[b]; r < starts[b + 1]; ++r)
                                      for (int64_t j = 0; j < c; ++j)
                                          gx[r * c + j] += g[b * c + j] * inv;
                              }
                          });
}

// ---------------------------------------------------------------------------
// Reductions / softmax
// ---------------------------------------------------------------------------

Tensor sum_all(const Tensor& x) {
    real acc = 0;
    for (real v : x.values()) acc += v;
    return make_op_result("sum_all", {1}, {acc}, {x}, [](Node& node) {
        if (!preq(node, 0)) return;
        auto& gx = pgrad(node, 0);
        real g = node.grad[0];
        for (auto& v : gx) v += g;
    });
}

Tensor mean_all(const Tensor& x) { return mul_scalar(sum_all(x), real(1) / real(x.numel())); }

Tensor sum_axis(const Tensor& x, int axis, bool keepdim) {
    AxisSplit sp = axis_split("sum_axis", x.shape(), axis);
    int ax = normalize_axis(x.shape(), axis);
    Shape out_shape = x.shape();
    if (keepdim) {
        out_shape[ax] = 1;
    } else {
        out_shape.erase(out_shape.begin() + ax);
        if (out_shape.empty()) out_shape.push_back(1);
    }
    std::vector<real> out(static_cast<size_t>(sp.outer * sp.inner), real(0));
    const auto& xv = x.values();
    for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t k = 0; k < sp.n; ++k)
            for (int64_t i = 0; i < sp.inner; ++i)
                out[o * sp.inner + i] += xv[(o * sp.n + k) * sp.inner + i];
    return make_op_result("sum_axis", std::move(out_shape), std::move(out), {x}, [sp](Node& node) {
        if (!preq(node, 0)) return;
        auto& gx = pgrad(node, 0);
        const auto& g = node.grad;
        for (int64_t o = 0; o < sp.outer; ++o)
            for (int64_t k = 0; k < sp.n; ++k)
                for (int64_t i = 0; i < sp.inner; ++i)
                    gx[(o * sp.n + k) * sp.inner + i] += g[o * sp.inner + i];
    });
}

Tensor mean_axis(const Tensor& x, int axis, bool keepdim) {
    AxisSplit sp = axis_split("mean_axis", x.shape(), axis);
    return mul_scalar(sum_axis(x, axis, keepdim), real(1) / real(sp.n));
}

Tensor softmax(const Tensor& x, int axis) {
    AxisSplit sp = axis_split("softmax", x.shape(), axis);
    const auto& xv = x.values();
    std::vector<real> out(xv.size());
    for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t i = 0; i < sp.inner; ++i) {
            real mx = -std::numeric_limits<real>::infinity();
            for (int64_t k = 0; k < sp.n; ++k)
                mx = std::max(mx, xv[(o * sp.n + k) * sp.inner + i]);
            real denom = 0;
            for (int64_t k = 0; k < sp.n; ++k) {
                real e = std::exp(xv[(o * sp.n + k) * sp.inner + i] - mx);
                out[(o * sp.n + k) * sp.inner + i] = e;
                denom += e;
            }
            for (int64_t k = 0; k < sp.n; ++k) out[(o * sp.n + k) * sp.inner + i] /= denom;
        }
    }
    return make_op_result("softmax", x.shape(), std::move(out), {x}, [sp](Node& node) {
        if (!preq(node, 0)) return;
        auto& gx = pgrad(node, 0);
        const auto& y = node.value;
        const auto& g = node.grad;
        for (int64_t o = 0; o < sp.outer; ++o) {
            for (int64_t i = 0; i < sp.inner; ++i) {
                real dot = 0;
                for (int64_t k = 0; k < sp.n; ++k) {
                    size_t p = (o * sp.n + k) * sp.inner + i;
                    dot += g[p] * y[p];
                }
                for (int64_t k = 0; k < sp.n; ++k) {
                    size_t p = (o * sp.n + k) * sp.inner + i;
                    gx[p] += y[p] * (g[p] - dot);
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    int64_t m = a.dim(0), kk = a.dim(1), n = b.dim(1);
    std::vector<real> out(static_cast<size_t>(m * n), real(0));
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t k = 0; k < kk; ++k) {
            real aik = av[i * kk + k];
            if (aik == 0) continue;
            const real* brow = &bv[k * n];
            real* orow = &out[i * n];
            for (int64_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    return make_op_result("matmul", {m, n}, std::move(out), {a, b}, [m, kk, n](Node& node) {
        const auto& g = node.grad;
        const auto& av = pval(node, 0);
        const auto& bv = pval(node, 1);
        if (preq(node, 0)) {
            auto& ga = pgrad(node, 0);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j) {
                    real gij = g[i * n + j];
                    if (gij == 0) continue;
                    for (int64_t k = 0; k < kk; ++k) ga[i * kk + k] += gij * bv[k * n + j];
                }
        }
        if (preq(node, 1)) {
            auto& gb = pgrad(node, 1);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t k = 0; k < kk; ++k) {
                    real aik = av[i * kk + k];
                    if (aik == 0) continue;
                    for (int64_t j = 0; j < n; ++j) gb[k * n + j] += aik * g[i * n + j];
                }
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = matmul(x, w);
    return b.defined() ? add(y, b) : y;
}

// ---------------------------------------------------------------------------
// Spatial ops
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
    int64_t h, w, ci, co, kh, kw, oh, ow;
    int stride, pad;
    bool replicate;
};

ConvDims conv_dims(const char* op, const Tensor& x, const Tensor& k, bool depthwise, int stride,
                   PadMode mode, int pad) {
    if (x.ndim() != 4 || x.dim(0) != 1) throw ShapeError(std::string(op) + ": expects (1,H,W,C) input");
    ConvDims d{};
    d.h = x.dim(1);
    d.w = x.dim(2);
    d.ci = x.dim(3);
    if (depthwise) {
        if (k.ndim() != 3) throw ShapeError(std::string(op) + ": depthwise kernel must be (kh,kw,C)");
        d.kh = k.dim(0);
        d.kw = k.dim(1);
        d.co = d.ci;
        if (k.dim(2) != d.ci) throw ShapeError(std::string(op) + ": kernel channels != input channels");
    } else {
        if (k.ndim() != 4) throw ShapeError(std::string(op) + ": kernel must be (kh,kw,Cin,Cout)");
        d.kh = k.dim(0);
        d.kw = k.dim(1);
        if (k.dim(2) != d.ci) throw ShapeError(std::string(op) + ": kernel Cin != input channels");
        d.co = k.dim(3);
    }
    if (d.kh % 2 == 0 || d.kw % 2 == 0) throw ConfigError(std::string(op) + ": kernel extent must be odd");
    if (stride < 1) throw ConfigError(std::string(op) + ": stride must be >= 1");
    d.stride = stride;
    d.pad = pad < 0 ? static_cast<int>((d.kh - 1) / 2) : pad;
    d.replicate = mode == PadMode::kReplicate;
    d.oh = (d.h + 2 * d.pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * d.pad - d.kw) / stride + 1;
    if (d.oh < 1 || d.ow < 1) throw ShapeError(std::string(op) + ": kernel larger than padded input");
    return d;
}

// Shared conv worker; depthwise uses ci==co with per-channel taps.
Tensor conv_impl(const char* op, const Tensor& x, const Tensor& k, const Tensor& bias,
                 bool depthwise, int stride, PadMode mode, int pad) {
    ConvDims d = conv_dims(op, x, k, depthwise, stride, mode, pad);
    if (bias.defined() && bias.numel() != d.co)
        throw ShapeError(std::string(op) + ": bias length != output channels");

    const auto& xv = x.values();
    const auto& kv = k.values();
    std::vector<real> out(static_cast<size_t>(d.oh * d.ow * d.co), real(0));

    auto src = [&](int64_t iy, int64_t ix, int64_t c, bool& ok) -> int64_t {
        if (d.replicate) {
            iy = std::clamp<int64_t>(iy, 0, d.h - 1);
            ix = std::clamp<int64_t>(ix, 0, d.w - 1);
        } else if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) {
            ok = false;
            return 0;
        }
        ok = true;
        return (iy * d.w + ix) * d.ci + c;
    };

    for (int64_t oy = 0; oy < d.oh; ++oy)
        for (int64_t ox = 0; ox < d.ow; ++ox)
            for (int64_t co = 0; co < d.co; ++co) {
                real acc = bias.defined() ? bias.values()[co] : real(0);
                for (int64_t ky = 0; ky < d.kh; ++ky)
                    for (int64_t kx = 0; kx < d.kw; ++kx) {
                        int64_t iy = oy * d.stride + ky - d.pad;
                        int64_t ix = ox * d.stride + kx - d.pad;
                        if (depthwise) {
                            bool ok;
                            int64_t si = src(iy, ix, co, ok);
                            if (ok) acc += xv[si] * kv[(ky * d.kw + kx) * d.co + co];
                        } else {
                            for (int64_t ci = 0; ci < d.ci; ++ci) {
                                bool ok;
                                int64_t si = src(iy, ix, ci, ok);
                                if (ok) acc += xv[si] * kv[((ky * d.kw + kx) * d.ci + ci) * d.co + co];
                            }
                        }
                    }
                out[(oy * d.ow + ox) * d.co + co] = acc;
            }

    std::vector<Tensor> inputs{x, k};
    if (bias.defined()) inputs.push_back(bias);
    bool has_bias = bias.defined();
    return make_op_result(
        op, {1, d.oh, d.ow, d.co}, std::move(out), inputs, [d, depthwise, has_bias](Node& node) {
            const auto& g = node.grad;
            const auto& xv = pval(node, 0);
            const auto& kv = pval(node, 1);
            bool wx = preq(node, 0), wk = preq(node, 1);
            bool wb = has_bias && preq(node, 2);
            std::vector<real>* gx = wx ? &pgrad(node, 0) : nullptr;
            std::vector<real>* gk = wk ? &pgrad(node, 1) : nullptr;
            std::vector<real>* gb = wb ? &pgrad(node, 2) : nullptr;
            if (!wx && !wk && !wb) return;

            auto src = [&](int64_t iy, int64_t ix, int64_t c, bool& ok) -> int64_t {
                if (d.replicate) {
                    iy = std::clamp<int64_t>(iy, 0, d.h - 1);
                    ix = std::clamp<int64_t>(ix, 0, d.w - 1);
                } else if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) {
                    ok = false;
                    return 0;
                }
                ok = true;
                return (iy * d.w + ix) * d.ci + c;
            };

            for (int64_t oy = 0; oy < d.oh; ++oy)
                for (int64_t ox = 0; ox < d.ow; ++ox)
                    for (int64_t co = 0; co < d.co; ++co) {
                        real go = g[(oy * d.ow + ox) * d.co + co];
                        if (go == 0) continue;
                        if (wb) (*gb)[co] += go;
                        for (int64_t ky = 0; ky < d.kh; ++ky)
                            for (int64_t kx = 0; kx < d.kw; ++kx) {
                                int64_t iy = oy * d.stride + ky - d.pad;
                                int64_t ix = ox * d.stride + kx - d.pad;
                                if (depthwise) {
                                    bool ok;
                                    int64_t si = src(iy, ix, co, ok);
                                    if (!ok) continue;
                                    int64_t wi = (ky * d.kw + kx) * d.co + co;
                                    if (wk) (*gk)[wi] += go * xv[si];
                                    if (wx) (*gx)[si] += go * kv[wi];
                                } else {
                                    for (int64_t ci = 0; ci < d.ci; ++ci) {
                                        bool ok;
                                        int64_t si = src(iy, ix, ci, ok);
                                        if (!ok) continue;
                                        int64_t wi = ((ky * d.kw + kx) * d.ci + ci) * d.co + co;
                                        if (wk) (*gk)[wi] += go * xv[si];
                                        if (wx) (*gx)[si] += go * kv[wi];
                                    }
                                }
                            }
                    }
        });
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, PadMode mode,
              int pad) {
    return conv_impl("conv2d", x, w, bias, false, stride, mode, pad);
}

Tensor conv2d_depthwise(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
                        PadMode mode, int pad) {
    return conv_impl("conv2d_depthwise", x, w, bias, true, stride, mode, pad);
}

Tensor avg_pool2(const Tensor& x) {
    if (x.ndim() != 4 || x.dim(0) != 1) throw ShapeError("avg_pool2: expects (1,H,W,C)");
    int64_t h = x.dim(1), w = x.dim(2), c = x.dim(3);
    int64_t oh = h / 2, ow = w / 2;  // odd trailing row/col dropped
    if (oh < 1 || ow < 1) throw ShapeError("avg_pool2: input too small");
    const auto& xv = x.values();
    std::vector<real> out(static_cast<size_t>(oh * ow * c));
    for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox)
            for (int64_t ch = 0; ch < c; ++ch) {
                real acc = 0;
                for (int64_t dy = 0; dy < 2; ++dy)
                    for (int64_t dx = 0; dx < 2; ++dx)
                        acc += xv[((2 * oy + dy) * w + 2 * ox + dx) * c + ch];
                out[(oy * ow + ox) * c + ch] = acc * real(0.25);
            }
    return make_op_result("avg_pool2", {1, oh, ow, c}, std::move(out), {x}, [h, w, c, oh, ow](Node& node) {
        if (!preq(node, 0)) return;
        auto& gx = pgrad(node, 0);
        const auto& g = node.grad;
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox)
                for (int64_t ch = 0; ch < c; ++ch) {
                    real go = g[(oy * ow + ox) * c + ch] * real(0.25);
                    for (int64_t dy = 0; dy < 2; ++dy)
                        for (int64_t dx = 0; dx < 2; ++dx)
                            gx[((2 * oy + dy) * w + 2 * ox + dx) * c + ch] += go;
                }
    });
}

Tensor upsample_nearest2(const Tensor& x) {
    if (x.ndim() != 4 || x.dim(0) != 1) throw ShapeError("upsample_nearest2: expects (1,H,W,C)");
    return resize_nearest(x, x.dim(1) * 2, x.dim(2) * 2);
}

Tensor resize_nearest(const Tensor& x, int64_t out_h, int64_t out_w) {
    if (x.ndim() != 4 || x.dim(0) != 1) throw ShapeError("resize_nearest: expects (1,H,W,C)");
    if (out_h < 1 || out_w < 1) throw ShapeError("resize_nearest: output size must be positive");
    int64_t h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const auto& xv = x.values();
    std::vector<real> out(static_cast<size_t>(out_h * out_w * c));
    std::vector<int64_t> ymap(out_h), xmap(out_w);
    for (int64_t y = 0; y < out_h; ++y) ymap[y] = y * h / out_h;
    for (int64_t z = 0; z < out_w; ++z) xmap[z] = z * w / out_w;
    for (int64_t y = 0; y < out_h; ++y)
        for (int64_t z = 0; z < out_w; ++z)
            for (int64_t ch = 0; ch < c; ++ch)
                out[(y * out_w + z) * c + ch] = xv[(ymap[y] * w + xmap[z]) * c + ch];
    return make_op_result("resize_nearest", {1, out_h, out_w, c}, std::move(out), {x},
                          [ymap, xmap, out_h, out_w, w, c](Node& node) {
                              if (!preq(node, 0)) return;
                              auto& gx = pgrad(node, 0);
                              const auto& g = node.grad;
                              for (int64_t y = 0; y < out_h; ++y)
                                  for (int64_t z = 0; z < out_w; ++z)
                                      for (int64_t ch = 0; ch < c; ++ch)
                                          gx[(ymap[y] * w + xmap[z]) * c + ch] +=
                                              g[(y * out_w + z) * c + ch];
                          });
}

Tensor crop_border(const Tensor& x, int64_t border) {
    if (x.ndim() != 4 || x.dim(0) != 1) throw ShapeError("crop_border: expects (1,H,W,C)");
    int64_t h = x.dim(1), w = x.dim(2), c = x.dim(3);
    int64_t oh = h - 2 * border, ow = w - 2 * border;
    if (oh < 1 || ow < 1) throw ShapeError("crop_border: border too large");
    const auto& xv = x.values();
    std::vector<real> out(static_cast<size_t>(oh * ow * c));
    for (int64_t y = 0; y < oh; ++y)
        for (int64_t z = 0; z < ow; ++z)
            for (int64_t ch = 0; ch < c; ++ch)
                out[(y * ow + z) * c + ch] = xv[((y + border) * w + z + border) * c + ch];
    return make_op_result("crop_border", {1, oh, ow, c}, std::move(out), {x},
                          [oh, ow, w, c, border](Node& node) {
                              if (!preq(node, 0)) return;
                              auto& gx = pgrad(node, 0);
                              const auto& g = node.grad;
                              for (int64_t y = 0; y < oh; ++y)
                                  for (int64_t z = 0; z < ow; ++z)
                                      for (int64_t ch = 0; ch < c; ++ch)
                                          gx[((y + border) * w + z + border) * c + ch] +=
                                              g[(y * ow + z) * c + ch];
                          });
}

// ---------------------------------------------------------------------------
// Normalization / composite
// ---------------------------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
    if (eps <= 0) throw ConfigError("layer_norm: eps must be positive");
    int64_t c = x.shape().back();
    if (gamma.numel() != c || beta.numel() != c)
        throw ShapeError("layer_norm: gamma/beta length != channel width");
    Tensor mu = mean_axis(x, -1, true);
    Tensor xc = sub(x, mu);
    Tensor var = mean_axis(square(xc), -1, true);
    Tensor norm = div(xc, sqrt(add_scalar(var, eps)));
    return add(mul(norm, gamma), beta);
}

Tensor instance_norm(const Tensor& x, real eps) {
    if (x.ndim() != 4 || x.dim(0) != 1) throw ShapeError("instance_norm: expects (1,H,W,C)");
    Tensor mu = mean_axis(mean_axis(x, 1, true), 2, true);
    Tensor xc = sub(x, mu);
    Tensor var = mean_axis(mean_axis(square(xc), 1, true), 2, true);
    return div(xc, sqrt(add_scalar(var, eps)));
}

Tensor mlp(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
           const Tensor& b2) {
    return linear(silu(linear(x, w1, b1)), w2, b2);
}

}  // namespace colormamba
