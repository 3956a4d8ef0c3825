#include "colormamba/scan2d.hpp"

namespace colormamba {

std::array<std::vector<int64_t>, 4> direction_index_maps(int64_t h_pad, int64_t w_pad) {
    int64_t len = h_pad * w_pad;
    std::array<std::vector<int64_t>, 4> maps;
    for (auto& m : maps) m.resize(static_cast<size_t>(len));
    for (int64_t p = 0; p < len; ++p) maps[0][p] = p;  // row-major, left-right top-down
    int64_t p = 0;
    for (int64_t x = 0; x < w_pad; ++x)  // column-major, top-down left-right
        for (int64_t y = 0; y < h_pad; ++y) maps[1][p++] = y * w_pad + x;
    for (int64_t q = 0; q < len; ++q) {
        maps[2][q] = maps[0][len - 1 - q];
        maps[3][q] = maps[1][len - 1 - q];
    }
    return maps;
}

PaddedGrid pad_with_tokens(const Tensor& f, const Tensor& pad_token) {
    if (f.ndim() != 4 || f.dim(0) != 1) throw ShapeError("pad_with_tokens: expects (1,H,W,C)");
    int64_t h = f.dim(1), w = f.dim(2), c = f.dim(3);
    if (h < 1 || w < 1) throw ShapeError("pad_with_tokens: empty feature map");
    if (pad_token.numel() != c) throw ShapeError("pad_with_tokens: token width != channels");
    int64_t hp = h + 2, wp = w + 2;
    const auto& fv = f.values();
    const auto& tv = pad_token.values();
    std::vector<real> out(static_cast<size_t>(hp * wp * c));
    for (int64_t y = 0; y < hp; ++y)
        for (int64_t x = 0; x < wp; ++x) {
            bool border = y == 0 || x == 0 || y == hp - 1 || x == wp - 1;
            for (int64_t ch = 0; ch < c; ++ch)
                out[(y * wp + x) * c + ch] =
                    border ? tv[ch] : fv[((y - 1) * w + x - 1) * c + ch];
        }
    Tensor grid = make_op_result(
        "pad_with_tokens", {1, hp, wp, c}, std::move(out), {f, pad_token},
        [h, w, c, hp, wp](detail::Node& node) {
            const auto& g = node.grad;
            bool wf = node.parents[0]->requires_grad;
            bool wt = node.parents[1]->requires_grad;
            if (wf) node.parents[0]->ensure_grad();
            if (wt) node.parents[1]->ensure_grad();
            for (int64_t y = 0; y < hp; ++y)
                for (int64_t x = 0; x < wp; ++x) {
                    bool border = y == 0 || x == 0 || y == hp - 1 || x == wp - 1;
                    for (int64_t ch = 0; ch < c; ++ch) {
                        real gv = g[(y * wp + x) * c + ch];
                        if (border) {
                            if (wt) node.parents[1]->grad[ch] += gv;
                        } else if (wf) {
                            node.parents[0]->grad[((y - 1) * w + x - 1) * c + ch] += gv;
                        }
                    }
                }
        });
    return PaddedGrid{grid, pad_token};
}

ScanBundle unfold_four_directions(const PaddedGrid& pg) {
    int64_t hp = pg.grid.dim(1), wp = pg.grid.dim(2), c = pg.grid.dim(3);
    ScanBundle bundle;
    bundle.h_pad = hp;
    bundle.w_pad = wp;
    bundle.index_maps = direction_index_maps(hp, wp);
    Tensor flat = reshape(pg.grid, {hp * wp, c});
    for (int d = 0; d < 4; ++d) bundle.sequences[d] = gather_rows(flat, bundle.index_maps[d]);
    return bundle;
}

Tensor scan_and_merge(const ScanBundle& bundle, const std::array<SelectiveSsm, 4>& ssm,
                      ScanKind kind) {
    int64_t hp = bundle.h_pad, wp = bundle.w_pad;
    int64_t len = hp * wp;
    Tensor merged;
    for (int d = 0; d < 4; ++d) {
        Tensor y = ssm[d].forward(bundle.sequences[d], kind);
        // invert the bijection: fold sequence order back to grid order
        std::vector<int64_t> inverse(static_cast<size_t>(len));
        for (int64_t p = 0; p < len; ++p) inverse[bundle.index_maps[d][p]] = p;
        Tensor folded = gather_rows(y, inverse);
        merged = d == 0 ? folded : add(merged, folded);
    }
    int64_t c = merged.dim(1);
    return crop_border(reshape(merged, {1, hp, wp, c}), 1);
}

Scan2d Scan2d::init(int64_t channels, int64_t state_size, Rng& rng, bool learnable_padding) {
    Scan2d s;
    s.learnable_padding = learnable_padding;
    if (learnable_padding) {
        s.pad_token = Tensor::normal({channels}, rng, 0, real(0.02)).set_requires_grad(true);
    } else {
        s.pad_token = Tensor::zeros({channels});  // plain zero padding, frozen
    }
    for (int d = 0; d < 4; ++d) s.directions[d] = SelectiveSsm::init(channels, state_size, rng);
    return s;
}

Tensor Scan2d::forward(const Tensor& f, ScanKind kind) const {
    PaddedGrid pg = pad_with_tokens(f, pad_token);
    ScanBundle bundle = unfold_four_directions(pg);
    return scan_and_merge(bundle, directions, kind);
}

std::vector<std::pair<std::string, Tensor>> Scan2d::named_params(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    if (learnable_padding) out.emplace_back(prefix + ".pad_token", pad_token);
    for (int d = 0; d < 4; ++d) {
        auto sub = directions[d].named_params(prefix + ".dir" + std::to_string(d));
        out.insert(out.end(), sub.begin(), sub.end());
    }
    return out;
}

}  // namespace colormamba
