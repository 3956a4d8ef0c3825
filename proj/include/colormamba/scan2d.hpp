#pragma once

#include <array>

#include "colormamba/ssm.hpp"

namespace colormamba {

// Feature map with a one-pixel learnable border around the interior.
struct PaddedGrid {
    Tensor grid;       // (1, H+2, W+2, C)
    Tensor pad_token;  // (C), broadcast over the border
    std::pair<int64_t, int64_t> interior_origin{1, 1};
};

// Four direction-ordered views of the padded grid. index_maps[d][p] is the
// flat padded-grid position visited at sequence step p; each map is a
// bijection over all (H+2)(W+2) positions.
struct ScanBundle {
    std::array<Tensor, 4> sequences;  // each (L, C), L = (H+2)(W+2)
    std::array<std::vector<int64_t>, 4> index_maps;
    int64_t h_pad = 0, w_pad = 0;
};

// Direction order: 0 row-major left-right, 1 column-major top-down,
// 2 reverse of 0 (right-left), 3 reverse of 1 (down-top).
std::array<std::vector<int64_t>, 4> direction_index_maps(int64_t h_pad, int64_t w_pad);

PaddedGrid pad_with_tokens(const Tensor& f, const Tensor& pad_token);

ScanBundle unfold_four_directions(const PaddedGrid& pg);

// Runs one selective scan per direction, folds the outputs back onto the
// padded grid, sums them in direction order and crops the border off.
Tensor scan_and_merge(const ScanBundle& bundle, const std::array<SelectiveSsm, 4>& ssm,
                      ScanKind kind = ScanKind::kSequential);

// One 2D-SSM instance: a shared border token plus independent per-direction
// scan weights.
struct Scan2d {
    Tensor pad_token;  // (C)
    std::array<SelectiveSsm, 4> directions;
    bool learnable_padding = true;

    static Scan2d init(int64_t channels, int64_t state_size, Rng& rng,
                       bool learnable_padding = true);
    Tensor forward(const Tensor& f, ScanKind kind = ScanKind::kSequential) const;
    std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix) const;
};

}  // namespace colormamba
