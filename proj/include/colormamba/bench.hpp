#pragma once

#include "colormamba/ssm.hpp"

namespace colormamba {
namespace bench {

struct Row {
    std::string kernel;
    int64_t len = 0;
    int64_t state = 0;
    int64_t batch = 0;
    double seconds = 0;          // median per run
    double elems_per_sec = 0;    // len*state*batch / seconds
};

// Times the sequential and parallel scan kernels on random stable
// coefficients. Equality of the two paths is asserted before timing.
std::vector<Row> scan_kernels(const std::vector<int64_t>& lens, int64_t state, int64_t batch,
                              uint64_t seed);

// Times the full 2D scan module (pad + four directions + merge).
std::vector<Row> scan2d(const std::vector<std::array<int64_t, 3>>& hwn, uint64_t seed);

std::string format_table(const std::vector<Row>& rows);

// sequential-kernel runtime ratio t(len_hi)/t(len_lo), for scaling checks
double sequential_runtime_ratio(int64_t len_lo, int64_t len_hi, int64_t state, uint64_t seed);

}  // namespace bench
}  // namespace colormamba
