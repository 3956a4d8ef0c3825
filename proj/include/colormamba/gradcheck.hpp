#pragma once

#include <functional>

#include "colormamba/tensor.hpp"

namespace colormamba {
namespace gradcheck {

// Central finite differences (default h=1e-5) against the recorded backward
// rules, over every element of every leaf. Returns the worst relative error
// |analytic - fd| / max(|analytic|, |fd|, 0.01).
double max_rel_error(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& leaves,
                     real h = real(1e-5), bool inject_fault = false);

struct BlockResult {
    std::string block;
    double max_rel_err = 0;
    bool pass = false;
};

std::vector<std::string> suite_blocks();

// fault_block, when non-empty, corrupts that block's analytic gradient so
// the checker's failure path can be exercised.
BlockResult check_block(const std::string& name, uint64_t seed, double tolerance,
                        bool inject_fault);
std::vector<BlockResult> run_suite(uint64_t seed, double tolerance = 1e-4,
                                   const std::string& fault_block = "");

std::string format_results(const std::vector<BlockResult>& results);
bool all_pass(const std::vector<BlockResult>& results);

}  // namespace gradcheck
}  // namespace colormamba
