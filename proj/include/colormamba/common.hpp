#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace colormamba {

// 64-bit in test builds; COLORMAMBA_REAL_FLOAT switches fast builds to 32-bit.
#ifdef COLORMAMBA_REAL_FLOAT
using real = float;
#else
using real = double;
#endif

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dimension / contract violations between tensors.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Bad module configuration (even kernels, zero agents, ...).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf escaped an operation, or a domain precondition failed.
struct NumericsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse (non-scalar loss, backward without a tape, ...).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Every public op validates its output unless explicitly disabled.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();
void check_finite(const std::vector<real>& data, const char* op_name);

// Autodiff recording switch, thread-local. Inference paths disable it.
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Deterministic RNG used for initialization, sampling and augmentation.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    real uniform(real lo, real hi) {
        std::uniform_real_distribution<real> d(lo, hi);
        return d(engine_);
    }
    real normal(real mean, real stddev) {
        std::normal_distribution<real> d(mean, stddev);
        return d(engine_);
    }
    int64_t uniform_int(int64_t n) {  // [0, n)
        std::uniform_int_distribution<int64_t> d(0, n - 1);
        return d(engine_);
    }
    bool bernoulli(double p) {
        std::bernoulli_distribution d(p);
        return d(engine_);
    }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace colormamba
