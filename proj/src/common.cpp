#include "colormamba/common.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace colormamba {

int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

namespace {
std::atomic<bool> g_finite_checks{true};
thread_local bool t_grad_enabled = true;
}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks_enabled() { return g_finite_checks.load(); }

void check_finite(const std::vector<real>& data, const char* op_name) {
    if (!g_finite_checks.load()) return;
    for (real v : data) {
        if (!std::isfinite(v)) {
            throw NumericsError(std::string("non-finite value produced by ") + op_name);
        }
    }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

}  // namespace colormamba
