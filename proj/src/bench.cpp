#include "colormamba/bench.hpp"

#include "colormamba/scan2d.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace colormamba {
namespace bench {

namespace {

using Clock = std::chrono::steady_clock;

struct Instance {
    std::vector<real> a, bx;
};

Instance random_instance(int64_t len, int64_t state, Rng& rng) {
    Instance inst;
    inst.a.resize(static_cast<size_t>(len * state));
    inst.bx.resize(static_cast<size_t>(len * state));
    for (auto& v : inst.a) v = rng.uniform(real(0.1), real(0.99));  // stable decay
    for (auto& v : inst.bx) v = rng.normal(0, 1);
    return inst;
}

// median of `reps` timings of fn(), each run `iters` times
double time_median(int reps, int iters, const std::function<void()>& fn) {
    std::vector<double> times;
    fn();  // warmup
    for (int r = 0; r < reps; ++r) {
        auto t0 = Clock::now();
        for (int i = 0; i < iters; ++i) fn();
        auto t1 = Clock::now();
        times.push_back(std::chrono::duration<double>(t1 - t0).count() / iters);
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

int iters_for(int64_t work) {
    // aim for ~20ms per reading
    int64_t it = 4'000'000 / std::max<int64_t>(work, 1);
    return static_cast<int>(std::clamp<int64_t>(it, 1, 2000));
}

}  // namespace

std::vector<Row> scan_kernels(const std::vector<int64_t>& lens, int64_t state, int64_t batch,
                              uint64_t seed) {
    Rng rng(seed);
    std::vector<Row> rows;
    for (int64_t len : lens) {
        std::vector<Instance> insts;
        for (int64_t b = 0; b < batch; ++b) insts.push_back(random_instance(len, state, rng));
        std::vector<real> h_seq(static_cast<size_t>(len * state));
        std::vector<real> h_par(static_cast<size_t>(len * state));

        // guard: a broken kernel must not be benchmarked
        kernels::scan_h_sequential(insts[0].a.data(), insts[0].bx.data(), len, state,
                                   h_seq.data());
        kernels::scan_h_parallel(insts[0].a.data(), insts[0].bx.data(), len, state, h_par.data());
        for (size_t i = 0; i < h_seq.size(); ++i) {
            real ref = std::max(real(1), std::abs(h_seq[i]));
            if (std::abs(h_seq[i] - h_par[i]) / ref > real(1e-9))
                throw NumericsError("bench: parallel scan disagrees with sequential scan");
        }

        int iters = iters_for(len * state * batch);
        double t_seq = time_median(5, iters, [&] {
            for (auto& inst : insts)
                kernels::scan_h_sequential(inst.a.data(), inst.bx.data(), len, state,
                                           h_seq.data());
        });
        double t_par = time_median(5, iters, [&] {
            for (auto& inst : insts)
                kernels::scan_h_parallel(inst.a.data(), inst.bx.data(), len, state, h_par.data());
        });
        double work = double(len * state * batch);
        rows.push_back({"sequential", len, state, batch, t_seq, work / t_seq});
        rows.push_back({"parallel", len, state, batch, t_par, work / t_par});
    }
    return rows;
}

std::vector<Row> scan2d(const std::vector<std::array<int64_t, 3>>& hwn, uint64_t seed) {
    std::vector<Row> rows;
    for (const auto& [h, w, n] : hwn) {
        Rng rng(seed);
        Scan2d scan = Scan2d::init(n, 4, rng, true);
        Tensor f = Tensor::uniform({1, h, w, n}, rng, 0, 1);
        NoGradGuard ng;
        int iters = iters_for(h * w * n * 64);
        double t = time_median(3, std::max(1, iters), [&] { scan.forward(f); });
        double work = double((h + 2) * (w + 2) * n * 4);
        rows.push_back({"scan2d", h * w, n, 1, t, work / t});
    }
    return rows;
}

double sequential_runtime_ratio(int64_t len_lo, int64_t len_hi, int64_t state, uint64_t seed) {
    Rng rng(seed);
    Instance lo = random_instance(len_lo, state, rng);
    Instance hi = random_instance(len_hi, state, rng);
    std::vector<real> h_lo(static_cast<size_t>(len_lo * state));
    std::vector<real> h_hi(static_cast<size_t>(len_hi * state));
    int iters_lo = iters_for(len_lo * state);
    int iters_hi = iters_for(len_hi * state);
    double t_lo = time_median(9, iters_lo, [&] {
        kernels::scan_h_sequential(lo.a.data(), lo.bx.data(), len_lo, state, h_lo.data());
    });
    double t_hi = time_median(9, iters_hi, [&] {
        kernels::scan_h_sequential(hi.a.data(), hi.bx.data(), len_hi, state, h_hi.data());
    });
    return t_hi / t_lo;
}

std::string format_table(const std::vector<Row>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(12) << "kernel" << std::right << std::setw(10) << "L"
       << std::setw(6) << "N" << std::setw(8) << "batch" << std::setw(14) << "seconds"
       << std::setw(16) << "elems/s" << "\n";
    os << std::scientific << std::setprecision(3);
    for (const Row& r : rows) {
        os << std::left << std::setw(12) << r.kernel << std::right << std::setw(10) << r.len
           << std::setw(6) << r.state << std::setw(8) << r.batch << std::setw(14) << r.seconds
           << std::setw(16) << r.elems_per_sec << "\n";
    }
    return os.str();
}

}  // namespace bench
}  // namespace colormamba
