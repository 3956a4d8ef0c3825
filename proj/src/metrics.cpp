#include "colormamba/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace colormamba {
namespace metrics {

namespace {

void check_same(const char* op, const Tensor& x, const Tensor& y) {
    if (x.shape() != y.shape()) throw ShapeError(std::string(op) + ": shape mismatch");
}

double mse_value(const Tensor& x, const Tensor& y) {
    const auto& a = x.values();
    const auto& b = y.values();
    double acc = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = double(a[i]) - double(b[i]);
        acc += d * d;
    }
    return acc / double(a.size());
}

struct GridView {
    int64_t h, w, c;
};

GridView grid_view(const char* op, const Tensor& t) {
    if (t.ndim() == 2) return {t.dim(0), t.dim(1), 1};
    if (t.ndim() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
    if (t.ndim() == 4 && t.dim(0) == 1) return {t.dim(1), t.dim(2), t.dim(3)};
    throw ShapeError(std::string(op) + ": expects (H,W), (H,W,C) or (1,H,W,C)");
}

}  // namespace

double psnr(const Tensor& x, const Tensor& y, double peak) {
    check_same("psnr", x, y);
    double mse = mse_value(x, y);
    if (mse <= 0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Tensor& x, const Tensor& y) {
    check_same("ssim", x, y);
    GridView g = grid_view("ssim", x);
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    if (g.h < kWin || g.w < kWin)
        throw ShapeError("ssim: image smaller than the 11x11 window");
    double taps[kWin];
    double sum = 0;
    for (int i = 0; i < kWin; ++i) {
        double d = i - (kWin - 1) / 2.0;
        taps[i] = std::exp(-d * d / (2 * kSigma * kSigma));
        sum += taps[i];
    }
    for (double& t : taps) t /= sum;

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const auto& xv = x.values();
    const auto& yv = y.values();
    auto px = [&](const std::vector<real>& v, int64_t i, int64_t j, int64_t ch) {
        return double(v[(i * g.w + j) * g.c + ch]);
    };

    double total = 0;
    int64_t count = 0;
    for (int64_t ch = 0; ch < g.c; ++ch)
        for (int64_t i = 0; i + kWin <= g.h; ++i)
            for (int64_t j = 0; j + kWin <= g.w; ++j) {
                double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
                for (int a = 0; a < kWin; ++a)
                    for (int b = 0; b < kWin; ++b) {
                        double wgt = taps[a] * taps[b];
                        double vx = px(xv, i + a, j + b, ch);
                        double vy = px(yv, i + a, j + b, ch);
                        mx += wgt * vx;
                        my += wgt * vy;
                        mxx += wgt * vx * vx;
                        myy += wgt * vy * vy;
                        mxy += wgt * vx * vy;
                    }
                double sx = mxx - mx * mx, sy = myy - my * my, sxy = mxy - mx * my;
                double val = ((2 * mx * my + c1) * (2 * sxy + c2)) /
                             ((mx * mx + my * my + c1) * (sx + sy + c2));
                total += val;
                ++count;
            }
    return total / double(count);
}

double ae(const Tensor& x, const Tensor& y) {
    check_same("ae", x, y);
    const auto& a = x.values();
    const auto& b = y.values();
    double acc = 0;
    for (size_t i = 0; i < a.size(); ++i) acc += std::abs(double(a[i]) - double(b[i]));
    return acc / double(a.size());
}

double sam(const Tensor& x, const Tensor& y, int64_t* skipped) {
    check_same("sam", x, y);
    GridView g = grid_view("sam", x);
    const auto& xv = x.values();
    const auto& yv = y.values();
    double total = 0;
    int64_t used = 0, skip = 0;
    for (int64_t p = 0; p < g.h * g.w; ++p) {
        double dot = 0, nx = 0, ny = 0;
        for (int64_t ch = 0; ch < g.c; ++ch) {
            double a = double(xv[p * g.c + ch]);
            double b = double(yv[p * g.c + ch]);
            dot += a * b;
            nx += a * a;
            ny += b * b;
        }
        if (nx <= 0 || ny <= 0) {
            ++skip;
            continue;
        }
        double cosv = std::clamp(dot / std::sqrt(nx * ny), -1.0, 1.0);
        total += std::acos(cosv);
        ++used;
    }
    if (skipped) *skipped = skip;
    return used > 0 ? total / double(used) : 0.0;
}

double ergas(const Tensor& x, const Tensor& y, double ratio, int64_t* skipped) {
    check_same("ergas", x, y);
    GridView g = grid_view("ergas", x);
    const auto& xv = x.values();
    const auto& yv = y.values();
    double acc = 0;
    int64_t used = 0, skip = 0;
    int64_t pixels = g.h * g.w;
    for (int64_t ch = 0; ch < g.c; ++ch) {
        double mu = 0, se = 0;
        for (int64_t p = 0; p < pixels; ++p) {
            double a = double(xv[p * g.c + ch]);
            double b = double(yv[p * g.c + ch]);
            mu += b;
            se += (a - b) * (a - b);
        }
        mu /= double(pixels);
        if (std::abs(mu) < 1e-12) {
            ++skip;
            continue;
        }
        double rmse = std::sqrt(se / double(pixels));
        acc += (rmse / mu) * (rmse / mu);
        ++used;
    }
    if (skipped) *skipped = skip;
    return used > 0 ? 100.0 * ratio * std::sqrt(acc / double(used)) : 0.0;
}

MetricReport evaluate_pair(const Tensor& pred, const Tensor& ref) {
    MetricReport r;
    r.psnr = psnr(pred, ref);
    r.ssim = ssim(pred, ref);
    r.ae = ae(pred, ref);
    r.sam = sam(pred, ref);
    r.ergas = ergas(pred, ref);
    return r;
}

std::string format_table(const std::vector<std::pair<std::string, MetricReport>>& rows, bool csv,
                         double ae_scale) {
    MetricReport mean;
    for (const auto& [name, r] : rows) {
        mean.psnr += r.psnr;
        mean.ssim += r.ssim;
        mean.ae += r.ae;
        mean.sam += r.sam;
        mean.ergas += r.ergas;
    }
    if (!rows.empty()) {
        double n = double(rows.size());
        mean.psnr /= n;
        mean.ssim /= n;
        mean.ae /= n;
        mean.sam /= n;
        mean.ergas /= n;
    }

    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    auto emit = [&](const std::string& name, const MetricReport& r) {
        if (csv) {
            os << name << "," << r.psnr << "," << r.ssim << "," << r.ae * ae_scale << "," << r.sam
               << "," << r.ergas << "\n";
        } else {
            os << std::left << std::setw(24) << name << std::right << std::setw(12) << r.psnr
               << std::setw(12) << r.ssim << std::setw(12) << r.ae * ae_scale << std::setw(12)
               << r.sam << std::setw(12) << r.ergas << "\n";
        }
    };
    if (csv) {
        os << "name,PSNR,SSIM,AE,SAM,ERGAS\n";
    } else {
        os << std::left << std::setw(24) << "name" << std::right << std::setw(12) << "PSNR"
           << std::setw(12) << "SSIM" << std::setw(12) << "AE" << std::setw(12) << "SAM"
           << std::setw(12) << "ERGAS" << "\n";
    }
    for (const auto& [name, r] : rows) emit(name, r);
    emit("mean", mean);
    return os.str();
}

}  // namespace metrics
}  // namespace colormamba
