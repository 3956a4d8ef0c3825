#pragma once

#include "colormamba/tensor.hpp"

namespace colormamba {
namespace metrics {

// Per-pair quality report, Table-style column order PSNR SSIM AE SAM ERGAS.
struct MetricReport {
    double psnr = 0;
    double ssim = 0;
    double ae = 0;
    double sam = 0;
    double ergas = 0;
};

inline constexpr double kPsnrCap = 100.0;

// 10*log10(peak^2/MSE), capped at 100 dB.
double psnr(const Tensor& x, const Tensor& y, double peak = 1.0);

// Single-scale SSIM, 11x11 Gaussian sigma 1.5, k1=0.01 k2=0.03, valid
// windows only, channels averaged.
double ssim(const Tensor& x, const Tensor& y);

// Mean absolute error on the raw [0,1] values.
double ae(const Tensor& x, const Tensor& y);

// Mean per-pixel spectral angle in radians; zero vectors are skipped and
// counted.
double sam(const Tensor& x, const Tensor& y, int64_t* skipped = nullptr);

// 100*ratio*sqrt(mean_b (RMSE_b / mu_b)^2), mu from the reference y;
// zero-mean bands are skipped and counted.
double ergas(const Tensor& x, const Tensor& y, double ratio = 1.0, int64_t* skipped = nullptr);

MetricReport evaluate_pair(const Tensor& pred, const Tensor& ref);

// One row per image plus a trailing mean row. ae_scale rescales the AE
// column (the raw [0,1] value is canonical).
std::string format_table(const std::vector<std::pair<std::string, MetricReport>>& rows, bool csv,
                         double ae_scale = 1.0);

}  // namespace metrics
}  // namespace colormamba
