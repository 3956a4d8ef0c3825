// Python bindings for the core operations: scan kernels, color conversions,
// the 2D selective scan, image quality metrics and checkpoint inference.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "colormamba/checkpoint.hpp"
#include "colormamba/config.hpp"
#include "colormamba/color.hpp"
#include "colormamba/losses.hpp"
#include "colormamba/metrics.hpp"
#include "colormamba/networks.hpp"
#include "colormamba/ssm.hpp"

namespace py = pybind11;
using namespace colormamba;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const Array& arr) {
    Shape shape(arr.ndim());
    for (py::ssize_t d = 0; d < arr.ndim(); ++d) shape[d] = arr.shape(d);
    std::vector<real> data(arr.data(), arr.data() + arr.size());
    return Tensor::from_data(std::move(shape), std::move(data));
}

Array array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    double* dst = out.mutable_data();
    for (int64_t i = 0; i < t.numel(); ++i) dst[i] = double(t.values()[i]);
    return out;
}

std::pair<Array, Array> discretize_py(const Array& a, const Array& b, double delta) {
    SsmParams p;
    p.a.assign(a.data(), a.data() + a.size());
    p.b.assign(b.data(), b.data() + b.size());
    p.c.assign(p.a.size(), 0);
    p.delta = real(delta);
    DiscretizedSsm d = discretize(p);
    Array a_bar(py::ssize_t(d.a_bar.size())), b_bar(py::ssize_t(d.b_bar.size()));
    std::copy(d.a_bar.begin(), d.a_bar.end(), a_bar.mutable_data());
    std::copy(d.b_bar.begin(), d.b_bar.end(), b_bar.mutable_data());
    return {a_bar, b_bar};
}

Array scan_py(const Array& a, const Array& bx, bool parallel) {
    if (a.ndim() != 2 || bx.ndim() != 2) throw std::invalid_argument("expected (L,N) arrays");
    int64_t len = a.shape(0), n = a.shape(1);
    if (bx.shape(0) != len || bx.shape(1) != n)
        throw std::invalid_argument("a and bx shapes differ");
    std::vector<real> av(a.data(), a.data() + a.size());
    std::vector<real> bv(bx.data(), bx.data() + bx.size());
    std::vector<real> h(av.size());
    if (parallel) {
        kernels::scan_h_parallel(av.data(), bv.data(), len, n, h.data());
    } else {
        kernels::scan_h_sequential(av.data(), bv.data(), len, n, h.data());
    }
    Array out({len, n});
    std::copy(h.begin(), h.end(), out.mutable_data());
    return out;
}

Array scan2d_py(const Array& feature_map, int64_t state_size, uint64_t seed, bool parallel) {
    Tensor f = tensor_from_array(feature_map);
    if (f.ndim() == 3) f = reshape(f, {1, f.dim(0), f.dim(1), f.dim(2)});
    Rng rng(seed);
    Scan2d scan = Scan2d::init(f.dim(3), state_size, rng, true);
    NoGradGuard ng;
    return array_from_tensor(
        scan.forward(f, parallel ? ScanKind::kParallel : ScanKind::kSequential));
}

Array colorize_py(const std::string& checkpoint_path, const Array& nir,
                  const std::map<std::string, std::string>& config_kv) {
    std::map<std::string, std::string> kv(config_kv.begin(), config_kv.end());
    RunConfig cfg = config_from_key_values(kv);
    Tensor x = tensor_from_array(nir);
    if (x.ndim() == 2) x = reshape(x, {1, x.dim(0), x.dim(1), 1});
    Rng rng(cfg.train.seed);
    GeneratorB gb = GeneratorB::init(cfg.model, rng);
    GeneratorA ga = GeneratorA::init(cfg.model, rng);
    std::vector<ArrayEntry> entries = read_array_container(checkpoint_path);
    load_params_from_entries(gb.named_params("gb"), entries);
    load_params_from_entries(ga.named_params("ga"), entries);
    NoGradGuard ng;
    GeneratorOutputs outs = generator_forward(ga, gb, x);
    return array_from_tensor(reshape(outs.y_rgb, {x.dim(1), x.dim(2), 3}));
}

double ms_ssim_py(const Array& x, const Array& y, int scales, int window) {
    Tensor tx = tensor_from_array(x);
    Tensor ty = tensor_from_array(y);
    if (tx.ndim() == 3) {
        tx = reshape(tx, {1, tx.dim(0), tx.dim(1), tx.dim(2)});
        ty = reshape(ty, {1, ty.dim(0), ty.dim(1), ty.dim(2)});
    }
    NoGradGuard ng;
    return double(ms_ssim(tx, ty, scales, window).item());
}

}  // namespace

PYBIND11_MODULE(_colormamba, m) {
    m.doc() = "NIR-to-RGB spectral translation core operations";
    m.attr("__version__") = "0.1.0";

    m.def("discretize", &discretize_py, py::arg("a"), py::arg("b"), py::arg("delta"),
          "Zero-order-hold discretization of diagonal state-space weights; "
          "returns (a_bar, b_bar).");
    m.def("scan_sequential", [](const Array& a, const Array& bx) { return scan_py(a, bx, false); },
          py::arg("a"), py::arg("bx"),
          "Recurrence h_k = a_k h_{k-1} + bx_k over (L,N) coefficients.");
    m.def("scan_parallel", [](const Array& a, const Array& bx) { return scan_py(a, bx, true); },
          py::arg("a"), py::arg("bx"), "Blelloch-scan form of scan_sequential.");
    m.def("scan2d", &scan2d_py, py::arg("feature_map"), py::arg("state_size") = 4,
          py::arg("seed") = 0, py::arg("parallel") = false,
          "Padded four-direction selective scan of an (H,W,C) map with "
          "randomly initialized weights.");

    m.def("rgb_to_hsv", [](const Array& img) { return array_from_tensor(rgb_to_hsv(tensor_from_array(img))); },
          py::arg("img"));
    m.def("hsv_to_rgb", [](const Array& img) { return array_from_tensor(hsv_to_rgb(tensor_from_array(img))); },
          py::arg("img"));
    m.def("laplacian_edge",
          [](const Array& img) { return array_from_tensor(laplacian_edge(tensor_from_array(img))); },
          py::arg("img"), "3x3 Laplacian with replicate padding.");

    m.def("psnr", [](const Array& x, const Array& y) {
        return metrics::psnr(tensor_from_array(x), tensor_from_array(y));
    });
    m.def("ssim", [](const Array& x, const Array& y) {
        return metrics::ssim(tensor_from_array(x), tensor_from_array(y));
    });
    m.def("ae", [](const Array& x, const Array& y) {
        return metrics::ae(tensor_from_array(x), tensor_from_array(y));
    });
    m.def("sam", [](const Array& x, const Array& y) {
        return metrics::sam(tensor_from_array(x), tensor_from_array(y));
    });
    m.def("ergas", [](const Array& x, const Array& y) {
        return metrics::ergas(tensor_from_array(x), tensor_from_array(y));
    });
    m.def("ms_ssim", &ms_ssim_py, py::arg("x"), py::arg("y"), py::arg("scales") = 1,
          py::arg("window") = 11);
    m.def("mse", [](const Array& x, const Array& y) {
        NoGradGuard ng;
        return double(mse_loss(tensor_from_array(x), tensor_from_array(y)).item());
    });

    m.def("colorize", &colorize_py, py::arg("checkpoint"), py::arg("nir"),
          py::arg("config") = std::map<std::string, std::string>{},
          "Run the full generator pipeline on an (H,W) NIR array.");
}
