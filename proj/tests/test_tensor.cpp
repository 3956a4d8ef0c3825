#include <doctest.h>

#include <cstring>

#include "colormamba/ops.hpp"
#include "test_support.hpp"

using namespace colormamba;
using testsupport::fd_max_rel_error;

TEST_CASE("matmul identity and hand-checked products") {
    Rng rng(1);
    Tensor m = Tensor::uniform({3, 3}, rng, -2, 2);
    Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor prod = matmul(eye, m);
    for (int64_t i = 0; i < 9; ++i) CHECK(prod.values()[i] == doctest::Approx(m.values()[i]));

    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_data({2, 1}, {0, 1});
    Tensor c = matmul(a, b);
    CHECK(c.at({0, 0}) == doctest::Approx(2));
    CHECK(c.at({1, 0}) == doctest::Approx(4));

    CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("matmul gradients match finite differences") {
    Rng rng(2);
    Tensor a = Tensor::uniform({5, 7}, rng, -1, 1).set_requires_grad(true);
    Tensor b = Tensor::uniform({7, 3}, rng, -1, 1).set_requires_grad(true);
    Tensor r = Tensor::uniform({5, 3}, rng, -1, 1);
    auto fn = [&] { return sum_all(mul(matmul(a, b), r)); };
    CHECK(fd_max_rel_error(fn, {a, b}) < 1e-6);
}

TEST_CASE("conv2d constant invariance with replicate padding") {
    Tensor x = Tensor::full({1, 5, 5, 1}, real(0.7));
    Tensor k = Tensor::full({3, 3, 1, 1}, real(1) / 9);
    Tensor y = conv2d(x, k, Tensor(), 1, PadMode::kReplicate);
    for (real v : y.values()) CHECK(v == doctest::Approx(0.7));
}

TEST_CASE("conv2d impulse response reproduces the kernel") {
    std::vector<real> xv(49, 0);
    xv[(3 * 7 + 3)] = 1;  // center of 7x7
    Tensor x = Tensor::from_data({1, 7, 7, 1}, xv);
    Rng rng(3);
    Tensor k = Tensor::uniform({3, 3, 1, 1}, rng, -1, 1);
    Tensor y = conv2d(x, k, Tensor(), 1, PadMode::kZero);
    for (int64_t a = 0; a < 3; ++a)
        for (int64_t b = 0; b < 3; ++b)
            CHECK(y.at({0, 2 + a, 2 + b, 0}) == doctest::Approx(k.at({a, b, 0, 0})));
}

TEST_CASE("conv2d matches the naive quadruple-loop oracle") {
    Rng rng(4);
    Tensor x = Tensor::uniform({1, 8, 8, 4}, rng, -1, 1);
    Tensor k = Tensor::uniform({3, 3, 4, 2}, rng, -1, 1);
    for (bool replicate : {false, true}) {
        for (int stride : {1, 2}) {
            Tensor y = conv2d(x, k, Tensor(), stride,
                              replicate ? PadMode::kReplicate : PadMode::kZero);
            auto oracle = testsupport::naive_conv2d(x.values(), 8, 8, 4, k.values(), 3, 3, 2,
                                                    stride, 1, replicate);
            CHECK(testsupport::max_abs_diff(y.values(), oracle) < 1e-10);
        }
    }
}

TEST_CASE("conv2d rejects even kernels") {
    Tensor x = Tensor::zeros({1, 4, 4, 1});
    Tensor k = Tensor::zeros({2, 2, 1, 1});
    CHECK_THROWS_AS(conv2d(x, k, Tensor(), 1, PadMode::kZero), ConfigError);
}

TEST_CASE("depthwise conv output declared shape and gradient") {
    Rng rng(5);
    Tensor x = Tensor::uniform({1, 6, 6, 3}, rng, -1, 1).set_requires_grad(true);
    Tensor k = Tensor::uniform({3, 3, 3}, rng, -1, 1).set_requires_grad(true);
    Tensor y = conv2d_depthwise(x, k, Tensor(), 1, PadMode::kZero);
    CHECK(y.shape() == Shape{1, 6, 6, 3});
    Tensor r = Tensor::uniform(y.shape(), rng, -1, 1);
    auto fn = [&] { return sum_all(mul(conv2d_depthwise(x, k, Tensor(), 1, PadMode::kZero), r)); };
    CHECK(fd_max_rel_error(fn, {x, k}) < 1e-6);
}

TEST_CASE("layer_norm on constants and closed-form two-channel case") {
    Tensor gamma = Tensor::full({2}, 1);
    Tensor beta = Tensor::zeros({2});
    Tensor constant = Tensor::full({3, 2}, real(5));
    Tensor y = layer_norm(constant, gamma, beta);
    for (real v : y.values()) CHECK(std::abs(v) < 1e-9);

    Tensor x = Tensor::from_data({1, 2}, {1, 3});
    Tensor z = layer_norm(x, gamma, beta);
    // mean 2, variance 1 -> normalized to +-1 up to the eps correction
    CHECK(z.at({0, 0}) == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(z.at({0, 1}) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("layer_norm output is per-position standardized") {
    Rng rng(6);
    Tensor x = Tensor::uniform({1, 4, 4, 8}, rng, -3, 3);
    Tensor y = layer_norm(x, Tensor::full({8}, 1), Tensor::zeros({8}));
    for (int64_t p = 0; p < 16; ++p) {
        double mean = 0, var = 0;
        for (int64_t c = 0; c < 8; ++c) mean += y.values()[p * 8 + c];
        mean /= 8;
        for (int64_t c = 0; c < 8; ++c) {
            double d = y.values()[p * 8 + c] - mean;
            var += d * d;
        }
        var /= 8;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(std::abs(var - 1.0) < 1e-4);
    }
}

TEST_CASE("activation fixed points and gradients") {
    CHECK(silu(Tensor::scalar(0)).item() == doctest::Approx(0));
    Tensor c = softmax(Tensor::full({1, 5}, real(2.3)), 1);
    for (real v : c.values()) CHECK(v == doctest::Approx(0.2));

    Rng rng(7);
    Tensor x = Tensor::uniform({4, 4}, rng, -3, 3).set_requires_grad(true);
    Tensor r = Tensor::uniform({4, 4}, rng, -1, 1);
    auto fn_silu = [&] { return sum_all(mul(silu(x), r)); };
    CHECK(fd_max_rel_error(fn_silu, {x}) < 1e-6);
    auto fn_softmax = [&] { return sum_all(mul(softmax(x, 1), r)); };
    CHECK(fd_max_rel_error(fn_softmax, {x}) < 1e-6);
    auto fn_softplus = [&] { return sum_all(mul(softplus(x), r)); };
    CHECK(fd_max_rel_error(fn_softplus, {x}) < 1e-6);
}

TEST_CASE("backward on reductions gives the expected leaf gradients") {
    Rng rng(8);
    Tensor x = Tensor::uniform({3, 4}, rng, -1, 1).set_requires_grad(true);
    x.zero_grad();
    backward(sum_all(x));
    for (real g : x.grad()) CHECK(g == doctest::Approx(1.0));

    x.zero_grad();
    backward(sum_all(mul(x, x)));
    for (size_t i = 0; i < x.grad().size(); ++i)
        CHECK(x.grad()[i] == doctest::Approx(2 * x.values()[i]));
}

TEST_CASE("backward rejects non-scalar losses") {
    Tensor x = Tensor::zeros({2, 2}).set_requires_grad(true);
    Tensor y = add(x, x);
    CHECK_THROWS_AS(backward(y), ContractError);
}

TEST_CASE("broadcasting add/mul against explicit loops") {
    Rng rng(9);
    Tensor a = Tensor::uniform({2, 3, 4}, rng, -1, 1);
    Tensor b = Tensor::uniform({3, 1}, rng, -1, 1);
    Tensor s = add(a, b);
    CHECK(s.shape() == Shape{2, 3, 4});
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < 3; ++j)
            for (int64_t k = 0; k < 4; ++k)
                CHECK(s.at({i, j, k}) == doctest::Approx(a.at({i, j, k}) + b.at({j, 0})));

    Tensor c = Tensor::uniform({4}, rng, -1, 1).set_requires_grad(true);
    Tensor d = Tensor::uniform({5, 4}, rng, -1, 1).set_requires_grad(true);
    Tensor r = Tensor::uniform({5, 4}, rng, -1, 1);
    auto fn = [&] { return sum_all(mul(mul(d, c), r)); };
    CHECK(fd_max_rel_error(fn, {c, d}) < 1e-6);

    CHECK_THROWS_AS(add(Tensor::zeros({3}), Tensor::zeros({4})), ShapeError);
}

TEST_CASE("div log exp sqrt gradients") {
    Rng rng(10);
    Tensor a = Tensor::uniform({3, 3}, rng, real(0.5), real(2)).set_requires_grad(true);
    Tensor b = Tensor::uniform({3, 3}, rng, real(0.5), real(2)).set_requires_grad(true);
    Tensor r = Tensor::uniform({3, 3}, rng, -1, 1);
    auto fn = [&] {
        return sum_all(mul(add(div(a, b), add(log(a), add(exp(b), sqrt(a)))), r));
    };
    CHECK(fd_max_rel_error(fn, {a, b}) < 1e-6);
}

TEST_CASE("gather, segment mean and concat gradients") {
    Rng rng(11);
    Tensor x = Tensor::uniform({6, 3}, rng, -1, 1).set_requires_grad(true);
    std::vector<int64_t> idx = {5, 0, 3, 3, 1};
    Tensor r = Tensor::uniform({5, 3}, rng, -1, 1);
    auto fn_gather = [&] { return sum_all(mul(gather_rows(x, idx), r)); };
    CHECK(fd_max_rel_error(fn_gather, {x}) < 1e-6);

    Tensor r2 = Tensor::uniform({4, 3}, rng, -1, 1);
    auto fn_seg = [&] { return sum_all(mul(segment_mean_rows(x, 4), r2)); };
    CHECK(fd_max_rel_error(fn_seg, {x}) < 1e-6);

    Tensor y = Tensor::uniform({6, 2}, rng, -1, 1).set_requires_grad(true);
    Tensor r3 = Tensor::uniform({6, 5}, rng, -1, 1);
    auto fn_cat = [&] { return sum_all(mul(concat_last({x, y}), r3)); };
    CHECK(fd_max_rel_error(fn_cat, {x, y}) < 1e-6);
}

TEST_CASE("spatial resampling ops keep declared shapes and gradients") {
    Rng rng(12);
    Tensor x = Tensor::uniform({1, 6, 4, 2}, rng, -1, 1).set_requires_grad(true);
    CHECK(avg_pool2(x).shape() == Shape{1, 3, 2, 2});
    CHECK(upsample_nearest2(x).shape() == Shape{1, 12, 8, 2});
    CHECK(resize_nearest(x, 5, 7).shape() == Shape{1, 5, 7, 2});
    CHECK(crop_border(x, 1).shape() == Shape{1, 4, 2, 2});

    Tensor r = Tensor::uniform({1, 3, 2, 2}, rng, -1, 1);
    auto fn_pool = [&] { return sum_all(mul(avg_pool2(x), r)); };
    CHECK(fd_max_rel_error(fn_pool, {x}) < 1e-6);
    Tensor r2 = Tensor::uniform({1, 5, 7, 2}, rng, -1, 1);
    auto fn_resize = [&] { return sum_all(mul(resize_nearest(x, 5, 7), r2)); };
    CHECK(fd_max_rel_error(fn_resize, {x}) < 1e-6);
}

TEST_CASE("shape algebra holds over randomized op instances") {
    Rng rng(13);
    for (int trial = 0; trial < 25; ++trial) {
        int64_t m = 1 + rng.uniform_int(6), k = 1 + rng.uniform_int(6), n = 1 + rng.uniform_int(6);
        CHECK(matmul(Tensor::zeros({m, k}), Tensor::zeros({k, n})).shape() == Shape{m, n});

        int64_t h = 3 + rng.uniform_int(6), w = 3 + rng.uniform_int(6);
        int64_t ci = 1 + rng.uniform_int(3), co = 1 + rng.uniform_int(3);
        int stride = 1 + static_cast<int>(rng.uniform_int(2));
        Tensor y = conv2d(Tensor::zeros({1, h, w, ci}), Tensor::zeros({3, 3, ci, co}), Tensor(),
                          stride, PadMode::kZero);
        CHECK(y.shape() == Shape{1, (h + 2 - 3) / stride + 1, (w + 2 - 3) / stride + 1, co});

        int64_t rows = 1 + rng.uniform_int(8), cols = 1 + rng.uniform_int(5);
        CHECK(softmax(Tensor::zeros({rows, cols}), 1).shape() == Shape{rows, cols});
        CHECK(sum_axis(Tensor::zeros({rows, cols}), 0, false).shape() == Shape{cols});
    }
}

TEST_CASE("determinism: identical seeds give bit-identical op outputs") {
    auto run = [] {
        Rng rng(77);
        Tensor x = Tensor::normal({1, 6, 6, 3}, rng, 0, 1);
        Tensor k = Tensor::normal({3, 3, 3, 2}, rng, 0, 1);
        Tensor y = silu(conv2d(x, k, Tensor(), 1, PadMode::kReplicate));
        return softmax(reshape(y, {36, 2}), 1).values();
    };
    auto a = run();
    auto b = run();
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(real)) == 0);
}

TEST_CASE("non-finite results raise instead of propagating silently") {
    Tensor big = Tensor::full({2}, real(1000));
    CHECK_THROWS_AS(exp(big), NumericsError);
    Tensor zero = Tensor::zeros({2});
    CHECK_THROWS_AS(log(zero), NumericsError);
    CHECK_THROWS_AS(div(Tensor::full({2}, 1), zero), NumericsError);
}

TEST_CASE("finite checks can be disabled and restored") {
    set_finite_checks(false);
    Tensor big = Tensor::full({2}, real(1000));
    CHECK_NOTHROW(exp(big));
    set_finite_checks(true);
    CHECK_THROWS_AS(exp(big), NumericsError);
}

TEST_CASE("mlp composition gradient") {
    Rng rng(14);
    Tensor x = Tensor::uniform({5, 3}, rng, -1, 1).set_requires_grad(true);
    Tensor w1 = Tensor::uniform({3, 6}, rng, -1, 1).set_requires_grad(true);
    Tensor b1 = Tensor::uniform({6}, rng, -1, 1).set_requires_grad(true);
    Tensor w2 = Tensor::uniform({6, 3}, rng, -1, 1).set_requires_grad(true);
    Tensor b2 = Tensor::uniform({3}, rng, -1, 1).set_requires_grad(true);
    Tensor r = Tensor::uniform({5, 3}, rng, -1, 1);
    auto fn = [&] { return sum_all(mul(mlp(x, w1, b1, w2, b2), r)); };
    CHECK(fd_max_rel_error(fn, {x, w1, b1, w2, b2}) < 1e-6);
}

TEST_CASE("detach cuts the tape") {
    Tensor x = Tensor::full({3}, real(2)).set_requires_grad(true);
    Tensor y = mul(x, x).detach();
    CHECK_FALSE(y.requires_grad());
    Tensor z = mul(y, y);
    CHECK_FALSE(z.requires_grad());
}
