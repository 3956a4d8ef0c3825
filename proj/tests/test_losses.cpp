#include <doctest.h>

#include <cmath>
#include <cstring>

#include "colormamba/losses.hpp"
#include "colormamba/train.hpp"
#include "test_support.hpp"

using namespace colormamba;
using testsupport::fd_max_rel_error;

namespace {

std::vector<ImagePair> tiny_corpus(int64_t count, int64_t side, uint64_t seed) {
    std::vector<ImagePair> out;
    Rng rng(seed);
    for (int64_t i = 0; i < count; ++i) {
        ImagePair p;
        p.name = "img" + std::to_string(i);
        std::vector<real> rgb(side * side * 3), nir(side * side);
        for (int64_t y = 0; y < side; ++y)
            for (int64_t x = 0; x < side; ++x) {
                real u = real(x) / real(side), v = real(y) / real(side);
                real r = real(0.5) + real(0.35) * std::sin(real(4) * u + real(i));
                real g = real(0.5) + real(0.35) * std::cos(real(3) * v + real(i));
                real b = real(0.5) + real(0.3) * std::sin(real(2) * (u + v));
                rgb[(y * side + x) * 3 + 0] = r;
                rgb[(y * side + x) * 3 + 1] = g;
                rgb[(y * side + x) * 3 + 2] = b;
                nir[y * side + x] = std::clamp(real(0.3) * r + real(0.5) * g + real(0.2) * b,
                                               real(0), real(1));
            }
        p.rgb = Tensor::from_data({1, side, side, 3}, std::move(rgb));
        p.nir = Tensor::from_data({1, side, side, 1}, std::move(nir));
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace

TEST_CASE("mse fixed points and naive-loop oracle") {
    Tensor x = Tensor::full({3, 4}, real(0.5));
    CHECK(mse_loss(x, x).item() == 0);
    CHECK(mse_loss(Tensor::full({5}, 1), Tensor::zeros({5})).item() == doctest::Approx(1));

    Rng rng(1);
    Tensor a = Tensor::uniform({4, 6}, rng, -1, 1);
    Tensor b = Tensor::uniform({4, 6}, rng, -1, 1);
    double direct = 0;
    for (int64_t i = 0; i < 24; ++i) {
        double d = a.values()[i] - b.values()[i];
        direct += d * d;
    }
    direct /= 24;
    CHECK(std::abs(double(mse_loss(a, b).item()) - direct) < 1e-12);
    CHECK_THROWS_AS(mse_loss(a, Tensor::zeros({3, 3})), ShapeError);
}

TEST_CASE("ms_ssim fixed points, symmetry and range") {
    Rng rng(2);
    Tensor x = Tensor::uniform({1, 16, 16, 3}, rng, real(0.1), real(0.9));
    NoGradGuard ng;
    CHECK(ms_ssim(x, x, 1, 11).item() == doctest::Approx(1.0).epsilon(1e-9));

    Tensor y = Tensor::uniform({1, 16, 16, 3}, rng, real(0.1), real(0.9));
    real ab = ms_ssim(x, y, 1, 11).item();
    real ba = ms_ssim(y, x, 1, 11).item();
    CHECK(std::abs(ab - ba) < 1e-12);
    CHECK(ab >= 0);
    CHECK(ab <= 1);
}

TEST_CASE("ms_ssim of an image against its negative is small") {
    Rng rng(3);
    Tensor x = Tensor::uniform({1, 16, 16, 1}, rng, real(0.05), real(0.95));
    Tensor inverted = add_scalar(neg(x), 1);  // 1 - x
    NoGradGuard ng;
    CHECK(ms_ssim(x, inverted, 1, 11).item() < 0.5);
}

TEST_CASE("ms_ssim against a direct single-scale formula on a small instance") {
    // independent evaluation of the Gaussian-window SSIM mean with the same
    // constants, written with plain loops
    Rng rng(4);
    int64_t side = 13;
    Tensor x = Tensor::uniform({1, side, side, 1}, rng, real(0.2), real(0.8));
    std::vector<real> yv = x.values();
    Rng noise(5);
    for (auto& v : yv)
        v = std::clamp(v * real(0.8) + real(0.1) + noise.uniform(real(-0.03), real(0.03)),
                       real(0.01), real(0.99));
    Tensor y = Tensor::from_data(x.shape(), yv);

    const int win = 11;
    const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
    double taps[win];
    double tsum = 0;
    for (int i = 0; i < win; ++i) {
        double d = i - 5.0;
        taps[i] = std::exp(-d * d / (2 * sigma * sigma));
        tsum += taps[i];
    }
    for (double& t : taps) t /= tsum;
    double total = 0;
    int64_t count = 0;
    for (int64_t oy = 0; oy + win <= side; ++oy)
        for (int64_t ox = 0; ox + win <= side; ++ox) {
            double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
            for (int a = 0; a < win; ++a)
                for (int b = 0; b < win; ++b) {
                    double w = taps[a] * taps[b];
                    double vx = x.values()[(oy + a) * side + ox + b];
                    double vy = y.values()[(oy + a) * side + ox + b];
                    mx += w * vx;
                    my += w * vy;
                    mxx += w * vx * vx;
                    myy += w * vy * vy;
                    mxy += w * vx * vy;
                }
            double sx = mxx - mx * mx, sy = myy - my * my, sxy = mxy - mx * my;
            double l = (2 * mx * my + c1) / (mx * mx + my * my + c1);
            double cs = (2 * sxy + c2) / (sx + sy + c2);
            total += l * cs;
            ++count;
        }
    double expected = total / count;  // single scale: weight exponent is 1
    NoGradGuard ng;
    CHECK(ms_ssim(x, y, 1, 11).item() == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("ms_ssim rejects images too small for the scale count") {
    Tensor x = Tensor::full({1, 16, 16, 1}, real(0.5));
    CHECK_THROWS_AS(ms_ssim(x, x, 3, 11), ShapeError);  // needs 44 px
    CHECK_THROWS_AS(ms_ssim(x, x, 2, 11), ShapeError);  // needs 22 px
    NoGradGuard ng;
    CHECK_NOTHROW(ms_ssim(x, x, 1, 11));
}

TEST_CASE("feature consistency loss vanishes on identical inputs") {
    Rng rng(6);
    TinyAutoencoder ae = TinyAutoencoder::init(rng);
    ae.freeze();
    Tensor x = Tensor::uniform({1, 16, 16, 3}, rng, real(0.1), real(0.9));
    FeatureLossWeights w;
    NoGradGuard ng;
    CHECK(feature_consistency_loss(x, x, ae, w, 1, 11).item() < 1e-9);
}

TEST_CASE("cosine term contributes gamma for orthogonal embeddings") {
    Tensor a = Tensor::from_data({4}, {1, 0, 1, 0});
    Tensor b = Tensor::from_data({4}, {0, 1, 0, 1});
    NoGradGuard ng;
    CHECK(cosine_similarity(a, b).item() == doctest::Approx(0));
    CHECK(cosine_similarity(a, a).item() == doctest::Approx(1).epsilon(1e-9));
}

TEST_CASE("feature loss gradient check through all three terms") {
    Rng rng(7);
    TinyAutoencoder ae = TinyAutoencoder::init(rng);
    ae.freeze();
    Tensor x = Tensor::uniform({1, 8, 8, 3}, rng, real(0.2), real(0.8)).set_requires_grad(true);
    Tensor y = Tensor::uniform({1, 8, 8, 3}, rng, real(0.2), real(0.8)).set_requires_grad(true);
    FeatureLossWeights w;
    auto fn = [&] { return feature_consistency_loss(x, y, ae, w, 1, 5); };
    CHECK(fd_max_rel_error(fn, {x, y}) < 1e-4);
}

TEST_CASE("adversarial losses at the 0.5 fixed point and for a perfect critic") {
    Tensor zeros = Tensor::zeros({1, 2, 2, 1});  // sigma = 0.5
    NoGradGuard ng;
    AdversarialLosses l = adversarial_losses(zeros, zeros);
    CHECK(l.loss_d.item() == doctest::Approx(-2 * std::log(0.5)).epsilon(1e-9));
    CHECK(l.loss_g.item() == doctest::Approx(-std::log(0.5)).epsilon(1e-9));

    Tensor big = Tensor::full({1, 2, 2, 1}, real(30));
    AdversarialLosses perfect = adversarial_losses(big, neg(big));
    CHECK(perfect.loss_d.item() < 1e-6);
}

TEST_CASE("generator adversarial gradient pushes fake logits up") {
    Tensor fake = Tensor::zeros({1, 2, 2, 1}).set_requires_grad(true);
    Tensor realmap = Tensor::zeros({1, 2, 2, 1});
    fake.zero_grad();
    AdversarialLosses l = adversarial_losses(realmap, fake);
    backward(l.loss_g);
    for (real g : fake.grad()) CHECK(g < 0);  // descending on loss_g raises the logits
}

TEST_CASE("total loss weighting arithmetic") {
    Tensor a = Tensor::scalar(real(0.3));
    Tensor b = Tensor::scalar(real(0.7));
    Tensor c = Tensor::scalar(real(0.1));
    LossWeights w;  // 15, 15, 1
    NoGradGuard ng;
    CHECK(total_loss(a, b, c, w).item() == doctest::Approx(15 * 0.3 + 15 * 0.7 + 0.1));
    CHECK(total_loss(Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0), w).item() == 0);
    w.lambda_adv = 0;
    CHECK(total_loss(a, b, c, w).item() == doctest::Approx(15 * 0.3 + 15 * 0.7));
}

TEST_CASE("surrogate autoencoder trains below the target and freezes") {
    auto corpus = tiny_corpus(3, 16, 8);
    TrainConfig cfg;
    cfg.ae_epochs = 800;
    cfg.ae_lr = real(5e-3);
    cfg.ae_target_mse = real(0.01);
    Rng rng(9);
    TinyAutoencoder ae = TinyAutoencoder::init(rng);
    real mse = train_surrogate_autoencoder(ae, corpus, cfg, rng);
    CHECK(mse < 0.01);
    CHECK(ae.frozen());

    // frozen encoder is deterministic
    NoGradGuard ng;
    Tensor e1 = ae.encode(corpus[0].rgb);
    Tensor e2 = ae.encode(corpus[0].rgb);
    CHECK(std::memcmp(e1.values().data(), e2.values().data(),
                      e1.values().size() * sizeof(real)) == 0);
}

TEST_CASE("surrogate autoencoder rejects an empty corpus") {
    TrainConfig cfg;
    Rng rng(10);
    TinyAutoencoder ae = TinyAutoencoder::init(rng);
    std::vector<ImagePair> empty;
    CHECK_THROWS_AS(train_surrogate_autoencoder(ae, empty, cfg, rng), ConfigError);
}

TEST_CASE("augment: identity parameters leave the pair unchanged") {
    auto corpus = tiny_corpus(1, 12, 11);
    ImagePair out = augment(corpus[0], AugmentParams::identity());
    CHECK(testsupport::max_abs_diff(out.nir.values(), corpus[0].nir.values()) == 0);
    CHECK(testsupport::max_abs_diff(out.rgb.values(), corpus[0].rgb.values()) == 0);
}

TEST_CASE("augment: mirroring twice restores the original") {
    auto corpus = tiny_corpus(1, 12, 12);
    AugmentParams p;
    p.mirror = true;
    ImagePair once = augment(corpus[0], p);
    ImagePair twice = augment(once, p);
    CHECK(testsupport::max_abs_diff(twice.nir.values(), corpus[0].nir.values()) == 0);
    CHECK(testsupport::max_abs_diff(twice.rgb.values(), corpus[0].rgb.values()) == 0);
}

TEST_CASE("augment keeps the NIR and RGB geometry aligned") {
    auto corpus = tiny_corpus(1, 12, 13);
    AugmentParams p;
    p.mirror = true;
    ImagePair out = augment(corpus[0], p);
    int64_t w = 12;
    for (int64_t y = 0; y < 12; ++y)
        for (int64_t x = 0; x < 12; ++x) {
            CHECK(out.nir.at({0, y, x, 0}) == corpus[0].nir.at({0, y, w - 1 - x, 0}));
            CHECK(out.rgb.at({0, y, x, 1}) == corpus[0].rgb.at({0, y, w - 1 - x, 1}));
        }
}

TEST_CASE("augment rejects crops larger than the image") {
    auto corpus = tiny_corpus(1, 8, 14);
    AugmentParams p;
    p.scale = real(1.2);  // resize to 10x10
    p.crop_y = 9;         // out of range for an 8-row crop
    CHECK_THROWS_AS(augment(corpus[0], p), ShapeError);
}

TEST_CASE("augment contrast only touches the NIR side") {
    auto corpus = tiny_corpus(1, 8, 15);
    AugmentParams p;
    p.contrast = real(1.15);
    ImagePair out = augment(corpus[0], p);
    CHECK(testsupport::max_abs_diff(out.rgb.values(), corpus[0].rgb.values()) == 0);
    CHECK(testsupport::max_abs_diff(out.nir.values(), corpus[0].nir.values()) > 0);
}

TEST_CASE("augment sampling is deterministic per seed") {
    Rng a(16), b(16);
    AugmentParams pa = AugmentParams::sample(a, 12, 12);
    AugmentParams pb = AugmentParams::sample(b, 12, 12);
    CHECK(pa.scale == pb.scale);
    CHECK(pa.crop_y == pb.crop_y);
    CHECK(pa.crop_x == pb.crop_x);
    CHECK(pa.mirror == pb.mirror);
    CHECK(pa.contrast == pb.contrast);
}

TEST_CASE("adamw applies decoupled weight decay") {
    Tensor p = Tensor::full({2}, real(1)).set_requires_grad(true);
    NamedParams params{{"p", p}};
    AdamW opt(real(0.1), real(0.9), real(0.999), real(1e-8), real(0.5));
    p.zero_grad();  // zero gradient step: only decay should act
    opt.step(params);
    // moments stay zero, update is -lr*wd*p
    CHECK(p.values()[0] == doctest::Approx(1 - 0.1 * 0.5 * 1).epsilon(1e-12));
}

TEST_CASE("adamw state roundtrips through checkpoint entries") {
    Rng rng(17);
    Tensor p = Tensor::uniform({3}, rng, -1, 1).set_requires_grad(true);
    NamedParams params{{"p", p}};
    AdamW opt(real(0.01), real(0.5), real(0.999), real(1e-8), 0);
    p.zero_grad();
    backward(sum_all(mul(p, p)));
    opt.step(params);
    auto entries = opt.state_entries("opt", params);

    AdamW opt2(real(0.01), real(0.5), real(0.999), real(1e-8), 0);
    opt2.load_state("opt", params, entries);
    CHECK(opt2.steps() == opt.steps());
    auto entries2 = opt2.state_entries("opt", params);
    REQUIRE(entries.size() == entries2.size());
    for (size_t i = 0; i < entries.size(); ++i) {
        CHECK(entries[i].name == entries2[i].name);
        CHECK(entries[i].data == entries2[i].data);
    }
}

TEST_CASE("train_epoch: step accounting and seed determinism on a tiny run") {
    auto corpus = tiny_corpus(2, 8, 18);
    ModelConfig mc;
    mc.depth = 1;
    mc.widths = {4};
    mc.state_size = 2;
    mc.agent_count = 4;
    mc.tex_channels = 2;
    mc.disc_width = 4;
    TrainConfig tc;
    tc.lr = real(1e-3);
    tc.weight_decay = 0;
    tc.batch = 2;
    tc.n_gen = 2;
    tc.seed = 99;
    tc.augment = false;
    tc.msssim_scales = 1;
    tc.msssim_window = 5;
    tc.ae_epochs = 50;
    tc.ae_target_mse = real(1);  // keep the surrogate cheap here
    LossWeights lw;
    lw.lambda_adv = 1;

    auto run = [&](int64_t epochs) {
        Trainer t(mc, tc, lw, corpus);
        t.prepare_surrogate();
        EpochLog last;
        for (int64_t e = 0; e < epochs; ++e) last = t.run_epoch();
        return std::tuple{t.d_steps(), t.g_steps(), last};
    };
    auto [d_steps, g_steps, last] = run(3);
    CHECK(d_steps == 3);
    CHECK(g_steps == 6);  // n_gen = 2
    CHECK(last.epoch == 3);
    CHECK(last.step == 6);

    auto [d2, g2, last2] = run(3);
    CHECK(last2.loss_g == last.loss_g);  // bit-identical trajectories
    CHECK(last2.loss_d == last.loss_d);
    CHECK(last2.psnr_train == last.psnr_train);
}

TEST_CASE("frozen surrogate parameters are bit-identical through main training") {
    auto corpus = tiny_corpus(2, 8, 19);
    ModelConfig mc;
    mc.depth = 1;
    mc.widths = {4};
    mc.state_size = 2;
    mc.agent_count = 4;
    mc.tex_channels = 2;
    mc.disc_width = 4;
    TrainConfig tc;
    tc.batch = 2;
    tc.seed = 7;
    tc.augment = false;
    tc.msssim_scales = 1;
    tc.msssim_window = 5;
    tc.ae_epochs = 30;
    tc.ae_target_mse = real(1);
    LossWeights lw;

    Trainer t(mc, tc, lw, corpus);
    t.prepare_surrogate();
    auto before = params_to_entries(t.surrogate().named_params("ae"));
    for (int e = 0; e < 2; ++e) t.run_epoch();
    auto after = params_to_entries(t.surrogate().named_params("ae"));
    REQUIRE(before.size() == after.size());
    for (size_t i = 0; i < before.size(); ++i) CHECK(before[i].data == after[i].data);
}
