#include "colormamba/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "colormamba/color.hpp"
#include "colormamba/losses.hpp"
#include "colormamba/networks.hpp"

namespace colormamba {
namespace gradcheck {

double max_rel_error(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& leaves,
                     real h, bool inject_fault) {
    for (const Tensor& l : leaves) const_cast<Tensor&>(l).zero_grad();
    Tensor loss = loss_fn();
    backward(loss);

    std::vector<std::vector<real>> analytic;
    analytic.reserve(leaves.size());
    for (const Tensor& l : leaves) {
        analytic.push_back(l.has_grad() ? l.grad()
                                        : std::vector<real>(static_cast<size_t>(l.numel()), 0));
    }
    if (inject_fault) {
        // corrupt the largest-magnitude analytic entry so the mismatch is
        // guaranteed to register
        real* worst = nullptr;
        real mag = -1;
        for (auto& vec : analytic)
            for (auto& v : vec)
                if (std::abs(v) > mag) {
                    mag = std::abs(v);
                    worst = &v;
                }
        if (worst) *worst = *worst * real(1.5) + real(1);
    }

    double worst_err = 0;
    NoGradGuard ng;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& vals = const_cast<Tensor&>(leaves[li]).raw_values();
        for (size_t i = 0; i < vals.size(); ++i) {
            real orig = vals[i];
            vals[i] = orig + h;
            double f_plus = double(loss_fn().item());
            vals[i] = orig - h;
            double f_minus = double(loss_fn().item());
            vals[i] = orig;
            double fd = (f_plus - f_minus) / (2.0 * double(h));
            double a = double(analytic[li][i]);
            double denom = std::max({std::abs(a), std::abs(fd), 0.01});
            worst_err = std::max(worst_err, std::abs(a - fd) / denom);
        }
    }
    return worst_err;
}

namespace {

// fixed random projection to a smooth scalar
Tensor project(const Tensor& out, Rng& rng) {
    Tensor r = Tensor::uniform(out.shape(), rng, real(-1), real(1));
    return sum_all(mul(out, r));
}

std::vector<Tensor> with_params(std::vector<Tensor> leaves, const NamedParams& params) {
    for (const auto& [name, t] : params) leaves.push_back(t);
    return leaves;
}

ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.depth = 1;
    cfg.widths = {4};
    cfg.state_size = 2;
    cfg.agent_count = 4;
    cfg.conv_kernel = 3;
    cfg.tex_channels = 2;
    cfg.disc_width = 4;
    return cfg;
}

double check_block_impl(const std::string& name, uint64_t seed, bool inject_fault) {
    Rng rng(seed);
    auto leaf = [&](Shape shape, real lo = -1, real hi = 1) {
        return Tensor::uniform(std::move(shape), rng, lo, hi).set_requires_grad(true);
    };

    if (name == "matmul") {
        Tensor a = leaf({5, 7}), b = leaf({7, 3});
        auto fn = [&] {
            Rng proj(seed + 1);
            return project(matmul(a, b), proj);
        };
        return max_rel_error(fn, {a, b}, real(1e-5), inject_fault);
    }
    if (name == "conv2d") {
        Tensor x = leaf({1, 6, 6, 3}), w = leaf({3, 3, 3, 2}), b = leaf({2});
        auto fn = [&] {
            Rng proj(seed + 1);
            return project(conv2d(x, w, b, 2, PadMode::kReplicate), proj);
        };
        return max_rel_error(fn, {x, w, b}, real(1e-5), inject_fault);
    }
    if (name == "conv2d_depthwise") {
        Tensor x = leaf({1, 5, 5, 3}), w = leaf({3, 3, 3}), b = leaf({3});
        auto fn = [&] {
            Rng proj(seed + 1);
            return project(conv2d_depthwise(x, w, b, 1, PadMode::kZero), proj);
        };
        return max_rel_error(fn, {x, w, b}, real(1e-5), inject_fault);
    }
    if (name == "layer_norm") {
        Tensor x = leaf({7, 4}), gamma = leaf({4}), beta = leaf({4});
        auto fn = [&] {
            Rng proj(seed + 1);
            return project(layer_norm(x, gamma, beta), proj);
        };
        return max_rel_error(fn, {x, gamma, beta}, real(1e-5), inject_fault);
    }
    if (name == "silu") {
        Tensor x = leaf({6, 5});
        auto fn = [&] {
            Rng proj(seed + 1);
            return project(silu(x), proj);
        };
        return max_rel_error(fn, {x}, real(1e-5), inject_fault);
    }
    if (name == "softmax") {
        Tensor x = leaf({5, 7});
        auto fn = [&] {
            Rng proj(seed + 1);
            return project(softmax(x, 1), proj);
        };
        return max_rel_error(fn, {x}, real(1e-5), inject_fault);
    }
    if (name == "selective_scan") {
        SelectiveSsm ssm = SelectiveSsm::init(3, 2, rng);
        Tensor x = leaf({9, 3});
        auto fn = [&] {
            Rng proj(seed + 1);
            return project(ssm.forward(x), proj);
        };
        return max_rel_error(fn, with_params({x}, ssm.named_params("ssm")), real(1e-5),
                             inject_fault);
    }
    if (name == "scan2d") {
        Scan2d scan = Scan2d::init(2, 2, rng, true);
        Tensor f = leaf({1, 4, 4, 2});
        auto fn = [&] {
            Rng proj(seed + 1);
            return project(scan.forward(f), proj);
        };
        return max_rel_error(fn, with_params({f}, scan.named_params("scan")), real(1e-5),
                             inject_fault);
    }
    if (name == "vssm") {
        VssbConfig cfg;
        cfg.channels = 4;
        cfg.state_size = 2;
        cfg.agent_count = 4;
        Vssm vssm = Vssm::init(cfg, rng);
        Tensor x = leaf({1, 4, 4, 4});
        auto fn = [&] {
            Rng proj(seed + 1);
            return project(vssm.forward(x), proj);
        };
        return max_rel_error(fn, with_params({x}, vssm.named_params("vssm")), real(1e-5),
                             inject_fault);
    }
    if (name == "vssb") {
        VssbConfig cfg;
        cfg.channels = 4;
        cfg.state_size = 2;
        cfg.agent_count = 4;
        Vssb vssb = Vssb::init(cfg, rng);
        Tensor x = leaf({1, 4, 4, 4});
        auto fn = [&] {
            Rng proj(seed + 1);
            return project(vssb.forward(x), proj);
        };
        return max_rel_error(fn, with_params({x}, vssb.named_params("vssb")), real(1e-5),
                             inject_fault);
    }
    if (name == "agent_attention") {
        AgentAttention attn = AgentAttention::init(4, 3, rng);
        Tensor x = leaf({12, 4});
        auto fn = [&] {
            Rng proj(seed + 1);
            return project(attn.forward(x), proj);
        };
        return max_rel_error(fn, with_params({x}, attn.named_params("attn")), real(1e-5),
                             inject_fault);
    }
    if (name == "spade") {
        SpadeResblock spade = SpadeResblock::init(3, 2, rng);
        // zero-init modulation convs get a nudge so their gradients are live
        for (auto& [n, t] : spade.named_params("s")) {
            if (n.find("mod_") != std::string::npos) {
                for (auto& v : t.raw_values()) v = rng.uniform(real(-0.3), real(0.3));
            }
        }
        Tensor x = leaf({1, 4, 4, 3});
        Tensor cond = leaf({1, 2, 2, 2});
        auto fn = [&] {
            Rng proj(seed + 1);
            return project(spade.forward(x, cond), proj);
        };
        return max_rel_error(fn, with_params({x, cond}, spade.named_params("spade")), real(1e-5),
                             inject_fault);
    }
    if (name == "criss_cross") {
        CrissCrossFusion fuse = CrissCrossFusion::init(3, 2, rng);
        Tensor q = leaf({1, 3, 3, 3});
        Tensor kv = leaf({1, 3, 3, 2});
        auto fn = [&] {
            Rng proj(seed + 1);
            return project(fuse.forward(q, kv), proj);
        };
        return max_rel_error(fn, with_params({q, kv}, fuse.named_params("fuse")), real(1e-5),
                             inject_fault);
    }
    if (name == "sfe") {
        Sfe sfe = Sfe::init(4, 2, rng);
        Tensor nir = Tensor::uniform({1, 6, 6, 1}, rng, 0, 1);
        auto fn = [&] {
            Rng proj(seed + 1);
            Sfe::Output out = sfe.forward(nir);
            return add(project(out.x_nir_hsv, proj), project(out.x_tex, proj));
        };
        return max_rel_error(fn, with_params({}, sfe.named_params("sfe")), real(1e-5),
                             inject_fault);
    }
    if (name == "generator_b") {
        ModelConfig cfg = tiny_model_config();
        GeneratorB gb = GeneratorB::init(cfg, rng);
        Tensor nir = Tensor::uniform({1, 4, 4, 1}, rng, 0, 1);
        auto fn = [&] {
            Rng proj(seed + 1);
            GeneratorB::Output out = gb.forward(nir);
            Tensor l = project(out.y_hsv, proj);
            l = add(l, project(out.multiscale.back(), proj));
            return add(l, project(out.x_tex, proj));
        };
        return max_rel_error(fn, with_params({}, gb.named_params("gb")), real(1e-5), inject_fault);
    }
    if (name == "generator_a") {
        ModelConfig cfg = tiny_model_config();
        GeneratorA ga = GeneratorA::init(cfg, rng);
        Tensor nir = Tensor::uniform({1, 4, 4, 1}, rng, 0, 1);
        std::vector<Tensor> ms = {Tensor::uniform({1, 4, 4, 4}, rng, -1, 1)};
        Tensor x_tex = Tensor::uniform({1, 4, 4, 2}, rng, -1, 1);
        auto fn = [&] {
            Rng proj(seed + 1);
            return project(ga.forward(nir, ms, x_tex), proj);
        };
        return max_rel_error(fn, with_params({}, ga.named_params("ga")), real(1e-5), inject_fault);
    }
    if (name == "discriminator") {
        ModelConfig cfg = tiny_model_config();
        Discriminator d = Discriminator::init(cfg, rng);
        // 16x16 keeps the final stage at 2x2; the instance norm is
        // degenerate (and its gradient identically zero) on a 1x1 map
        Tensor img = leaf({1, 16, 16, 3}, 0, 1);
        auto fn = [&] {
            Rng proj(seed + 1);
            return project(d.forward(img), proj);
        };
        return max_rel_error(fn, with_params({img}, d.named_params("d")), real(1e-5),
                             inject_fault);
    }
    if (name == "mse_loss") {
        Tensor x = leaf({4, 5}), y = leaf({4, 5});
        auto fn = [&] { return mse_loss(x, y); };
        return max_rel_error(fn, {x, y}, real(1e-5), inject_fault);
    }
    if (name == "ms_ssim") {
        // correlated pair keeps every scale's cs term off the clamp floor
        Tensor x = leaf({1, 12, 12, 2}, real(0.2), real(0.8));
        std::vector<real> ydata = x.values();
        Rng noise(seed + 2);
        for (auto& v : ydata)
            v = std::clamp(v * real(0.7) + real(0.15) + noise.uniform(real(-0.05), real(0.05)),
                           real(0.01), real(0.99));
        Tensor y = Tensor::from_data({1, 12, 12, 2}, std::move(ydata)).set_requires_grad(true);
        auto fn = [&] { return ms_ssim(x, y, 2, 5); };
        return max_rel_error(fn, {x, y}, real(1e-5), inject_fault);
    }
    if (name == "feature_loss") {
        TinyAutoencoder ae = TinyAutoencoder::init(rng);
        ae.freeze();
        Tensor x = leaf({1, 8, 8, 3}, real(0.1), real(0.9));
        Tensor y = leaf({1, 8, 8, 3}, real(0.1), real(0.9));
        FeatureLossWeights w;
        auto fn = [&] { return feature_consistency_loss(x, y, ae, w, 1, 5); };
        return max_rel_error(fn, {x, y}, real(1e-5), inject_fault);
    }
    if (name == "adversarial") {
        Tensor r = leaf({1, 3, 3, 1}), f = leaf({1, 3, 3, 1});
        auto fn = [&] {
            AdversarialLosses l = adversarial_losses(r, f);
            return add(l.loss_d, l.loss_g);
        };
        return max_rel_error(fn, {r, f}, real(1e-5), inject_fault);
    }
    throw ConfigError("gradcheck: unknown block " + name);
}

}  // namespace

std::vector<std::string> suite_blocks() {
    return {"matmul",        "conv2d",    "conv2d_depthwise", "layer_norm",
            "silu",          "softmax",   "selective_scan",   "scan2d",
            "vssm",          "vssb",      "agent_attention",  "spade",
            "criss_cross",   "sfe",       "generator_b",      "generator_a",
            "discriminator", "mse_loss",  "ms_ssim",          "feature_loss",
            "adversarial"};
}

BlockResult check_block(const std::string& name, uint64_t seed, double tolerance,
                        bool inject_fault) {
    BlockResult r;
    r.block = name;
    r.max_rel_err = check_block_impl(name, seed, inject_fault);
    r.pass = r.max_rel_err < tolerance;
    return r;
}

std::vector<BlockResult> run_suite(uint64_t seed, double tolerance,
                                   const std::string& fault_block) {
    std::vector<BlockResult> out;
    for (const std::string& name : suite_blocks()) {
        out.push_back(check_block(name, seed, tolerance, name == fault_block));
    }
    return out;
}

std::string format_results(const std::vector<BlockResult>& results) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(3);
    for (const BlockResult& r : results) {
        os << (r.pass ? "PASS" : "FAIL") << "  " << std::left << std::setw(20) << r.block
           << " max_rel_err=" << r.max_rel_err << "\n";
    }
    return os.str();
}

bool all_pass(const std::vector<BlockResult>& results) {
    for (const BlockResult& r : results)
        if (!r.pass) return false;
    return true;
}

}  // namespace gradcheck
}  // namespace colormamba
