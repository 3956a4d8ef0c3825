#include "colormamba/train.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "colormamba/color.hpp"
#include "colormamba/metrics.hpp"

namespace colormamba {

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

void AdamW::step(const NamedParams& params) {
    ++t_;
    real bc1 = 1 - std::pow(beta1_, real(t_));
    real bc2 = 1 - std::pow(beta2_, real(t_));
    for (const auto& [name, tensor] : params) {
        detail::Node* node = tensor.node().get();
        auto& slot = slots_[node];
        auto& value = node->value;
        if (slot.m.size() != value.size()) {
            slot.m.assign(value.size(), 0);
            slot.v.assign(value.size(), 0);
        }
        const bool has_grad = node->grad.size() == value.size();
        for (size_t i = 0; i < value.size(); ++i) {
            real g = has_grad ? node->grad[i] : real(0);
            slot.m[i] = beta1_ * slot.m[i] + (1 - beta1_) * g;
            slot.v[i] = beta2_ * slot.v[i] + (1 - beta2_) * g * g;
            real mhat = slot.m[i] / bc1;
            real vhat = slot.v[i] / bc2;
            value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            value[i] -= lr_ * weight_decay_ * value[i];  // decoupled decay
        }
    }
}

void AdamW::zero_grad(const NamedParams& params) {
    for (const auto& [name, tensor] : params) {
        Tensor t = tensor;
        t.zero_grad();
    }
}

std::vector<ArrayEntry> AdamW::state_entries(const std::string& prefix,
                                             const NamedParams& params) const {
    std::vector<ArrayEntry> out;
    out.push_back({prefix + ".t", {1}, {double(t_)}});
    for (const auto& [name, tensor] : params) {
        auto it = slots_.find(tensor.node().get());
        if (it == slots_.end()) continue;
        ArrayEntry m{prefix + ".m." + name, tensor.shape(), {}};
        m.data.assign(it->second.m.begin(), it->second.m.end());
        ArrayEntry v{prefix + ".v." + name, tensor.shape(), {}};
        v.data.assign(it->second.v.begin(), it->second.v.end());
        out.push_back(std::move(m));
        out.push_back(std::move(v));
    }
    return out;
}

void AdamW::load_state(const std::string& prefix, const NamedParams& params,
                       const std::vector<ArrayEntry>& entries) {
    std::unordered_map<std::string, const ArrayEntry*> by_name;
    for (const ArrayEntry& e : entries) by_name[e.name] = &e;
    if (auto it = by_name.find(prefix + ".t"); it != by_name.end())
        t_ = static_cast<int64_t>(it->second->data.at(0));
    for (const auto& [name, tensor] : params) {
        auto mi = by_name.find(prefix + ".m." + name);
        auto vi = by_name.find(prefix + ".v." + name);
        if (mi == by_name.end() || vi == by_name.end()) continue;
        Slot slot;
        slot.m.assign(mi->second->data.begin(), mi->second->data.end());
        slot.v.assign(vi->second->data.begin(), vi->second->data.end());
        slots_[tensor.node().get()] = std::move(slot);
    }
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

AugmentParams AugmentParams::sample(Rng& rng, int64_t h, int64_t w) {
    AugmentParams p;
    p.scale = rng.uniform(real(1.0), real(1.3));
    int64_t nh = static_cast<int64_t>(std::llround(double(h) * double(p.scale)));
    int64_t nw = static_cast<int64_t>(std::llround(double(w) * double(p.scale)));
    p.crop_y = nh > h ? rng.uniform_int(nh - h + 1) : 0;
    p.crop_x = nw > w ? rng.uniform_int(nw - w + 1) : 0;
    p.mirror = rng.bernoulli(0.5);
    p.contrast = rng.uniform(real(0.8), real(1.2));
    return p;
}

namespace {

Tensor resize_plain(const Tensor& img, int64_t oh, int64_t ow) {
    NoGradGuard ng;
    return resize_nearest(img, oh, ow);
}

Tensor crop_plain(const Tensor& img, int64_t y0, int64_t x0, int64_t h, int64_t w) {
    int64_t ih = img.dim(1), iw = img.dim(2), c = img.dim(3);
    if (y0 < 0 || x0 < 0 || y0 + h > ih || x0 + w > iw)
        throw ShapeError("augment: crop larger than image");
    const auto& v = img.values();
    std::vector<real> out(static_cast<size_t>(h * w * c));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t ch = 0; ch < c; ++ch)
                out[(y * w + x) * c + ch] = v[((y + y0) * iw + x + x0) * c + ch];
    return Tensor::from_data({1, h, w, c}, std::move(out));
}

Tensor mirror_plain(const Tensor& img) {
    int64_t h = img.dim(1), w = img.dim(2), c = img.dim(3);
    const auto& v = img.values();
    std::vector<real> out(v.size());
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t ch = 0; ch < c; ++ch)
                out[(y * w + x) * c + ch] = v[(y * w + (w - 1 - x)) * c + ch];
    return Tensor::from_data(img.shape(), std::move(out));
}

Tensor contrast_plain(const Tensor& img, real factor) {
    const auto& v = img.values();
    std::vector<real> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        real adj = (v[i] - real(0.5)) * factor + real(0.5);
        out[i] = std::clamp(adj, real(0), real(1));
    }
    return Tensor::from_data(img.shape(), std::move(out));
}

}  // namespace

ImagePair augment(const ImagePair& pair, const AugmentParams& p) {
    int64_t h = pair.nir.dim(1), w = pair.nir.dim(2);
    ImagePair out;
    out.name = pair.name;
    out.nir = pair.nir;
    out.rgb = pair.rgb;
    if (p.scale != 1) {
        int64_t nh = static_cast<int64_t>(std::llround(double(h) * double(p.scale)));
        int64_t nw = static_cast<int64_t>(std::llround(double(w) * double(p.scale)));
        out.nir = resize_plain(out.nir, nh, nw);
        out.rgb = resize_plain(out.rgb, nh, nw);
    }
    if (out.nir.dim(1) != h || out.nir.dim(2) != w) {
        out.nir = crop_plain(out.nir, p.crop_y, p.crop_x, h, w);
        out.rgb = crop_plain(out.rgb, p.crop_y, p.crop_x, h, w);
    }
    if (p.mirror) {
        out.nir = mirror_plain(out.nir);
        out.rgb = mirror_plain(out.rgb);
    }
    if (p.contrast != 1) out.nir = contrast_plain(out.nir, p.contrast);
    return out;
}

// ---------------------------------------------------------------------------
// Surrogate autoencoder
// ---------------------------------------------------------------------------

real train_surrogate_autoencoder(TinyAutoencoder& ae, const std::vector<ImagePair>& corpus,
                                 const TrainConfig& cfg, Rng& rng) {
    if (corpus.empty()) throw ConfigError("surrogate autoencoder: empty corpus");
    (void)rng;
    NamedParams params = ae.named_params("ae");
    AdamW opt(cfg.ae_lr, real(0.9), real(0.999), cfg.adam_eps, 0);
    real last_mse = 0;
    for (int64_t e = 0; e < cfg.ae_epochs; ++e) {
        AdamW::zero_grad(params);
        Tensor loss;
        for (const ImagePair& pair : corpus) {
            Tensor l = mse_loss(ae.reconstruct(pair.rgb), pair.rgb);
            loss = loss.defined() ? add(loss, l) : l;
        }
        loss = mul_scalar(loss, real(1) / real(corpus.size()));
        last_mse = loss.item();
        if (last_mse < cfg.ae_target_mse) break;
        backward(loss);
        opt.step(params);
    }
    ae.freeze();
    return last_mse;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

std::string format_log_header() { return "epoch step loss_d loss_g loss_mse loss_fea psnr_train"; }

std::string format_log_record(const EpochLog& log) {
    std::ostringstream os;
    os << log.epoch << " " << log.step << " " << log.loss_d << " " << log.loss_g << " "
       << log.loss_mse << " " << log.loss_fea << " " << log.psnr_train;
    return os.str();
}

Trainer::Trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                 const LossWeights& weights, std::vector<ImagePair> corpus)
    : model_cfg_(model_cfg),
      cfg_(train_cfg),
      weights_(weights),
      corpus_(std::move(corpus)),
      rng_(train_cfg.seed) {
    if (corpus_.empty()) throw ConfigError("Trainer: empty corpus");
    model_cfg_.validate();
    gb_ = GeneratorB::init(model_cfg_, rng_);
    ga_ = GeneratorA::init(model_cfg_, rng_);
    d_ = Discriminator::init(model_cfg_, rng_);
    ae_ = TinyAutoencoder::init(rng_);
    opt_g_ = AdamW(cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps, cfg_.weight_decay);
    opt_d_ = AdamW(cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps, cfg_.weight_decay);
}

real Trainer::prepare_surrogate() {
    real mse = train_surrogate_autoencoder(ae_, corpus_, cfg_, rng_);
    surrogate_ready_ = true;
    return mse;
}

NamedParams Trainer::generator_params() const {
    NamedParams p = ga_.named_params("ga");
    append_params(p, gb_.named_params("gb"));
    return p;
}

NamedParams Trainer::discriminator_params() const { return d_.named_params("d"); }

std::vector<int64_t> Trainer::sample_batch() {
    // without replacement while the corpus lasts, uniform after that
    std::vector<int64_t> order(corpus_.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_.engine());
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < cfg_.batch; ++i) {
        if (i < static_cast<int64_t>(order.size())) {
            idx.push_back(order[static_cast<size_t>(i)]);
        } else {
            idx.push_back(rng_.uniform_int(static_cast<int64_t>(corpus_.size())));
        }
    }
    return idx;
}

EpochLog Trainer::run_epoch() {
    if (!surrogate_ready_) throw ContractError("Trainer: prepare_surrogate() must run first");
    EpochLog log;
    log.epoch = ++epoch_;
    ImagePair last_pair;
    try {
        // --- discriminator update on F(G(a)) ---
        std::vector<int64_t> idx = sample_batch();
        Tensor loss_d_acc;
        for (int64_t i : idx) {
            ImagePair pair = cfg_.augment
                                 ? augment(corpus_[static_cast<size_t>(i)],
                                           AugmentParams::sample(rng_, corpus_[i].nir.dim(1),
                                                                 corpus_[i].nir.dim(2)))
                                 : corpus_[static_cast<size_t>(i)];
            last_pair = pair;
            GeneratorOutputs outs = generator_forward(ga_, gb_, pair.nir);
            Tensor d_real = d_.forward(pair.rgb);
            Tensor d_fake = d_.forward(outs.y_rgb.detach());
            Tensor l = adversarial_losses(d_real, d_fake).loss_d;
            loss_d_acc = loss_d_acc.defined() ? add(loss_d_acc, l) : l;
        }
        Tensor loss_d =
            mul_scalar(loss_d_acc, weights_.lambda_adv / real(idx.size()));
        AdamW::zero_grad(discriminator_params());
        backward(loss_d);
        opt_d_.step(discriminator_params());
        ++d_steps_;
        log.loss_d = double(loss_d.item());

        // --- n_gen generator updates, fresh batches ---
        for (int64_t t = 0; t < cfg_.n_gen; ++t) {
            std::vector<int64_t> gidx = sample_batch();
            Tensor mse_acc, fea_acc, adv_acc;
            double psnr_acc = 0;
            for (int64_t i : gidx) {
                ImagePair pair = cfg_.augment
                                     ? augment(corpus_[static_cast<size_t>(i)],
                                               AugmentParams::sample(rng_, corpus_[i].nir.dim(1),
                                                                     corpus_[i].nir.dim(2)))
                                     : corpus_[static_cast<size_t>(i)];
                last_pair = pair;
                GeneratorOutputs outs = generator_forward(ga_, gb_, pair.nir);
                Tensor hsv_gt = Tensor::from_data(
                    {1, pair.rgb.dim(1), pair.rgb.dim(2), 3},
                    rgb_to_hsv(reshape(pair.rgb.detach(), {pair.rgb.dim(1), pair.rgb.dim(2), 3}))
                        .values());
                Tensor l_mse = add(mse_loss(outs.y_rgb, pair.rgb), mse_loss(outs.y_hsv, hsv_gt));
                Tensor l_fea = feature_consistency_loss(outs.y_rgb, pair.rgb, ae_, weights_.feature,
                                                        cfg_.msssim_scales, cfg_.msssim_window);
                Tensor d_fake = d_.forward(outs.y_rgb);
                Tensor l_adv = adversarial_losses(d_fake.detach(), d_fake).loss_g;
                mse_acc = mse_acc.defined() ? add(mse_acc, l_mse) : l_mse;
                fea_acc = fea_acc.defined() ? add(fea_acc, l_fea) : l_fea;
                adv_acc = adv_acc.defined() ? add(adv_acc, l_adv) : l_adv;
                psnr_acc += metrics::psnr(outs.y_rgb, pair.rgb);
            }
            real inv = real(1) / real(gidx.size());
            Tensor l_mse = mul_scalar(mse_acc, inv);
            Tensor l_fea = mul_scalar(fea_acc, inv);
            Tensor l_adv = mul_scalar(adv_acc, inv);
            Tensor loss_g = total_loss(l_mse, l_fea, l_adv, weights_);
            AdamW::zero_grad(generator_params());
            backward(loss_g);
            opt_g_.step(generator_params());
            ++g_steps_;
            log.loss_g = double(loss_g.item());
            log.loss_mse = double(l_mse.item());
            log.loss_fea = double(l_fea.item());
            log.psnr_train = psnr_acc / double(gidx.size());
        }
    } catch (const NumericsError& err) {
        std::cerr << "training aborted: " << err.what() << "\n";
        if (last_pair.nir.defined()) {
            auto stats = [](const Tensor& t) {
                const auto& v = t.values();
                real mn = v[0], mx = v[0], mean = 0;
                for (real x : v) {
                    mn = std::min(mn, x);
                    mx = std::max(mx, x);
                    mean += x;
                }
                std::ostringstream os;
                os << "min=" << mn << " max=" << mx << " mean=" << mean / real(v.size());
                return os.str();
            };
            std::cerr << "last batch '" << last_pair.name << "': nir " << stats(last_pair.nir)
                      << "; rgb " << stats(last_pair.rgb) << "\n";
        }
        throw;
    }
    log.step = g_steps_;
    return log;
}

double Trainer::train_set_psnr() {
    NoGradGuard ng;
    double acc = 0;
    for (const ImagePair& pair : corpus_) {
        GeneratorOutputs outs = generator_forward(ga_, gb_, pair.nir);
        acc += metrics::psnr(outs.y_rgb, pair.rgb);
    }
    return acc / double(corpus_.size());
}

std::vector<ArrayEntry> Trainer::checkpoint_entries() const {
    std::vector<ArrayEntry> entries = params_to_entries(generator_params());
    auto d_entries = params_to_entries(discriminator_params());
    entries.insert(entries.end(), d_entries.begin(), d_entries.end());
    auto ae_entries = params_to_entries(ae_.named_params("ae"));
    entries.insert(entries.end(), ae_entries.begin(), ae_entries.end());
    auto og = opt_g_.state_entries("opt_g", generator_params());
    entries.insert(entries.end(), og.begin(), og.end());
    auto od = opt_d_.state_entries("opt_d", discriminator_params());
    entries.insert(entries.end(), od.begin(), od.end());
    entries.push_back({"meta.epoch", {1}, {double(epoch_)}});
    entries.push_back({"meta.g_steps", {1}, {double(g_steps_)}});
    entries.push_back({"meta.d_steps", {1}, {double(d_steps_)}});
    return entries;
}

void Trainer::save_checkpoint(const std::string& path) const {
    write_array_container(path, checkpoint_entries());
}

void Trainer::load_checkpoint(const std::string& path) {
    std::vector<ArrayEntry> entries = read_array_container(path);
    load_params_from_entries(generator_params(), entries);
    load_params_from_entries(discriminator_params(), entries);
    load_params_from_entries(ae_.named_params("ae"), entries);
    ae_.freeze();
    surrogate_ready_ = true;
    opt_g_.load_state("opt_g", generator_params(), entries);
    opt_d_.load_state("opt_d", discriminator_params(), entries);
    std::unordered_map<std::string, const ArrayEntry*> by_name;
    for (const ArrayEntry& e : entries) by_name[e.name] = &e;
    auto meta = [&](const std::string& key) -> int64_t {
        auto it = by_name.find(key);
        return it == by_name.end() ? 0 : static_cast<int64_t>(it->second->data.at(0));
    };
    epoch_ = meta("meta.epoch");
    g_steps_ = meta("meta.g_steps");
    d_steps_ = meta("meta.d_steps");
    // deterministic continuation: reseed from (seed, epoch)
    rng_ = Rng(cfg_.seed ^ (uint64_t(epoch_) * 0x9e3779b97f4a7c15ull + 1));
}

}  // namespace colormamba
