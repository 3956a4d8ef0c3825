#pragma once

#include <optional>

#include "colormamba/checkpoint.hpp"
#include "colormamba/losses.hpp"
#include "colormamba/networks.hpp"

namespace colormamba {

struct TrainConfig {
    real lr = real(1e-4);
    real beta1 = real(0.5);
    real beta2 = real(0.999);
    real adam_eps = real(1e-8);
    real weight_decay = real(0.5);
    int64_t epochs = 300;
    int64_t batch = 8;
    int64_t n_gen = 1;  // generator iterations per discriminator iteration
    uint64_t seed = 0;
    bool augment = true;
    int msssim_scales = 3;
    int msssim_window = 11;
    int64_t checkpoint_every = 50;
    int64_t ae_epochs = 600;
    real ae_lr = real(5e-3);
    real ae_target_mse = real(0.01);
};

// Decoupled-weight-decay adaptive moments.
class AdamW {
public:
    AdamW() = default;
    AdamW(real lr, real beta1, real beta2, real eps, real weight_decay)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

    void step(const NamedParams& params);
    static void zero_grad(const NamedParams& params);
    int64_t steps() const { return t_; }

    std::vector<ArrayEntry> state_entries(const std::string& prefix,
                                          const NamedParams& params) const;
    void load_state(const std::string& prefix, const NamedParams& params,
                    const std::vector<ArrayEntry>& entries);

private:
    struct Slot {
        std::vector<real> m, v;
    };
    real lr_ = real(1e-4), beta1_ = real(0.9), beta2_ = real(0.999), eps_ = real(1e-8),
         weight_decay_ = 0;
    int64_t t_ = 0;
    std::unordered_map<detail::Node*, Slot> slots_;
};

// Paired augmentation: identical geometric transform on both images,
// contrast on the NIR side only.
struct AugmentParams {
    real scale = 1;  // resize factor in [1, 1.3]
    int64_t crop_y = 0, crop_x = 0;
    bool mirror = false;
    real contrast = 1;  // NIR only

    static AugmentParams identity() { return {}; }
    static AugmentParams sample(Rng& rng, int64_t h, int64_t w);
};

struct ImagePair {
    std::string name;
    Tensor nir;  // (1,H,W,1) in [0,1]
    Tensor rgb;  // (1,H,W,3) in [0,1]
};

ImagePair augment(const ImagePair& pair, const AugmentParams& p);

// Trains the tiny autoencoder on the corpus RGB images to reconstruction
// MSE below the target, then freezes it. Returns the final MSE.
real train_surrogate_autoencoder(TinyAutoencoder& ae, const std::vector<ImagePair>& corpus,
                                 const TrainConfig& cfg, Rng& rng);

struct EpochLog {
    int64_t epoch = 0;
    int64_t step = 0;  // generator step counter after the epoch
    double loss_d = 0;
    double loss_g = 0;
    double loss_mse = 0;
    double loss_fea = 0;
    double psnr_train = 0;
};

std::string format_log_header();
std::string format_log_record(const EpochLog& log);

// Algorithm-1 style alternating trainer: one discriminator update then
// n_gen generator updates per epoch, fresh batches each time.
class Trainer {
public:
    Trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const LossWeights& weights,
            std::vector<ImagePair> corpus);

    // Trains + freezes the surrogate encoder. Must run before epochs.
    real prepare_surrogate();

    EpochLog run_epoch();

    int64_t epoch() const { return epoch_; }
    int64_t g_steps() const { return g_steps_; }
    int64_t d_steps() const { return d_steps_; }

    const GeneratorA& generator_a() const { return ga_; }
    const GeneratorB& generator_b() const { return gb_; }
    const Discriminator& discriminator() const { return d_; }
    const TinyAutoencoder& surrogate() const { return ae_; }

    NamedParams generator_params() const;
    NamedParams discriminator_params() const;

    std::vector<ArrayEntry> checkpoint_entries() const;
    void save_checkpoint(const std::string& path) const;
    void load_checkpoint(const std::string& path);

    // Mean train-set PSNR of the fused output against ground truth.
    double train_set_psnr();

private:
    std::vector<int64_t> sample_batch();

    ModelConfig model_cfg_;
    TrainConfig cfg_;
    LossWeights weights_;
    std::vector<ImagePair> corpus_;
    GeneratorA ga_;
    GeneratorB gb_;
    Discriminator d_;
    TinyAutoencoder ae_;
    AdamW opt_g_, opt_d_;
    Rng rng_;
    int64_t epoch_ = 0, g_steps_ = 0, d_steps_ = 0;
    bool surrogate_ready_ = false;
};

}  // namespace colormamba
