// colormamba: NIR-to-RGB spectral translation toolkit.
//
// Verbs: infer, train, bench, gradcheck, eval. Exit codes:
//   0 success, 1 gradient check failure, 2 missing/bad checkpoint,
//   3 unreadable image, 4 input shape rejected, 5 corpus pairing error,
//   64 configuration error, 70 internal error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "colormamba/bench.hpp"
#include "colormamba/config.hpp"
#include "colormamba/gradcheck.hpp"
#include "colormamba/image_io.hpp"
#include "colormamba/metrics.hpp"
#include "colormamba/train.hpp"

namespace fs = std::filesystem;
using namespace colormamba;

namespace {

constexpr int kExitGradFail = 1;
constexpr int kExitCheckpoint = 2;
constexpr int kExitBadImage = 3;
constexpr int kExitBadShape = 4;
constexpr int kExitCorpus = 5;
constexpr int kExitConfig = 64;
constexpr int kExitInternal = 70;

struct GlobalOpts {
    std::string config_path;
    std::string preset;
    int64_t seed = -1;
};

RunConfig load_run_config(const GlobalOpts& g) {
    RunConfig cfg;
    if (!g.config_path.empty()) cfg = config_from_key_values(parse_config_file(g.config_path));
    if (!g.preset.empty()) apply_preset(cfg, g.preset);
    if (g.seed >= 0) cfg.train.seed = static_cast<uint64_t>(g.seed);
    return cfg;
}

std::vector<ImagePair> load_corpus(const std::string& dir, std::vector<std::string>& orphans) {
    std::vector<ImagePair> corpus;
    if (!fs::is_directory(dir)) return corpus;
    std::set<std::string> stems_nir, stems_rgb;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::string stem = entry.path().stem().string();
        if (ext == ".pgm") stems_nir.insert(stem);
        if (ext == ".png" || ext == ".ppm") stems_rgb.insert(stem);
    }
    for (const std::string& stem : stems_nir) {
        if (!stems_rgb.count(stem)) {
            orphans.push_back(stem + " (NIR without RGB)");
            continue;
        }
        ImagePair pair;
        pair.name = stem;
        pair.nir = image_to_tensor(read_pnm(dir + "/" + stem + ".pgm"));
        std::string rgb_path = dir + "/" + stem + ".png";
        if (!fs::exists(rgb_path)) rgb_path = dir + "/" + stem + ".ppm";
        pair.rgb = image_to_tensor(read_image(rgb_path));
        corpus.push_back(std::move(pair));
    }
    for (const std::string& stem : stems_rgb)
        if (!stems_nir.count(stem)) orphans.push_back(stem + " (RGB without NIR)");
    return corpus;
}

int cmd_infer(const GlobalOpts& g, const std::string& input, const std::string& output,
              const std::string& checkpoint_flag) {
    RunConfig cfg = load_run_config(g);
    std::string ckpt = checkpoint_flag.empty() ? cfg.checkpoint : checkpoint_flag;
    if (ckpt.empty() || !fs::exists(ckpt)) {
        std::cerr << "checkpoint not found: " << (ckpt.empty() ? "(none given)" : ckpt) << "\n";
        return kExitCheckpoint;
    }

    ImageU8 raw;
    try {
        raw = read_image(input);
    } catch (const std::exception& err) {
        std::cerr << "cannot read input image: " << err.what() << "\n";
        return kExitBadImage;
    }
    if (raw.channels != 1) {
        std::cerr << "input must be a single-channel image, got " << raw.channels
                  << " channels\n";
        return kExitBadImage;
    }
    Tensor nir = image_to_tensor(raw);

    try {
        check_divisibility(cfg.model, nir.dim(1), nir.dim(2));
    } catch (const ShapeError& err) {
        std::cerr << err.what() << "\n";
        return kExitBadShape;
    }

    try {
        Rng rng(cfg.train.seed);
        GeneratorB gb = GeneratorB::init(cfg.model, rng);
        GeneratorA ga = GeneratorA::init(cfg.model, rng);
        std::vector<ArrayEntry> entries = read_array_container(ckpt);
        load_params_from_entries(gb.named_params("gb"), entries);
        load_params_from_entries(ga.named_params("ga"), entries);
        NoGradGuard ng;
        GeneratorOutputs outs = generator_forward(ga, gb, nir);
        write_png(output, tensor_to_image(outs.y_rgb));
    } catch (const std::exception& err) {
        std::cerr << "inference failed: " << err.what() << "\n";
        return kExitCheckpoint;
    }
    return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& corpus_flag, const std::string& out_flag,
              bool resume_flag) {
    RunConfig cfg = load_run_config(g);
    if (!corpus_flag.empty()) cfg.corpus_dir = corpus_flag;
    if (!out_flag.empty()) cfg.out_dir = out_flag;
    if (resume_flag) cfg.resume = true;

    std::vector<std::string> orphans;
    std::vector<ImagePair> corpus = load_corpus(cfg.corpus_dir, orphans);
    if (!orphans.empty()) {
        std::cerr << "unpaired corpus files:\n";
        for (const std::string& o : orphans) std::cerr << "  " << o << "\n";
        return kExitCorpus;
    }
    if (corpus.empty()) {
        std::cerr << "no NIR/RGB pairs found in " << cfg.corpus_dir << "\n";
        return kExitCorpus;
    }

    fs::create_directories(cfg.out_dir);
    std::string log_path =
        cfg.log_file.empty() ? cfg.out_dir + "/train_log.txt" : cfg.log_file;
    std::string latest = cfg.out_dir + "/ckpt_latest.cmk";

    Trainer trainer(cfg.model, cfg.train, cfg.weights, corpus);
    if (cfg.resume) {
        std::string from = cfg.checkpoint.empty() ? latest : cfg.checkpoint;
        if (!fs::exists(from)) {
            std::cerr << "resume requested but checkpoint missing: " << from << "\n";
            return kExitCheckpoint;
        }
        trainer.load_checkpoint(from);
        std::cout << "resumed from " << from << " at epoch " << trainer.epoch() << "\n";
    } else {
        real ae_mse = trainer.prepare_surrogate();
        std::cout << "surrogate autoencoder frozen at reconstruction mse " << ae_mse << "\n";
    }

    std::ofstream log(log_path, cfg.resume ? std::ios::app : std::ios::trunc);
    if (!cfg.resume) log << format_log_header() << "\n";

    int64_t target_epoch = cfg.train.epochs;
    while (trainer.epoch() < target_epoch) {
        EpochLog rec = trainer.run_epoch();
        std::string line = format_log_record(rec);
        log << line << "\n";
        log.flush();
        std::cout << line << "\n";
        if (cfg.train.checkpoint_every > 0 && rec.epoch % cfg.train.checkpoint_every == 0) {
            trainer.save_checkpoint(cfg.out_dir + "/ckpt_epoch_" + std::to_string(rec.epoch) +
                                    ".cmk");
        }
        trainer.save_checkpoint(latest);
    }
    std::cout << "final train-set psnr: " << trainer.train_set_psnr() << " dB\n";
    return 0;
}

int cmd_bench(const GlobalOpts& g, bool scan2d_mode) {
    RunConfig cfg = load_run_config(g);
    uint64_t seed = cfg.train.seed;
    if (scan2d_mode) {
        std::vector<std::array<int64_t, 3>> hwn = {{16, 16, 8}, {32, 32, 8}, {64, 64, 8}};
        std::cout << bench::format_table(bench::scan2d(hwn, seed));
    } else {
        std::vector<int64_t> lens = {256, 1024, 4096, 16384};
        std::cout << bench::format_table(bench::scan_kernels(lens, 16, 1, seed));
        double ratio = bench::sequential_runtime_ratio(1024, 4096, 16, seed);
        std::cout << "sequential t(4096)/t(1024) = " << ratio << "\n";
    }
    return 0;
}

int cmd_gradcheck(const GlobalOpts& g, double tolerance, const std::string& fault_block) {
    RunConfig cfg = load_run_config(g);
    auto results = gradcheck::run_suite(cfg.train.seed, tolerance, fault_block);
    std::cout << gradcheck::format_results(results);
    for (const auto& r : results) {
        if (!r.pass) {
            std::cerr << "gradient check failed for block " << r.block << "\n";
            return kExitGradFail;
        }
    }
    return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& pred_dir, const std::string& gt_dir,
             bool csv, double ae_scale_flag) {
    RunConfig cfg = load_run_config(g);
    double ae_scale = ae_scale_flag > 0 ? ae_scale_flag : cfg.ae_scale;

    auto list_images = [](const std::string& dir) {
        std::map<std::string, std::string> out;  // stem -> path
        if (!fs::is_directory(dir)) return out;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            std::string ext = entry.path().extension().string();
            if (ext == ".png" || ext == ".ppm" || ext == ".pgm")
                out[entry.path().stem().string()] = entry.path().string();
        }
        return out;
    };
    auto preds = list_images(pred_dir);
    auto gts = list_images(gt_dir);
    if (preds.empty()) {
        std::cerr << "no images found in " << pred_dir << "\n";
        return kExitCorpus;
    }
    std::vector<std::string> unmatched;
    for (const auto& [stem, path] : preds)
        if (!gts.count(stem)) unmatched.push_back(stem + " (prediction without reference)");
    for (const auto& [stem, path] : gts)
        if (!preds.count(stem)) unmatched.push_back(stem + " (reference without prediction)");
    if (!unmatched.empty()) {
        std::cerr << "unmatched files:\n";
        for (const std::string& u : unmatched) std::cerr << "  " << u << "\n";
        return kExitCorpus;
    }

    std::vector<std::pair<std::string, metrics::MetricReport>> rows;
    for (const auto& [stem, path] : preds) {
        Tensor pred = image_to_tensor(read_image(path));
        Tensor ref = image_to_tensor(read_image(gts[stem]));
        if (pred.shape() != ref.shape()) {
            std::cerr << stem << ": prediction and reference shapes differ\n";
            return kExitBadShape;
        }
        rows.emplace_back(stem, metrics::evaluate_pair(pred, ref));
    }
    std::cout << metrics::format_table(rows, csv, ae_scale);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"colormamba: NIR-to-RGB spectral translation toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--config", g.config_path, "key=value configuration file");
    app.add_option("--seed", g.seed, "override the configured RNG seed");
    app.add_option("--preset", g.preset, "ablation preset")
        ->check(CLI::IsMember(preset_names()));

    auto* infer = app.add_subcommand("infer", "colorize one NIR image");
    std::string in_path, out_path, ckpt_flag;
    infer->add_option("input", in_path, "NIR image (PGM or PNG)")->required();
    infer->add_option("output", out_path, "output RGB PNG path")->required();
    infer->add_option("--checkpoint", ckpt_flag, "checkpoint container");

    auto* train = app.add_subcommand("train", "train on a paired NIR/RGB corpus");
    std::string corpus_flag, out_flag;
    bool resume_flag = false;
    train->add_option("--corpus", corpus_flag, "corpus directory (name.pgm + name.png pairs)");
    train->add_option("--out", out_flag, "output directory for checkpoints and logs");
    train->add_flag("--resume", resume_flag, "continue from the latest checkpoint");

    auto* bench_cmd = app.add_subcommand("bench", "time the scan kernels");
    bool scan2d_mode = false;
    bench_cmd->add_flag("--scan2d", scan2d_mode, "time the full 2D scan instead");

    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    double tolerance = 1e-4;
    std::string fault_block;
    grad->add_option("--tolerance", tolerance, "max relative error");
    grad->add_option("--inject-fault", fault_block,
                     "corrupt one block's analytic gradient (checker self-test)");

    auto* eval = app.add_subcommand("eval", "metric report over matched image directories");
    std::string pred_dir, gt_dir;
    bool csv = false;
    double ae_scale_flag = 0;
    eval->add_option("pred_dir", pred_dir, "predictions directory")->required();
    eval->add_option("gt_dir", gt_dir, "references directory")->required();
    eval->add_flag("--csv", csv, "comma-separated output");
    eval->add_option("--ae-scale", ae_scale_flag, "scale factor for the AE column");

    CLI11_PARSE(app, argc, argv);

    try {
        if (infer->parsed()) return cmd_infer(g, in_path, out_path, ckpt_flag);
        if (train->parsed()) return cmd_train(g, corpus_flag, out_flag, resume_flag);
        if (bench_cmd->parsed()) return cmd_bench(g, scan2d_mode);
        if (grad->parsed()) return cmd_gradcheck(g, tolerance, fault_block);
        if (eval->parsed()) return cmd_eval(g, pred_dir, gt_dir, csv, ae_scale_flag);
    } catch (const ConfigError& err) {
        std::cerr << "configuration error: " << err.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitInternal;
    }
    return kExitConfig;
}
