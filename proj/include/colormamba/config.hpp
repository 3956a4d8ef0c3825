#pragma once

#include <map>

#include "colormamba/train.hpp"

namespace colormamba {

// Flat key=value configuration with '#' comments. Presets flip only the
// three ablation toggles.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    LossWeights weights;
    std::string corpus_dir;
    std::string out_dir = ".";
    std::string checkpoint;
    std::string log_file;
    bool resume = false;
    double ae_scale = 1.0;  // eval AE column scaling
    std::string preset;

    // The flat view used for parsing, dumping and the preset-diff contract.
    std::map<std::string, std::string> to_key_values() const;
};

std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> parse_config_file(const std::string& path);

RunConfig config_from_key_values(const std::map<std::string, std::string>& kv);

// Table-2 ablation presets: wo-mamba, mamba, mamba-att, mamba-att-padding.
void apply_preset(RunConfig& cfg, const std::string& preset);
std::vector<std::string> preset_names();

}  // namespace colormamba
