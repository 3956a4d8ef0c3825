#include "colormamba/config.hpp"

#include <fstream>
#include <sstream>

namespace colormamba {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
    if (v == "off" || v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: bad boolean for " + key + ": " + v);
}

int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer for " + key + ": " + v);
    }
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for " + key + ": " + v);
    }
}

std::vector<int64_t> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int64_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

std::string bool_str(bool v) { return v ? "on" : "off"; }

std::string list_str(const std::vector<int64_t>& v) {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) os << ",";
        os << v[i];
    }
    return os.str();
}

template <class T>
std::string num_str(T v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (size_t hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    std::stringstream buffer;
    buffer << is.rdbuf();
    return parse_config_text(buffer.str());
}

RunConfig config_from_key_values(const std::map<std::string, std::string>& kv) {
    RunConfig cfg;
    for (const auto& [key, value] : kv) {
        if (key == "depth") cfg.model.depth = parse_int(key, value);
        else if (key == "widths") cfg.model.widths = parse_int_list(key, value);
        else if (key == "state_size") cfg.model.state_size = parse_int(key, value);
        else if (key == "agent_count") cfg.model.agent_count = parse_int(key, value);
        else if (key == "conv_kernel") cfg.model.conv_kernel = parse_int(key, value);
        else if (key == "tex_channels") cfg.model.tex_channels = parse_int(key, value);
        else if (key == "disc_width") cfg.model.disc_width = parse_int(key, value);
        else if (key == "mamba") cfg.model.use_mamba = parse_bool(key, value);
        else if (key == "attention") cfg.model.use_attention = parse_bool(key, value);
        else if (key == "padding_tokens") cfg.model.learnable_padding = parse_bool(key, value);
        else if (key == "scan") {
            if (value == "sequential") cfg.model.scan_kind = ScanKind::kSequential;
            else if (value == "parallel") cfg.model.scan_kind = ScanKind::kParallel;
            else throw ConfigError("config: scan must be sequential or parallel");
        }
        else if (key == "lr") cfg.train.lr = static_cast<real>(parse_real(key, value));
        else if (key == "beta1") cfg.train.beta1 = static_cast<real>(parse_real(key, value));
        else if (key == "beta2") cfg.train.beta2 = static_cast<real>(parse_real(key, value));
        else if (key == "weight_decay")
            cfg.train.weight_decay = static_cast<real>(parse_real(key, value));
        else if (key == "epochs") cfg.train.epochs = parse_int(key, value);
        else if (key == "batch") cfg.train.batch = parse_int(key, value);
        else if (key == "n_gen") cfg.train.n_gen = parse_int(key, value);
        else if (key == "seed") cfg.train.seed = static_cast<uint64_t>(parse_int(key, value));
        else if (key == "augment") cfg.train.augment = parse_bool(key, value);
        else if (key == "msssim_scales")
            cfg.train.msssim_scales = static_cast<int>(parse_int(key, value));
        else if (key == "msssim_window")
            cfg.train.msssim_window = static_cast<int>(parse_int(key, value));
        else if (key == "checkpoint_every") cfg.train.checkpoint_every = parse_int(key, value);
        else if (key == "ae_epochs") cfg.train.ae_epochs = parse_int(key, value);
        else if (key == "ae_lr") cfg.train.ae_lr = static_cast<real>(parse_real(key, value));
        else if (key == "ae_target_mse")
            cfg.train.ae_target_mse = static_cast<real>(parse_real(key, value));
        else if (key == "lambda_mse")
            cfg.weights.lambda_mse = static_cast<real>(parse_real(key, value));
        else if (key == "lambda_fea")
            cfg.weights.lambda_fea = static_cast<real>(parse_real(key, value));
        else if (key == "lambda_adv")
            cfg.weights.lambda_adv = static_cast<real>(parse_real(key, value));
        else if (key == "alpha")
            cfg.weights.feature.alpha = static_cast<real>(parse_real(key, value));
        else if (key == "gamma")
            cfg.weights.feature.gamma = static_cast<real>(parse_real(key, value));
        else if (key == "beta")
            cfg.weights.feature.beta = static_cast<real>(parse_real(key, value));
        else if (key == "corpus_dir") cfg.corpus_dir = value;
        else if (key == "out_dir") cfg.out_dir = value;
        else if (key == "checkpoint") cfg.checkpoint = value;
        else if (key == "log_file") cfg.log_file = value;
        else if (key == "resume") cfg.resume = parse_bool(key, value);
        else if (key == "ae_scale") cfg.ae_scale = parse_real(key, value);
        else if (key == "preset") cfg.preset = value;
        else throw ConfigError("config: unknown key " + key);
    }
    if (!cfg.preset.empty()) apply_preset(cfg, cfg.preset);
    return cfg;
}

std::map<std::string, std::string> RunConfig::to_key_values() const {
    std::map<std::string, std::string> kv;
    kv["depth"] = num_str(model.depth);
    kv["widths"] = list_str(model.widths);
    kv["state_size"] = num_str(model.state_size);
    kv["agent_count"] = num_str(model.agent_count);
    kv["conv_kernel"] = num_str(model.conv_kernel);
    kv["tex_channels"] = num_str(model.tex_channels);
    kv["disc_width"] = num_str(model.disc_width);
    kv["mamba"] = bool_str(model.use_mamba);
    kv["attention"] = bool_str(model.use_attention);
    kv["padding_tokens"] = bool_str(model.learnable_padding);
    kv["scan"] = model.scan_kind == ScanKind::kParallel ? "parallel" : "sequential";
    kv["lr"] = num_str(train.lr);
    kv["beta1"] = num_str(train.beta1);
    kv["beta2"] = num_str(train.beta2);
    kv["weight_decay"] = num_str(train.weight_decay);
    kv["epochs"] = num_str(train.epochs);
    kv["batch"] = num_str(train.batch);
    kv["n_gen"] = num_str(train.n_gen);
    kv["seed"] = num_str(train.seed);
    kv["augment"] = bool_str(train.augment);
    kv["msssim_scales"] = num_str(train.msssim_scales);
    kv["msssim_window"] = num_str(train.msssim_window);
    kv["checkpoint_every"] = num_str(train.checkpoint_every);
    kv["ae_epochs"] = num_str(train.ae_epochs);
    kv["ae_lr"] = num_str(train.ae_lr);
    kv["ae_target_mse"] = num_str(train.ae_target_mse);
    kv["lambda_mse"] = num_str(weights.lambda_mse);
    kv["lambda_fea"] = num_str(weights.lambda_fea);
    kv["lambda_adv"] = num_str(weights.lambda_adv);
    kv["alpha"] = num_str(weights.feature.alpha);
    kv["gamma"] = num_str(weights.feature.gamma);
    kv["beta"] = num_str(weights.feature.beta);
    kv["corpus_dir"] = corpus_dir;
    kv["out_dir"] = out_dir;
    kv["checkpoint"] = checkpoint;
    kv["log_file"] = log_file;
    kv["resume"] = bool_str(resume);
    kv["ae_scale"] = num_str(ae_scale);
    return kv;
}

void apply_preset(RunConfig& cfg, const std::string& preset) {
    if (preset == "wo-mamba") {
        cfg.model.use_mamba = false;
        cfg.model.use_attention = false;
        cfg.model.learnable_padding = false;
    } else if (preset == "mamba") {
        cfg.model.use_mamba = true;
        cfg.model.use_attention = false;
        cfg.model.learnable_padding = false;
    } else if (preset == "mamba-att") {
        cfg.model.use_mamba = true;
        cfg.model.use_attention = true;
        cfg.model.learnable_padding = false;
    } else if (preset == "mamba-att-padding") {
        cfg.model.use_mamba = true;
        cfg.model.use_attention = true;
        cfg.model.learnable_padding = true;
    } else {
        throw ConfigError("unknown preset " + preset);
    }
    cfg.preset = preset;
}

std::vector<std::string> preset_names() {
    return {"wo-mamba", "mamba", "mamba-att", "mamba-att-padding"};
}

}  // namespace colormamba
