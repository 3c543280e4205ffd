#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "glpnet/config.hpp"

namespace glpnet {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "num_classes", "decoder_channels", "use_lcfm", "use_gcfm", "use_decoder", "lcfm_stages",
        "aux_taps", "precision",
        "gcfm.k", "gcfm.variant",
        "backbone.channels", "backbone.dilations", "backbone.blocks_per_stage",
        "train.lr", "train.momentum", "train.weight_decay", "train.batch_size", "train.epochs",
        "train.poly_power", "train.aux_weight", "train.scale_min", "train.scale_max",
        "train.crop_h", "train.crop_w", "train.flip", "train.depth_scale_div", "train.ignore_index",
        "train.seed",
        "eval.ms_scales", "eval.ms_flip", "eval.depth_scale_div",
        "synth.height", "synth.width", "synth.num_images", "synth.num_classes",
        "synth.shapes_per_image", "synth.depth_planes", "synth.misalignment_px",
        "synth.noise_rgb", "synth.noise_depth", "synth.seed", "synth.split",
        "data.train_manifest", "data.val_manifest",
    };
    return keys;
}

std::string fmtg(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

template <typename V>
std::string join_csv(const std::vector<V>& vs) {
    std::string out;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_same_v<V, double>)
            out += fmtg(vs[i]);
        else
            out += std::to_string(vs[i]);
    }
    return out;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(trim(item));
    return parts;
}

}  // namespace

ConfigMap parse_config_text(const std::string& text, const std::string& origin) {
    ConfigMap cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        require_config(eq != std::string::npos,
                       origin + ":" + std::to_string(lineno) + ": expected `key = value`, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        require_config(!key.empty(), origin + ":" + std::to_string(lineno) + ": empty key");
        cfg[key] = value;
    }
    return cfg;
}

ConfigMap load_config_file(const std::string& path) {
    std::ifstream in(path);
    require_config(in.good(), path + ": cannot open config file");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::string serialize_config(const ConfigMap& cfg) {
    std::string out;
    for (const auto& [k, v] : cfg) out += k + " = " + v + "\n";
    return out;
}

void apply_overrides(ConfigMap& base, const ConfigMap& overrides) {
    for (const auto& [k, v] : overrides) base[k] = v;
}

void check_known_keys(const ConfigMap& cfg, const std::string& origin) {
    for (const auto& [k, _] : cfg)
        require_config(known_keys().count(k) > 0, origin + ": unknown config key '" + k + "'");
}

std::string get_str(const ConfigMap& cfg, const std::string& key, const std::string& def) {
    auto it = cfg.find(key);
    return it == cfg.end() ? def : it->second;
}

bool get_bool(const ConfigMap& cfg, const std::string& key, bool def) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return def;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::int64_t get_int(const ConfigMap& cfg, const std::string& key, std::int64_t def) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return def;
    try {
        std::size_t used = 0;
        const std::int64_t v = std::stoll(it->second, &used);
        require_config(used == it->second.size(), "");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + it->second + "'");
    }
}

double get_double(const ConfigMap& cfg, const std::string& key, double def) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return def;
    try {
        std::size_t used = 0;
        const double v = std::stod(it->second, &used);
        require_config(used == it->second.size(), "");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + it->second + "'");
    }
}

std::vector<std::int64_t> get_int_list(const ConfigMap& cfg, const std::string& key,
                                       const std::vector<std::int64_t>& def) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return def;
    if (trim(it->second).empty()) return {};
    std::vector<std::int64_t> out;
    for (const auto& part : split_csv(it->second)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoll(part, &used));
            require_config(used == part.size(), "");
        } catch (const std::exception&) {
            throw ConfigError(key + ": expected comma-separated integers, got '" + it->second + "'");
        }
    }
    return out;
}

std::vector<double> get_double_list(const ConfigMap& cfg, const std::string& key, const std::vector<double>& def) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return def;
    if (trim(it->second).empty()) return {};
    std::vector<double> out;
    for (const auto& part : split_csv(it->second)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(part, &used));
            require_config(used == part.size(), "");
        } catch (const std::exception&) {
            throw ConfigError(key + ": expected comma-separated numbers, got '" + it->second + "'");
        }
    }
    return out;
}

ModelConfig model_config_from(const ConfigMap& cfg) {
    ModelConfig m;
    m.num_classes = get_int(cfg, "num_classes", m.num_classes);
    m.decoder_channels = get_int(cfg, "decoder_channels", m.decoder_channels);
    m.use_lcfm = get_bool(cfg, "use_lcfm", m.use_lcfm);
    m.use_gcfm = get_bool(cfg, "use_gcfm", m.use_gcfm);
    m.use_decoder = get_bool(cfg, "use_decoder", m.use_decoder);
    for (auto s : get_int_list(cfg, "lcfm_stages", {}))
        m.lcfm_stages.insert(static_cast<int>(s));
    m.aux_taps = get_str(cfg, "aux_taps", m.aux_taps);
    m.gcfm.k_contexts = static_cast<int>(get_int(cfg, "gcfm.k", m.gcfm.k_contexts));
    m.gcfm.variant = gcfm_variant_from(get_str(cfg, "gcfm.variant", gcfm_variant_name(m.gcfm.variant)));
    m.backbone.stage_channels =
        get_int_list(cfg, "backbone.channels", m.backbone.stage_channels);
    std::vector<std::int64_t> dil_def(m.backbone.last_stage_dilations.begin(), m.backbone.last_stage_dilations.end());
    m.backbone.last_stage_dilations.clear();
    for (auto d : get_int_list(cfg, "backbone.dilations", dil_def))
        m.backbone.last_stage_dilations.push_back(static_cast<int>(d));
    m.backbone.blocks_per_stage = static_cast<int>(get_int(cfg, "backbone.blocks_per_stage", m.backbone.blocks_per_stage));
    m.normalize();
    m.validate();
    return m;
}

TrainConfig train_config_from(const ConfigMap& cfg) {
    TrainConfig t;
    t.lr = get_double(cfg, "train.lr", t.lr);
    t.momentum = get_double(cfg, "train.momentum", t.momentum);
    t.weight_decay = get_double(cfg, "train.weight_decay", t.weight_decay);
    t.batch_size = get_int(cfg, "train.batch_size", t.batch_size);
    t.epochs = get_int(cfg, "train.epochs", t.epochs);
    t.poly_power = get_double(cfg, "train.poly_power", t.poly_power);
    t.aux_weight = get_double(cfg, "train.aux_weight", t.aux_weight);
    t.scale_min = get_double(cfg, "train.scale_min", t.scale_min);
    t.scale_max = get_double(cfg, "train.scale_max", t.scale_max);
    t.crop_h = get_int(cfg, "train.crop_h", t.crop_h);
    t.crop_w = get_int(cfg, "train.crop_w", t.crop_w);
    t.flip = get_bool(cfg, "train.flip", t.flip);
    t.depth_scale_div = get_bool(cfg, "train.depth_scale_div", t.depth_scale_div);
    t.ignore_index = get_int(cfg, "train.ignore_index", t.ignore_index);
    t.seed = static_cast<std::uint64_t>(get_int(cfg, "train.seed", static_cast<std::int64_t>(t.seed)));
    t.validate();
    return t;
}

EvalConfig eval_config_from(const ConfigMap& cfg) {
    EvalConfig e;
    e.ms_scales = get_double_list(cfg, "eval.ms_scales", e.ms_scales);
    e.ms_flip = get_bool(cfg, "eval.ms_flip", e.ms_flip);
    e.depth_scale_div = get_bool(cfg, "eval.depth_scale_div", e.depth_scale_div);
    e.validate();
    return e;
}

SynthConfig synth_config_from(const ConfigMap& cfg) {
    SynthConfig s;
    s.height = get_int(cfg, "synth.height", s.height);
    s.width = get_int(cfg, "synth.width", s.width);
    s.num_images = get_int(cfg, "synth.num_images", s.num_images);
    s.num_classes = get_int(cfg, "synth.num_classes", s.num_classes);
    s.shapes_per_image = static_cast<int>(get_int(cfg, "synth.shapes_per_image", s.shapes_per_image));
    s.depth_planes = static_cast<int>(get_int(cfg, "synth.depth_planes", s.depth_planes));
    s.misalignment_px = static_cast<int>(get_int(cfg, "synth.misalignment_px", s.misalignment_px));
    s.noise_rgb = get_double(cfg, "synth.noise_rgb", s.noise_rgb);
    s.noise_depth = get_double(cfg, "synth.noise_depth", s.noise_depth);
    s.seed = static_cast<std::uint64_t>(get_int(cfg, "synth.seed", static_cast<std::int64_t>(s.seed)));
    s.split = get_str(cfg, "synth.split", s.split);
    s.validate();
    return s;
}

ConfigMap config_of(const ModelConfig& m) {
    ConfigMap cfg;
    cfg["num_classes"] = std::to_string(m.num_classes);
    cfg["decoder_channels"] = std::to_string(m.decoder_channels);
    cfg["use_lcfm"] = m.use_lcfm ? "true" : "false";
    cfg["use_gcfm"] = m.use_gcfm ? "true" : "false";
    cfg["use_decoder"] = m.use_decoder ? "true" : "false";
    cfg["lcfm_stages"] = join_csv(std::vector<std::int64_t>(m.lcfm_stages.begin(), m.lcfm_stages.end()));
    cfg["aux_taps"] = m.aux_taps;
    cfg["gcfm.k"] = std::to_string(m.gcfm.k_contexts);
    cfg["gcfm.variant"] = gcfm_variant_name(m.gcfm.variant);
    cfg["backbone.channels"] = join_csv(m.backbone.stage_channels);
    cfg["backbone.dilations"] =
        join_csv(std::vector<std::int64_t>(m.backbone.last_stage_dilations.begin(), m.backbone.last_stage_dilations.end()));
    cfg["backbone.blocks_per_stage"] = std::to_string(m.backbone.blocks_per_stage);
    return cfg;
}

ConfigMap config_of(const TrainConfig& t) {
    ConfigMap cfg;
    cfg["train.lr"] = fmtg(t.lr);
    cfg["train.momentum"] = fmtg(t.momentum);
    cfg["train.weight_decay"] = fmtg(t.weight_decay);
    cfg["train.batch_size"] = std::to_string(t.batch_size);
    cfg["train.epochs"] = std::to_string(t.epochs);
    cfg["train.poly_power"] = fmtg(t.poly_power);
    cfg["train.aux_weight"] = fmtg(t.aux_weight);
    cfg["train.scale_min"] = fmtg(t.scale_min);
    cfg["train.scale_max"] = fmtg(t.scale_max);
    cfg["train.crop_h"] = std::to_string(t.crop_h);
    cfg["train.crop_w"] = std::to_string(t.crop_w);
    cfg["train.flip"] = t.flip ? "true" : "false";
    cfg["train.depth_scale_div"] = t.depth_scale_div ? "true" : "false";
    cfg["train.ignore_index"] = std::to_string(t.ignore_index);
    cfg["train.seed"] = std::to_string(t.seed);
    return cfg;
}

ConfigMap config_of(const EvalConfig& e) {
    ConfigMap cfg;
    cfg["eval.ms_scales"] = join_csv(e.ms_scales);
    cfg["eval.ms_flip"] = e.ms_flip ? "true" : "false";
    cfg["eval.depth_scale_div"] = e.depth_scale_div ? "true" : "false";
    return cfg;
}

ConfigMap config_of(const SynthConfig& s) {
    ConfigMap cfg;
    cfg["synth.height"] = std::to_string(s.height);
    cfg["synth.width"] = std::to_string(s.width);
    cfg["synth.num_images"] = std::to_string(s.num_images);
    cfg["synth.num_classes"] = std::to_string(s.num_classes);
    cfg["synth.shapes_per_image"] = std::to_string(s.shapes_per_image);
    cfg["synth.depth_planes"] = std::to_string(s.depth_planes);
    cfg["synth.misalignment_px"] = std::to_string(s.misalignment_px);
    cfg["synth.noise_rgb"] = fmtg(s.noise_rgb);
    cfg["synth.noise_depth"] = fmtg(s.noise_depth);
    cfg["synth.seed"] = std::to_string(s.seed);
    cfg["synth.split"] = s.split;
    return cfg;
}

}  // namespace glpnet
