#include <filesystem>
#include <fstream>

#include "glpnet/checkpoint.hpp"

namespace fs = std::filesystem;

namespace glpnet {

template <typename T>
std::string save_checkpoint(const std::string& dir, const ModelT<T>& model, const ConfigMap& resolved) {
    fs::create_directories(dir);
    NamedTensors<T> tensors;
    tensors.reserve(model.store.entries.size());
    for (const auto& [name, node] : model.store.entries) tensors.emplace_back(name, node->value);
    const std::string ckpt = (fs::path(dir) / "checkpoint.glt").string();
    save_bundle(ckpt, tensors);
    std::ofstream out(fs::path(dir) / "config.resolved");
    require_data(out.good(), dir + ": cannot write config.resolved");
    out << serialize_config(resolved);
    return ckpt;
}

ConfigMap checkpoint_config(const std::string& ckpt_path) {
    const fs::path cfg_path = fs::path(ckpt_path).parent_path() / "config.resolved";
    require_data(fs::exists(cfg_path), ckpt_path + ": no config.resolved beside the checkpoint");
    return load_config_file(cfg_path.string());
}

template <typename T>
void load_weights(ModelT<T>& model, const std::string& ckpt_path) {
    const NamedTensors<T> tensors = load_bundle<T>(ckpt_path);
    require_data(tensors.size() == model.store.entries.size(),
                 ckpt_path + ": holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                     std::to_string(model.store.entries.size()));
    for (const auto& [name, t] : tensors) {
        VarT<T> node = model.store.find(name);
        require_data(node != nullptr, ckpt_path + ": unknown tensor '" + name + "'");
        require_data(node->value.shape == t.shape, ckpt_path + ": tensor '" + name + "' has shape " +
                                                       shape_str(t.shape) + ", model expects " +
                                                       shape_str(node->value.shape));
        node->value = t;
    }
}

template <typename T>
ModelT<T> load_checkpoint(const std::string& ckpt_path) {
    require_data(fs::exists(ckpt_path), ckpt_path + ": checkpoint not found");
    const ConfigMap cfg = checkpoint_config(ckpt_path);
    ModelConfig mcfg = model_config_from(cfg);
    const auto seed = static_cast<std::uint64_t>(get_int(cfg, "train.seed", 1));
    ModelT<T> model(mcfg, seed);
    load_weights(model, ckpt_path);
    return model;
}

template std::string save_checkpoint<float>(const std::string&, const ModelT<float>&, const ConfigMap&);
template std::string save_checkpoint<double>(const std::string&, const ModelT<double>&, const ConfigMap&);
template ModelT<float> load_checkpoint<float>(const std::string&);
template ModelT<double> load_checkpoint<double>(const std::string&);
template void load_weights<float>(ModelT<float>&, const std::string&);
template void load_weights<double>(ModelT<double>&, const std::string&);

}  // namespace glpnet
