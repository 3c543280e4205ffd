#pragma once

#include "glpnet/config.hpp"

namespace glpnet {

// writes <dir>/checkpoint.glt plus <dir>/config.resolved
template <typename T>
std::string save_checkpoint(const std::string& dir, const ModelT<T>& model, const ConfigMap& resolved);

// the resolved config stored beside a checkpoint file
ConfigMap checkpoint_config(const std::string& ckpt_path);

// rebuilds the model from the sibling config, then loads the weights;
// name or shape mismatches raise DataError
template <typename T>
ModelT<T> load_checkpoint(const std::string& ckpt_path);

template <typename T>
void load_weights(ModelT<T>& model, const std::string& ckpt_path);

extern template std::string save_checkpoint<float>(const std::string&, const ModelT<float>&, const ConfigMap&);
extern template std::string save_checkpoint<double>(const std::string&, const ModelT<double>&, const ConfigMap&);
extern template ModelT<float> load_checkpoint<float>(const std::string&);
extern template ModelT<double> load_checkpoint<double>(const std::string&);
extern template void load_weights<float>(ModelT<float>&, const std::string&);
extern template void load_weights<double>(ModelT<double>&, const std::string&);

}  // namespace glpnet
