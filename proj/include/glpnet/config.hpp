#pragma once

#include <map>
#include <string>
#include <vector>

#include "glpnet/dataio.hpp"
#include "glpnet/network.hpp"
#include "glpnet/training.hpp"

namespace glpnet {

// flat `key = value` settings; std::map keeps serialization order stable
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text, const std::string& origin);
ConfigMap load_config_file(const std::string& path);
std::string serialize_config(const ConfigMap& cfg);  // one sorted `key = value` line each
void apply_overrides(ConfigMap& base, const ConfigMap& overrides);

// every key the tools understand; unknown keys are rejected up front
void check_known_keys(const ConfigMap& cfg, const std::string& origin);

std::string get_str(const ConfigMap& cfg, const std::string& key, const std::string& def);
bool get_bool(const ConfigMap& cfg, const std::string& key, bool def);
std::int64_t get_int(const ConfigMap& cfg, const std::string& key, std::int64_t def);
double get_double(const ConfigMap& cfg, const std::string& key, double def);
std::vector<std::int64_t> get_int_list(const ConfigMap& cfg, const std::string& key,
                                       const std::vector<std::int64_t>& def);
std::vector<double> get_double_list(const ConfigMap& cfg, const std::string& key, const std::vector<double>& def);

ModelConfig model_config_from(const ConfigMap& cfg);
TrainConfig train_config_from(const ConfigMap& cfg);
EvalConfig eval_config_from(const ConfigMap& cfg);
SynthConfig synth_config_from(const ConfigMap& cfg);

// the reverse direction, used for the resolved-config echo and checkpoints
ConfigMap config_of(const ModelConfig& m);
ConfigMap config_of(const TrainConfig& t);
ConfigMap config_of(const EvalConfig& e);
ConfigMap config_of(const SynthConfig& s);

}  // namespace glpnet
