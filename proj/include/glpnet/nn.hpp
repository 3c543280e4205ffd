#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "glpnet/ops.hpp"
#include "glpnet/rng.hpp"

namespace glpnet {

// Registry of named parameters and buffers. Insertion order is the
// checkpoint order; names must be unique.
template <typename T>
struct ParamStoreT {
    std::vector<std::pair<std::string, VarT<T>>> entries;
    std::unordered_map<std::string, std::size_t> index;

    VarT<T> param(const std::string& name, TensorT<T> init);
    VarT<T> buffer(const std::string& name, TensorT<T> init);
    VarT<T> find(const std::string& name) const;

    std::vector<VarT<T>> trainable() const;
    void zero_grad();
    std::int64_t param_count() const;   // trainable elements
    std::int64_t tensor_count() const { return static_cast<std::int64_t>(entries.size()); }
};

template <typename T>
struct Conv2dT {
    VarT<T> weight;  // [Cout,Cin,K,K]
    VarT<T> bias;    // [Cout] or empty
    Conv2dSpec spec;

    Conv2dT() = default;
    // zero_init makes the layer start as the zero map; otherwise He init
    Conv2dT(ParamStoreT<T>& store, const std::string& prefix, std::int64_t cin, std::int64_t cout,
            int k, Conv2dSpec spec, Rng& rng, bool with_bias = true, bool zero_init = false);

    VarT<T> forward(const VarT<T>& x) const { return conv2d(x, weight, bias, spec); }
};

template <typename T>
struct BatchNorm2dT {
    VarT<T> gamma, beta;
    VarT<T> running_mean, running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);

    BatchNorm2dT() = default;
    BatchNorm2dT(ParamStoreT<T>& store, const std::string& prefix, std::int64_t channels);

    VarT<T> forward(const VarT<T>& x, bool training) const {
        return batch_norm(x, gamma, beta, running_mean, running_var, training, momentum, eps);
    }
};

// bias-free linear map over the last axis: [..., in] -> [..., out]
template <typename T>
struct LinearT {
    VarT<T> weight;  // [out, in]

    LinearT() = default;
    LinearT(ParamStoreT<T>& store, const std::string& prefix, std::int64_t in, std::int64_t out,
            Rng& rng, bool zero_init = false);

    VarT<T> forward(const VarT<T>& x) const;
};

extern template struct ParamStoreT<float>;
extern template struct ParamStoreT<double>;
extern template struct Conv2dT<float>;
extern template struct Conv2dT<double>;
extern template struct BatchNorm2dT<float>;
extern template struct BatchNorm2dT<double>;
extern template struct LinearT<float>;
extern template struct LinearT<double>;

}  // namespace glpnet
