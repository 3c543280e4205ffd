#include <cmath>

#include "glpnet/nn.hpp"

namespace glpnet {

template <typename T>
VarT<T> ParamStoreT<T>::param(const std::string& name, TensorT<T> init) {
    require_contract(!index.count(name), "param store: duplicate name '" + name + "'");
    auto v = make_param<T>(std::move(init), name);
    index.emplace(name, entries.size());
    entries.emplace_back(name, v);
    return v;
}

template <typename T>
VarT<T> ParamStoreT<T>::buffer(const std::string& name, TensorT<T> init) {
    require_contract(!index.count(name), "param store: duplicate name '" + name + "'");
    auto v = make_var<T>(std::move(init), false);
    v->name = name;
    index.emplace(name, entries.size());
    entries.emplace_back(name, v);
    return v;
}

template <typename T>
VarT<T> ParamStoreT<T>::find(const std::string& name) const {
    auto it = index.find(name);
    return it == index.end() ? nullptr : entries[it->second].second;
}

template <typename T>
std::vector<VarT<T>> ParamStoreT<T>::trainable() const {
    std::vector<VarT<T>> out;
    for (const auto& [name, v] : entries)
        if (v->is_param) out.push_back(v);
    return out;
}

template <typename T>
void ParamStoreT<T>::zero_grad() {
    for (const auto& [name, v] : entries)
        if (v->is_param) v->zero_grad();
}

template <typename T>
std::int64_t ParamStoreT<T>::param_count() const {
    std::int64_t n = 0;
    for (const auto& [name, v] : entries)
        if (v->is_param) n += v->value.numel();
    return n;
}

template <typename T>
Conv2dT<T>::Conv2dT(ParamStoreT<T>& store, const std::string& prefix, std::int64_t cin,
                    std::int64_t cout, int k, Conv2dSpec spec_, Rng& rng, bool with_bias,
                    bool zero_init)
    : spec(spec_) {
    TensorT<T> w(Shape{cout, cin, k, k});
    if (!zero_init) {
        const double std = std::sqrt(2.0 / static_cast<double>(cin * k * k));
        for (auto& v : w.data) v = static_cast<T>(rng.normal(0.0, std));
    }
    weight = store.param(prefix + ".weight", std::move(w));
    if (with_bias) bias = store.param(prefix + ".bias", TensorT<T>(Shape{cout}));
}

template <typename T>
BatchNorm2dT<T>::BatchNorm2dT(ParamStoreT<T>& store, const std::string& prefix, std::int64_t channels) {
    gamma = store.param(prefix + ".gamma", TensorT<T>(Shape{channels}, T(1)));
    beta = store.param(prefix + ".beta", TensorT<T>(Shape{channels}));
    running_mean = store.buffer(prefix + ".running_mean", TensorT<T>(Shape{channels}));
    running_var = store.buffer(prefix + ".running_var", TensorT<T>(Shape{channels}, T(1)));
}

template <typename T>
LinearT<T>::LinearT(ParamStoreT<T>& store, const std::string& prefix, std::int64_t in,
                    std::int64_t out, Rng& rng, bool zero_init) {
    TensorT<T> w(Shape{out, in});
    if (!zero_init) {
        const double std = std::sqrt(2.0 / static_cast<double>(in));
        for (auto& v : w.data) v = static_cast<T>(rng.normal(0.0, std));
    }
    weight = store.param(prefix + ".weight", std::move(w));
}

template <typename T>
VarT<T> LinearT<T>::forward(const VarT<T>& x) const {
    const Shape& s = x->value.shape;
    require_dim(!s.empty() && s.back() == weight->value.dim(1),
                "linear: input " + shape_str(s) + " vs weight " + shape_str(weight->value.shape));
    const std::int64_t in = weight->value.dim(1);
    const std::int64_t out = weight->value.dim(0);
    const std::int64_t rows = x->value.numel() / in;
    auto flat = reshape(x, Shape{rows, in});
    auto y = matmul(flat, transpose(weight));
    Shape out_shape = s;
    out_shape.back() = out;
    return reshape(y, std::move(out_shape));
}

template struct ParamStoreT<float>;
template struct ParamStoreT<double>;
template struct Conv2dT<float>;
template struct Conv2dT<double>;
template struct BatchNorm2dT<float>;
template struct BatchNorm2dT<double>;
template struct LinearT<float>;
template struct LinearT<double>;

}  // namespace glpnet
