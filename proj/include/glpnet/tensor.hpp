#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "glpnet/error.hpp"

namespace glpnet {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel_of(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

// Dense row-major tensor. Feature maps are [N,C,H,W], matrices [rows,cols].
template <typename T>
struct TensorT {
    Shape shape;
    std::vector<T> data;

    TensorT() = default;

    explicit TensorT(Shape s, T fill = T(0)) : shape(std::move(s)) {
        check_extents();
        data.assign(static_cast<std::size_t>(numel_of(shape)), fill);
    }

    TensorT(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        check_extents();
        require_dim(static_cast<std::int64_t>(data.size()) == numel_of(shape),
                    "data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    }

    static TensorT zeros(Shape s) { return TensorT(std::move(s), T(0)); }
    static TensorT full(Shape s, T v) { return TensorT(std::move(s), v); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    std::int64_t off2(std::int64_t i, std::int64_t j) const { return i * shape[1] + j; }
    std::int64_t off3(std::int64_t a, std::int64_t b, std::int64_t c) const {
        return (a * shape[1] + b) * shape[2] + c;
    }
    std::int64_t off4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return ((n * shape[1] + c) * shape[2] + h) * shape[3] + w;
    }

    T& at2(std::int64_t i, std::int64_t j) { return data[static_cast<std::size_t>(off2(i, j))]; }
    T at2(std::int64_t i, std::int64_t j) const { return data[static_cast<std::size_t>(off2(i, j))]; }
    T& at3(std::int64_t a, std::int64_t b, std::int64_t c) { return data[static_cast<std::size_t>(off3(a, b, c))]; }
    T at3(std::int64_t a, std::int64_t b, std::int64_t c) const { return data[static_cast<std::size_t>(off3(a, b, c))]; }
    T& at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data[static_cast<std::size_t>(off4(n, c, h, w))];
    }
    T at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data[static_cast<std::size_t>(off4(n, c, h, w))];
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

   private:
    void check_extents() const {
        for (auto d : shape) require_dim(d > 0, "tensor extents must be positive: " + shape_str(shape));
    }
};

// Integer tensor for labels and predictions; never differentiated.
struct IntTensor {
    Shape shape;
    std::vector<std::int32_t> data;

    IntTensor() = default;
    explicit IntTensor(Shape s, std::int32_t fill = 0) : shape(std::move(s)) {
        for (auto d : shape) require_dim(d > 0, "tensor extents must be positive: " + shape_str(shape));
        data.assign(static_cast<std::size_t>(numel_of(shape)), fill);
    }
    IntTensor(Shape s, std::vector<std::int32_t> values) : shape(std::move(s)), data(std::move(values)) {
        require_dim(static_cast<std::int64_t>(data.size()) == numel_of(shape),
                    "data length does not match shape " + shape_str(shape));
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    bool same_shape(const IntTensor& o) const { return shape == o.shape; }

    std::int64_t off2(std::int64_t i, std::int64_t j) const { return i * shape[1] + j; }
    std::int64_t off3(std::int64_t a, std::int64_t b, std::int64_t c) const {
        return (a * shape[1] + b) * shape[2] + c;
    }
    std::int32_t& at2(std::int64_t i, std::int64_t j) { return data[static_cast<std::size_t>(off2(i, j))]; }
    std::int32_t at2(std::int64_t i, std::int64_t j) const { return data[static_cast<std::size_t>(off2(i, j))]; }
    std::int32_t& at3(std::int64_t a, std::int64_t b, std::int64_t c) { return data[static_cast<std::size_t>(off3(a, b, c))]; }
    std::int32_t at3(std::int64_t a, std::int64_t b, std::int64_t c) const { return data[static_cast<std::size_t>(off3(a, b, c))]; }
};

template <typename T>
bool all_finite(const TensorT<T>& x) {
    for (T v : x.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

template <typename To, typename From>
TensorT<To> tensor_cast(const TensorT<From>& x) {
    TensorT<To> out;
    out.shape = x.shape;
    out.data.resize(x.data.size());
    for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = static_cast<To>(x.data[i]);
    return out;
}

}  // namespace glpnet
