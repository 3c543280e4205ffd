#include <algorithm>
#include <cmath>

#include "glpnet/ops.hpp"
#include "gemm.hpp"

namespace glpnet {

namespace {

template <typename T>
void check_same_shape(const VarT<T>& a, const VarT<T>& b, const char* op) {
    require_dim(a->value.shape == b->value.shape,
                std::string(op) + ": shape mismatch " + shape_str(a->value.shape) + " vs " + shape_str(b->value.shape));
}

}  // namespace

template <typename T>
VarT<T> add(const VarT<T>& a, const VarT<T>& b) {
    check_same_shape(a, b, "add");
    TensorT<T> out(a->value.shape);
    const std::size_t n = out.data.size();
    for (std::size_t i = 0; i < n; ++i) out.data[i] = a->value.data[i] + b->value.data[i];
    return make_node<T>(std::move(out), {a, b}, [](NodeT<T>& node) {
        node.inputs[0]->accum_grad(node.grad);
        node.inputs[1]->accum_grad(node.grad);
    });
}

template <typename T>
VarT<T> sub(const VarT<T>& a, const VarT<T>& b) {
    check_same_shape(a, b, "sub");
    TensorT<T> out(a->value.shape);
    const std::size_t n = out.data.size();
    for (std::size_t i = 0; i < n; ++i) out.data[i] = a->value.data[i] - b->value.data[i];
    return make_node<T>(std::move(out), {a, b}, [](NodeT<T>& node) {
        node.inputs[0]->accum_grad(node.grad);
        if (node.inputs[1]->requires_grad) {
            TensorT<T> g(node.grad.shape);
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = -node.grad.data[i];
            node.inputs[1]->accum_grad(g);
        }
    });
}

template <typename T>
VarT<T> mul(const VarT<T>& a, const VarT<T>& b) {
    check_same_shape(a, b, "mul");
    TensorT<T> out(a->value.shape);
    const std::size_t n = out.data.size();
    for (std::size_t i = 0; i < n; ++i) out.data[i] = a->value.data[i] * b->value.data[i];
    return make_node<T>(std::move(out), {a, b}, [](NodeT<T>& node) {
        const auto& av = node.inputs[0]->value;
        const auto& bv = node.inputs[1]->value;
        if (node.inputs[0]->requires_grad) {
            TensorT<T> g(node.grad.shape);
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = node.grad.data[i] * bv.data[i];
            node.inputs[0]->accum_grad(g);
        }
        if (node.inputs[1]->requires_grad) {
            TensorT<T> g(node.grad.shape);
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = node.grad.data[i] * av.data[i];
            node.inputs[1]->accum_grad(g);
        }
    });
}

template <typename T>
VarT<T> scale(const VarT<T>& a, T s) {
    TensorT<T> out(a->value.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a->value.data[i] * s;
    return make_node<T>(std::move(out), {a}, [s](NodeT<T>& node) {
        TensorT<T> g(node.grad.shape);
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = node.grad.data[i] * s;
        node.inputs[0]->accum_grad(g);
    });
}

template <typename T>
VarT<T> relu(const VarT<T>& x) {
    TensorT<T> out(x->value.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = x->value.data[i] > T(0) ? x->value.data[i] : T(0);
    return make_node<T>(std::move(out), {x}, [](NodeT<T>& node) {
        const auto& xv = node.inputs[0]->value;
        TensorT<T> g(node.grad.shape);
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = xv.data[i] > T(0) ? node.grad.data[i] : T(0);
        node.inputs[0]->accum_grad(g);
    });
}

template <typename T>
VarT<T> sum_all(const VarT<T>& x) {
    T s = T(0);
    for (T v : x->value.data) s += v;
    TensorT<T> out(Shape{1});
    out.data[0] = s;
    return make_node<T>(std::move(out), {x}, [](NodeT<T>& node) {
        TensorT<T> g(node.inputs[0]->value.shape, node.grad.data[0]);
        node.inputs[0]->accum_grad(g);
    });
}

template <typename T>
VarT<T> mean_all(const VarT<T>& x) {
    T s = T(0);
    for (T v : x->value.data) s += v;
    const T inv = T(1) / static_cast<T>(x->value.numel());
    TensorT<T> out(Shape{1});
    out.data[0] = s * inv;
    return make_node<T>(std::move(out), {x}, [inv](NodeT<T>& node) {
        TensorT<T> g(node.inputs[0]->value.shape, node.grad.data[0] * inv);
        node.inputs[0]->accum_grad(g);
    });
}

template <typename T>
VarT<T> reshape(const VarT<T>& x, Shape target) {
    require_dim(numel_of(target) == x->value.numel(),
                "reshape: " + shape_str(x->value.shape) + " -> " + shape_str(target) + " changes element count");
    TensorT<T> out(std::move(target), x->value.data);
    return make_node<T>(std::move(out), {x}, [](NodeT<T>& node) {
        TensorT<T> g(node.inputs[0]->value.shape, node.grad.data);
        node.inputs[0]->accum_grad(g);
    });
}

namespace {

// swap the two minor axes of [..., A, B]
template <typename T>
TensorT<T> transpose_last2_raw(const TensorT<T>& x) {
    require_dim(x.ndim() >= 2, "transpose: needs at least 2 axes, got " + shape_str(x.shape));
    Shape out_shape = x.shape;
    const std::int64_t a = out_shape[out_shape.size() - 2];
    const std::int64_t b = out_shape[out_shape.size() - 1];
    std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
    TensorT<T> out(out_shape);
    const std::int64_t outer = x.numel() / (a * b);
    for (std::int64_t o = 0; o < outer; ++o) {
        const T* src = x.ptr() + o * a * b;
        T* dst = out.ptr() + o * a * b;
        for (std::int64_t i = 0; i < a; ++i)
            for (std::int64_t j = 0; j < b; ++j) dst[j * a + i] = src[i * b + j];
    }
    return out;
}

}  // namespace

template <typename T>
VarT<T> transpose_last2(const VarT<T>& x) {
    return make_node<T>(transpose_last2_raw(x->value), {x}, [](NodeT<T>& node) {
        node.inputs[0]->accum_grad(transpose_last2_raw(node.grad));
    });
}

template <typename T>
VarT<T> transpose(const VarT<T>& x) {
    require_dim(x->value.ndim() == 2, "transpose: expects a matrix, got " + shape_str(x->value.shape));
    return transpose_last2(x);
}

template <typename T>
VarT<T> concat(const std::vector<VarT<T>>& xs, int axis) {
    require_dim(!xs.empty(), "concat: no inputs");
    const Shape& s0 = xs[0]->value.shape;
    require_dim(axis >= 0 && axis < static_cast<int>(s0.size()), "concat: bad axis");
    std::int64_t axis_total = 0;
    for (const auto& x : xs) {
        const Shape& s = x->value.shape;
        require_dim(s.size() == s0.size(), "concat: rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d)
            if (static_cast<int>(d) != axis)
                require_dim(s[d] == s0[d], "concat: extent mismatch " + shape_str(s) + " vs " + shape_str(s0));
        axis_total += s[static_cast<std::size_t>(axis)];
    }
    Shape out_shape = s0;
    out_shape[static_cast<std::size_t>(axis)] = axis_total;

    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s0[static_cast<std::size_t>(d)];
    for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s0.size(); ++d) inner *= s0[d];

    TensorT<T> out(out_shape);
    std::int64_t written = 0;
    for (const auto& x : xs) {
        const std::int64_t ax = x->value.dim(axis);
        for (std::int64_t o = 0; o < outer; ++o) {
            const T* src = x->value.ptr() + o * ax * inner;
            T* dst = out.ptr() + (o * axis_total + written) * inner;
            std::copy(src, src + ax * inner, dst);
        }
        written += ax;
    }

    std::vector<VarT<T>> inputs = xs;
    return make_node<T>(std::move(out), std::move(inputs),
                        [axis, outer, inner, axis_total](NodeT<T>& node) {
                            std::int64_t offset = 0;
                            for (auto& in : node.inputs) {
                                const std::int64_t ax = in->value.dim(axis);
                                if (in->requires_grad) {
                                    TensorT<T> g(in->value.shape);
                                    for (std::int64_t o = 0; o < outer; ++o) {
                                        const T* src = node.grad.ptr() + (o * axis_total + offset) * inner;
                                        T* dst = g.ptr() + o * ax * inner;
                                        std::copy(src, src + ax * inner, dst);
                                    }
                                    in->accum_grad(g);
                                }
                                offset += ax;
                            }
                        });
}

template <typename T>
VarT<T> concat_channels(const VarT<T>& a, const VarT<T>& b) {
    require_dim(a->value.ndim() == 4 && b->value.ndim() == 4,
                "concat_channels: expects [N,C,H,W] inputs");
    return concat<T>({a, b}, 1);
}

template <typename T>
VarT<T> slice_axis(const VarT<T>& x, int axis, std::int64_t start, std::int64_t len) {
    const Shape& s = x->value.shape;
    require_dim(axis >= 0 && axis < static_cast<int>(s.size()), "slice: bad axis");
    const std::int64_t ax = s[static_cast<std::size_t>(axis)];
    require_dim(start >= 0 && len >= 1 && start + len <= ax, "slice: range out of bounds");

    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s[static_cast<std::size_t>(d)];
    for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s.size(); ++d) inner *= s[d];

    Shape out_shape = s;
    out_shape[static_cast<std::size_t>(axis)] = len;
    TensorT<T> out(out_shape);
    for (std::int64_t o = 0; o < outer; ++o) {
        const T* src = x->value.ptr() + (o * ax + start) * inner;
        std::copy(src, src + len * inner, out.ptr() + o * len * inner);
    }
    return make_node<T>(std::move(out), {x}, [axis, start, len, outer, inner, ax](NodeT<T>& node) {
        TensorT<T> g(node.inputs[0]->value.shape);
        for (std::int64_t o = 0; o < outer; ++o) {
            const T* src = node.grad.ptr() + o * len * inner;
            std::copy(src, src + len * inner, g.ptr() + (o * ax + start) * inner);
        }
        node.inputs[0]->accum_grad(g);
    });
}

// ---------------------------------------------------------------------------
// softmax family
// ---------------------------------------------------------------------------

namespace {

// softmax over contiguous rows of length len, max-subtracted
template <typename T>
void softmax_rows(const T* in, T* out, std::int64_t rows, std::int64_t len) {
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = in + r * len;
        T* dst = out + r * len;
        T m = src[0];
        for (std::int64_t i = 1; i < len; ++i) m = std::max(m, src[i]);
        T sum = T(0);
        for (std::int64_t i = 0; i < len; ++i) {
            dst[i] = std::exp(src[i] - m);
            sum += dst[i];
        }
        const T inv = T(1) / sum;
        for (std::int64_t i = 0; i < len; ++i) dst[i] *= inv;
    }
}

// g_in = p * (g - sum(g*p)) rowwise
template <typename T>
void softmax_rows_backward(const T* p, const T* g, T* gin, std::int64_t rows, std::int64_t len) {
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* pr = p + r * len;
        const T* gr = g + r * len;
        T* dst = gin + r * len;
        T dot = T(0);
        for (std::int64_t i = 0; i < len; ++i) dot += gr[i] * pr[i];
        for (std::int64_t i = 0; i < len; ++i) dst[i] = pr[i] * (gr[i] - dot);
    }
}

template <typename T>
VarT<T> softmax_over_rows(const VarT<T>& x, std::int64_t rows, std::int64_t len) {
    TensorT<T> out(x->value.shape);
    softmax_rows(x->value.ptr(), out.ptr(), rows, len);
    TensorT<T> probs = out;  // saved activation
    return make_node<T>(std::move(out), {x}, [probs = std::move(probs), rows, len](NodeT<T>& node) {
        TensorT<T> g(node.inputs[0]->value.shape);
        softmax_rows_backward(probs.ptr(), node.grad.ptr(), g.ptr(), rows, len);
        node.inputs[0]->accum_grad(g);
    });
}

}  // namespace

template <typename T>
VarT<T> softmax_lastdim(const VarT<T>& x) {
    require_dim(x->value.ndim() >= 1, "softmax: empty shape");
    const std::int64_t len = x->value.shape.back();
    return softmax_over_rows(x, x->value.numel() / len, len);
}

template <typename T>
VarT<T> channel_softmax(const VarT<T>& x) {
    require_dim(x->value.ndim() == 2, "channel_softmax: expects [M,L], got " + shape_str(x->value.shape));
    return softmax_lastdim(x);
}

template <typename T>
VarT<T> spatial_softmax(const VarT<T>& x) {
    require_dim(x->value.ndim() == 4, "spatial_softmax: expects [N,K,H,W], got " + shape_str(x->value.shape));
    const std::int64_t hw = x->value.dim(2) * x->value.dim(3);
    return softmax_over_rows(x, x->value.numel() / hw, hw);
}

// ---------------------------------------------------------------------------
// matmul / bmm
// ---------------------------------------------------------------------------

template <typename T>
VarT<T> matmul(const VarT<T>& a, const VarT<T>& b) {
    require_dim(a->value.ndim() == 2 && b->value.ndim() == 2,
                "matmul: expects matrices, got " + shape_str(a->value.shape) + " x " + shape_str(b->value.shape));
    const std::int64_t m = a->value.dim(0), p = a->value.dim(1), q = b->value.dim(1);
    require_dim(b->value.dim(0) == p,
                "matmul: inner extents differ, " + shape_str(a->value.shape) + " x " + shape_str(b->value.shape));
    TensorT<T> out(Shape{m, q});
    detail::gemm_acc(a->value.ptr(), b->value.ptr(), out.ptr(), m, p, q);
    return make_node<T>(std::move(out), {a, b}, [m, p, q](NodeT<T>& node) {
        const auto& av = node.inputs[0]->value;
        const auto& bv = node.inputs[1]->value;
        if (node.inputs[0]->requires_grad) {
            TensorT<T> ga(av.shape);
            detail::gemm_acc_bt(node.grad.ptr(), bv.ptr(), ga.ptr(), m, q, p);
            node.inputs[0]->accum_grad(ga);
        }
        if (node.inputs[1]->requires_grad) {
            TensorT<T> gb(bv.shape);
            detail::gemm_acc_at(av.ptr(), node.grad.ptr(), gb.ptr(), m, p, q);
            node.inputs[1]->accum_grad(gb);
        }
    });
}

template <typename T>
VarT<T> bmm(const VarT<T>& a, const VarT<T>& b) {
    require_dim(a->value.ndim() == 3 && b->value.ndim() == 3,
                "bmm: expects [N,M,P] x [N,P,Q], got " + shape_str(a->value.shape) + " x " + shape_str(b->value.shape));
    const std::int64_t n = a->value.dim(0), m = a->value.dim(1), p = a->value.dim(2), q = b->value.dim(2);
    require_dim(b->value.dim(0) == n && b->value.dim(1) == p,
                "bmm: shape mismatch " + shape_str(a->value.shape) + " x " + shape_str(b->value.shape));
    TensorT<T> out(Shape{n, m, q});
    for (std::int64_t i = 0; i < n; ++i)
        detail::gemm_acc(a->value.ptr() + i * m * p, b->value.ptr() + i * p * q, out.ptr() + i * m * q, m, p, q);
    return make_node<T>(std::move(out), {a, b}, [n, m, p, q](NodeT<T>& node) {
        const auto& av = node.inputs[0]->value;
        const auto& bv = node.inputs[1]->value;
        if (node.inputs[0]->requires_grad) {
            TensorT<T> ga(av.shape);
            for (std::int64_t i = 0; i < n; ++i)
                detail::gemm_acc_bt(node.grad.ptr() + i * m * q, bv.ptr() + i * p * q, ga.ptr() + i * m * p, m, q, p);
            node.inputs[0]->accum_grad(ga);
        }
        if (node.inputs[1]->requires_grad) {
            TensorT<T> gb(bv.shape);
            for (std::int64_t i = 0; i < n; ++i)
                detail::gemm_acc_at(av.ptr() + i * m * p, node.grad.ptr() + i * m * q, gb.ptr() + i * p * q, m, p, q);
            node.inputs[1]->accum_grad(gb);
        }
    });
}

// ---------------------------------------------------------------------------

template <typename T>
IntTensor argmax_channels(const TensorT<T>& logits) {
    require_dim(logits.ndim() == 4, "argmax_channels: expects [N,C,H,W]");
    const std::int64_t n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
    IntTensor out(Shape{n, h, w});
    const std::int64_t hw = h * w;
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t p = 0; p < hw; ++p) {
            const T* base = logits.ptr() + i * c * hw + p;
            std::int32_t best = 0;
            T best_v = base[0];
            for (std::int64_t ch = 1; ch < c; ++ch) {
                const T v = base[ch * hw];
                if (v > best_v) {
                    best_v = v;
                    best = static_cast<std::int32_t>(ch);
                }
            }
            out.data[static_cast<std::size_t>(i * hw + p)] = best;
        }
    return out;
}

#define GLPNET_INSTANTIATE_BASIC(T)                                                              \
    template VarT<T> add<T>(const VarT<T>&, const VarT<T>&);                                     \
    template VarT<T> sub<T>(const VarT<T>&, const VarT<T>&);                                     \
    template VarT<T> mul<T>(const VarT<T>&, const VarT<T>&);                                     \
    template VarT<T> scale<T>(const VarT<T>&, T);                                                \
    template VarT<T> relu<T>(const VarT<T>&);                                                    \
    template VarT<T> sum_all<T>(const VarT<T>&);                                                 \
    template VarT<T> mean_all<T>(const VarT<T>&);                                                \
    template VarT<T> reshape<T>(const VarT<T>&, Shape);                                          \
    template VarT<T> transpose<T>(const VarT<T>&);                                               \
    template VarT<T> transpose_last2<T>(const VarT<T>&);                                         \
    template VarT<T> concat<T>(const std::vector<VarT<T>>&, int);                                \
    template VarT<T> concat_channels<T>(const VarT<T>&, const VarT<T>&);                         \
    template VarT<T> slice_axis<T>(const VarT<T>&, int, std::int64_t, std::int64_t);             \
    template VarT<T> matmul<T>(const VarT<T>&, const VarT<T>&);                                  \
    template VarT<T> bmm<T>(const VarT<T>&, const VarT<T>&);                                     \
    template VarT<T> softmax_lastdim<T>(const VarT<T>&);                                         \
    template VarT<T> channel_softmax<T>(const VarT<T>&);                                         \
    template VarT<T> spatial_softmax<T>(const VarT<T>&);                                         \
    template IntTensor argmax_channels<T>(const TensorT<T>&);

GLPNET_INSTANTIATE_BASIC(float)
GLPNET_INSTANTIATE_BASIC(double)

}  // namespace glpnet
