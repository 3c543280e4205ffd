#include <cmath>

#include "glpnet/ops.hpp"

namespace glpnet {

template <typename T>
VarT<T> batch_norm(const VarT<T>& x, const VarT<T>& gamma, const VarT<T>& beta,
                   const VarT<T>& running_mean, const VarT<T>& running_var, bool training,
                   T momentum, T eps) {
    require_dim(x->value.ndim() == 4, "batch_norm: input must be [N,C,H,W], got " + shape_str(x->value.shape));
    const std::int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
    auto check_vec = [c](const TensorT<T>& t, const char* name) {
        require_dim(t.ndim() == 1 && t.dim(0) == c, std::string("batch_norm: ") + name + " must be [C]");
    };
    check_vec(gamma->value, "gamma");
    check_vec(beta->value, "beta");
    check_vec(running_mean->value, "running_mean");
    check_vec(running_var->value, "running_var");

    const std::int64_t m = n * h * w;
    const std::int64_t hw = h * w;

    TensorT<T> mean(Shape{c});
    TensorT<T> invstd(Shape{c});
    if (training) {
        require_contract(m >= 2, "batch_norm: train mode needs at least 2 elements per channel, got " +
                                     std::to_string(m));
        for (std::int64_t ch = 0; ch < c; ++ch) {
            T s = T(0);
            for (std::int64_t i = 0; i < n; ++i) {
                const T* p = x->value.ptr() + (i * c + ch) * hw;
                for (std::int64_t q = 0; q < hw; ++q) s += p[q];
            }
            const T mu = s / static_cast<T>(m);
            T v = T(0);
            for (std::int64_t i = 0; i < n; ++i) {
                const T* p = x->value.ptr() + (i * c + ch) * hw;
                for (std::int64_t q = 0; q < hw; ++q) {
                    const T d = p[q] - mu;
                    v += d * d;
                }
            }
            const T var_biased = v / static_cast<T>(m);
            const T var_unbiased = v / static_cast<T>(m - 1);
            mean.data[static_cast<std::size_t>(ch)] = mu;
            invstd.data[static_cast<std::size_t>(ch)] = T(1) / std::sqrt(var_biased + eps);
            auto& rm = running_mean->value.data[static_cast<std::size_t>(ch)];
            auto& rv = running_var->value.data[static_cast<std::size_t>(ch)];
            rm = (T(1) - momentum) * rm + momentum * mu;
            rv = (T(1) - momentum) * rv + momentum * var_unbiased;
        }
    } else {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            mean.data[static_cast<std::size_t>(ch)] = running_mean->value.data[static_cast<std::size_t>(ch)];
            invstd.data[static_cast<std::size_t>(ch)] =
                T(1) / std::sqrt(running_var->value.data[static_cast<std::size_t>(ch)] + eps);
        }
    }

    TensorT<T> xhat(x->value.shape);
    TensorT<T> out(x->value.shape);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const T mu = mean.data[static_cast<std::size_t>(ch)];
            const T is = invstd.data[static_cast<std::size_t>(ch)];
            const T g = gamma->value.data[static_cast<std::size_t>(ch)];
            const T b = beta->value.data[static_cast<std::size_t>(ch)];
            const T* src = x->value.ptr() + (i * c + ch) * hw;
            T* xh = xhat.ptr() + (i * c + ch) * hw;
            T* dst = out.ptr() + (i * c + ch) * hw;
            for (std::int64_t q = 0; q < hw; ++q) {
                xh[q] = (src[q] - mu) * is;
                dst[q] = g * xh[q] + b;
            }
        }

    return make_node<T>(std::move(out), {x, gamma, beta},
                        [n, c, hw, m, training, xhat = std::move(xhat), invstd = std::move(invstd)](NodeT<T>& node) {
                            const auto& xn = node.inputs[0];
                            const auto& gn = node.inputs[1];
                            const auto& bn = node.inputs[2];

                            // per-channel reductions of g and g*xhat
                            TensorT<T> gsum(Shape{c});
                            TensorT<T> gx_sum(Shape{c});
                            for (std::int64_t i = 0; i < n; ++i)
                                for (std::int64_t ch = 0; ch < c; ++ch) {
                                    const T* g = node.grad.ptr() + (i * c + ch) * hw;
                                    const T* xh = xhat.ptr() + (i * c + ch) * hw;
                                    T s = T(0), sx = T(0);
                                    for (std::int64_t q = 0; q < hw; ++q) {
                                        s += g[q];
                                        sx += g[q] * xh[q];
                                    }
                                    gsum.data[static_cast<std::size_t>(ch)] += s;
                                    gx_sum.data[static_cast<std::size_t>(ch)] += sx;
                                }

                            if (bn->requires_grad) bn->accum_grad(gsum);
                            if (gn->requires_grad) gn->accum_grad(gx_sum);

                            if (!xn->requires_grad) return;
                            TensorT<T> gx(xn->value.shape);
                            const T inv_m = T(1) / static_cast<T>(m);
                            for (std::int64_t i = 0; i < n; ++i)
                                for (std::int64_t ch = 0; ch < c; ++ch) {
                                    const T gam = gn->value.data[static_cast<std::size_t>(ch)];
                                    const T is = invstd.data[static_cast<std::size_t>(ch)];
                                    const T gs = gsum.data[static_cast<std::size_t>(ch)];
                                    const T gxs = gx_sum.data[static_cast<std::size_t>(ch)];
                                    const T* g = node.grad.ptr() + (i * c + ch) * hw;
                                    const T* xh = xhat.ptr() + (i * c + ch) * hw;
                                    T* dst = gx.ptr() + (i * c + ch) * hw;
                                    if (training) {
                                        for (std::int64_t q = 0; q < hw; ++q)
                                            dst[q] = gam * is * (g[q] - gs * inv_m - xh[q] * gxs * inv_m);
                                    } else {
                                        for (std::int64_t q = 0; q < hw; ++q) dst[q] = gam * is * g[q];
                                    }
                                }
                            xn->accum_grad(gx);
                        });
}

template VarT<float> batch_norm<float>(const VarT<float>&, const VarT<float>&, const VarT<float>&,
                                       const VarT<float>&, const VarT<float>&, bool, float, float);
template VarT<double> batch_norm<double>(const VarT<double>&, const VarT<double>&, const VarT<double>&,
                                         const VarT<double>&, const VarT<double>&, bool, double, double);

}  // namespace glpnet
