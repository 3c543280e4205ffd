#include <vector>

#include "glpnet/ops.hpp"
#include "gemm.hpp"

namespace glpnet {

std::int64_t conv_out_extent(std::int64_t in, int k, int stride, int pad, int dilation) {
    require_config(stride >= 1 && dilation >= 1 && pad >= 0, "conv: stride/dilation must be >= 1, pad >= 0");
    const std::int64_t eff = static_cast<std::int64_t>(dilation) * (k - 1) + 1;
    const std::int64_t out = (in + 2 * static_cast<std::int64_t>(pad) - eff) / stride + 1;
    require_dim(out >= 1, "conv: output extent " + std::to_string(out) + " for input " + std::to_string(in) +
                              ", kernel " + std::to_string(k) + ", stride " + std::to_string(stride) + ", pad " +
                              std::to_string(pad) + ", dilation " + std::to_string(dilation));
    return out;
}

namespace {

struct ConvDims {
    std::int64_t n, cin, h, w;
    std::int64_t cout, kh, kw;
    std::int64_t oh, ow;
};

template <typename T>
ConvDims conv_dims(const TensorT<T>& x, const TensorT<T>& wt, const Conv2dSpec& spec) {
    require_dim(x.ndim() == 4, "conv2d: input must be [N,C,H,W], got " + shape_str(x.shape));
    require_dim(wt.ndim() == 4, "conv2d: weight must be [Cout,Cin,Kh,Kw], got " + shape_str(wt.shape));
    require_dim(x.dim(1) == wt.dim(1), "conv2d: input channels " + std::to_string(x.dim(1)) +
                                           " vs weight channels " + std::to_string(wt.dim(1)));
    ConvDims d;
    d.n = x.dim(0);
    d.cin = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.cout = wt.dim(0);
    d.kh = wt.dim(2);
    d.kw = wt.dim(3);
    d.oh = conv_out_extent(d.h, static_cast<int>(d.kh), spec.stride, spec.pad, spec.dilation);
    d.ow = conv_out_extent(d.w, static_cast<int>(d.kw), spec.stride, spec.pad, spec.dilation);
    return d;
}

// col: [Cin*Kh*Kw, Oh*Ow] for one image
template <typename T>
void im2col(const T* x, const ConvDims& d, const Conv2dSpec& spec, T* col) {
    const std::int64_t ohw = d.oh * d.ow;
    for (std::int64_t c = 0; c < d.cin; ++c) {
        const T* plane = x + c * d.h * d.w;
        for (std::int64_t ky = 0; ky < d.kh; ++ky) {
            for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                T* dst = col + ((c * d.kh + ky) * d.kw + kx) * ohw;
                for (std::int64_t oy = 0; oy < d.oh; ++oy) {
                    const std::int64_t iy = oy * spec.stride - spec.pad + ky * spec.dilation;
                    if (iy < 0 || iy >= d.h) {
                        for (std::int64_t ox = 0; ox < d.ow; ++ox) dst[oy * d.ow + ox] = T(0);
                        continue;
                    }
                    const T* row = plane + iy * d.w;
                    for (std::int64_t ox = 0; ox < d.ow; ++ox) {
                        const std::int64_t ix = ox * spec.stride - spec.pad + kx * spec.dilation;
                        dst[oy * d.ow + ox] = (ix >= 0 && ix < d.w) ? row[ix] : T(0);
                    }
                }
            }
        }
    }
}

// scatter-add the col buffer back onto the image grid
template <typename T>
void col2im_acc(const T* col, const ConvDims& d, const Conv2dSpec& spec, T* x) {
    const std::int64_t ohw = d.oh * d.ow;
    for (std::int64_t c = 0; c < d.cin; ++c) {
        T* plane = x + c * d.h * d.w;
        for (std::int64_t ky = 0; ky < d.kh; ++ky) {
            for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                const T* src = col + ((c * d.kh + ky) * d.kw + kx) * ohw;
                for (std::int64_t oy = 0; oy < d.oh; ++oy) {
                    const std::int64_t iy = oy * spec.stride - spec.pad + ky * spec.dilation;
                    if (iy < 0 || iy >= d.h) continue;
                    T* row = plane + iy * d.w;
                    for (std::int64_t ox = 0; ox < d.ow; ++ox) {
                        const std::int64_t ix = ox * spec.stride - spec.pad + kx * spec.dilation;
                        if (ix >= 0 && ix < d.w) row[ix] += src[oy * d.ow + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
VarT<T> conv2d(const VarT<T>& x, const VarT<T>& w, const VarT<T>& bias, const Conv2dSpec& spec) {
    const ConvDims d = conv_dims(x->value, w->value, spec);
    if (bias) {
        require_dim(bias->value.ndim() == 1 && bias->value.dim(0) == d.cout,
                    "conv2d: bias must be [Cout], got " + shape_str(bias->value.shape));
    }
    const std::int64_t kdim = d.cin * d.kh * d.kw;
    const std::int64_t ohw = d.oh * d.ow;

    TensorT<T> out(Shape{d.n, d.cout, d.oh, d.ow});
    std::vector<T> col(static_cast<std::size_t>(kdim * ohw));
    for (std::int64_t i = 0; i < d.n; ++i) {
        im2col(x->value.ptr() + i * d.cin * d.h * d.w, d, spec, col.data());
        T* dst = out.ptr() + i * d.cout * ohw;
        detail::gemm_acc(w->value.ptr(), col.data(), dst, d.cout, kdim, ohw);
        if (bias) {
            const T* b = bias->value.ptr();
            for (std::int64_t c = 0; c < d.cout; ++c) {
                const T bc = b[c];
                T* row = dst + c * ohw;
                for (std::int64_t p = 0; p < ohw; ++p) row[p] += bc;
            }
        }
    }

    std::vector<VarT<T>> inputs{x, w};
    if (bias) inputs.push_back(bias);
    return make_node<T>(std::move(out), std::move(inputs), [d, spec, kdim, ohw](NodeT<T>& node) {
        const auto& xn = node.inputs[0];
        const auto& wn = node.inputs[1];
        const bool has_bias = node.inputs.size() == 3;

        if (has_bias && node.inputs[2]->requires_grad) {
            TensorT<T> gb(Shape{d.cout});
            for (std::int64_t i = 0; i < d.n; ++i)
                for (std::int64_t c = 0; c < d.cout; ++c) {
                    const T* row = node.grad.ptr() + (i * d.cout + c) * ohw;
                    T s = T(0);
                    for (std::int64_t p = 0; p < ohw; ++p) s += row[p];
                    gb.data[static_cast<std::size_t>(c)] += s;
                }
            node.inputs[2]->accum_grad(gb);
        }

        const bool need_gw = wn->requires_grad;
        const bool need_gx = xn->requires_grad;
        if (!need_gw && !need_gx) return;

        TensorT<T> gw = need_gw ? TensorT<T>(wn->value.shape) : TensorT<T>(Shape{1});
        TensorT<T> gx = need_gx ? TensorT<T>(xn->value.shape) : TensorT<T>(Shape{1});
        std::vector<T> col(static_cast<std::size_t>(kdim * ohw));
        for (std::int64_t i = 0; i < d.n; ++i) {
            const T* gout = node.grad.ptr() + i * d.cout * ohw;
            if (need_gw) {
                im2col(xn->value.ptr() + i * d.cin * d.h * d.w, d, spec, col.data());
                detail::gemm_acc_bt(gout, col.data(), gw.ptr(), d.cout, ohw, kdim);
            }
            if (need_gx) {
                std::fill(col.begin(), col.end(), T(0));
                detail::gemm_acc_at(wn->value.ptr(), gout, col.data(), d.cout, kdim, ohw);
                col2im_acc(col.data(), d, spec, gx.ptr() + i * d.cin * d.h * d.w);
            }
        }
        if (need_gw) wn->accum_grad(gw);
        if (need_gx) xn->accum_grad(gx);
    });
}

template VarT<float> conv2d<float>(const VarT<float>&, const VarT<float>&, const VarT<float>&, const Conv2dSpec&);
template VarT<double> conv2d<double>(const VarT<double>&, const VarT<double>&, const VarT<double>&, const Conv2dSpec&);

}  // namespace glpnet
