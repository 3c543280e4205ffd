#include <algorithm>
#include <cmath>

#include "glpnet/ops.hpp"

namespace glpnet {

namespace {

template <typename T>
struct SamplePoint {
    std::int64_t x0, x1, y0, y1;
    T tx, ty;
    bool clamped_x, clamped_y;
};

// border clamp, then split into base index + fraction; lerp with t=0 is an exact copy
template <typename T>
SamplePoint<T> locate(T cx, T cy, std::int64_t h, std::int64_t w) {
    SamplePoint<T> p;
    const T max_x = static_cast<T>(w - 1);
    const T max_y = static_cast<T>(h - 1);
    p.clamped_x = cx < T(0) || cx > max_x;
    p.clamped_y = cy < T(0) || cy > max_y;
    cx = std::clamp(cx, T(0), max_x);
    cy = std::clamp(cy, T(0), max_y);
    p.x0 = static_cast<std::int64_t>(std::floor(cx));
    p.y0 = static_cast<std::int64_t>(std::floor(cy));
    p.x1 = std::min(p.x0 + 1, w - 1);
    p.y1 = std::min(p.y0 + 1, h - 1);
    p.tx = cx - static_cast<T>(p.x0);
    p.ty = cy - static_cast<T>(p.y0);
    return p;
}

template <typename T>
T lerp2(const T* plane, std::int64_t w, const SamplePoint<T>& p) {
    const T v00 = plane[p.y0 * w + p.x0];
    const T v01 = plane[p.y0 * w + p.x1];
    const T v10 = plane[p.y1 * w + p.x0];
    const T v11 = plane[p.y1 * w + p.x1];
    const T top = v00 + p.tx * (v01 - v00);
    const T bot = v10 + p.tx * (v11 - v10);
    return top + p.ty * (bot - top);
}

}  // namespace

template <typename T>
VarT<T> bilinear_sample(const VarT<T>& x, const VarT<T>& coords) {
    require_dim(x->value.ndim() == 4, "bilinear_sample: input must be [N,C,H,W], got " + shape_str(x->value.shape));
    require_dim(coords->value.ndim() == 4 && coords->value.dim(1) == 2,
                "bilinear_sample: coords must be [N,2,H,W], got " + shape_str(coords->value.shape));
    require_dim(coords->value.dim(0) == x->value.dim(0), "bilinear_sample: batch mismatch");
    const std::int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
    const std::int64_t oh = coords->value.dim(2), ow = coords->value.dim(3);

    TensorT<T> out(Shape{n, c, oh, ow});
    for (std::int64_t i = 0; i < n; ++i) {
        const T* cx_plane = coords->value.ptr() + i * 2 * oh * ow;
        const T* cy_plane = cx_plane + oh * ow;
        for (std::int64_t p = 0; p < oh * ow; ++p) {
            const SamplePoint<T> sp = locate(cx_plane[p], cy_plane[p], h, w);
            for (std::int64_t ch = 0; ch < c; ++ch)
                out.data[static_cast<std::size_t>(((i * c + ch) * oh * ow) + p)] =
                    lerp2(x->value.ptr() + (i * c + ch) * h * w, w, sp);
        }
    }

    return make_node<T>(std::move(out), {x, coords}, [n, c, h, w, oh, ow](NodeT<T>& node) {
        const auto& xn = node.inputs[0];
        const auto& cn = node.inputs[1];
        const bool need_gx = xn->requires_grad;
        const bool need_gc = cn->requires_grad;
        if (!need_gx && !need_gc) return;
        TensorT<T> gx = need_gx ? TensorT<T>(xn->value.shape) : TensorT<T>(Shape{1});
        TensorT<T> gc = need_gc ? TensorT<T>(cn->value.shape) : TensorT<T>(Shape{1});
        for (std::int64_t i = 0; i < n; ++i) {
            const T* cx_plane = cn->value.ptr() + i * 2 * oh * ow;
            const T* cy_plane = cx_plane + oh * ow;
            for (std::int64_t p = 0; p < oh * ow; ++p) {
                const SamplePoint<T> sp = locate(cx_plane[p], cy_plane[p], h, w);
                T dx_sum = T(0), dy_sum = T(0);
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    const T g = node.grad.data[static_cast<std::size_t>(((i * c + ch) * oh * ow) + p)];
                    const T* plane = xn->value.ptr() + (i * c + ch) * h * w;
                    const T v00 = plane[sp.y0 * w + sp.x0];
                    const T v01 = plane[sp.y0 * w + sp.x1];
                    const T v10 = plane[sp.y1 * w + sp.x0];
                    const T v11 = plane[sp.y1 * w + sp.x1];
                    if (need_gx) {
                        T* gp = gx.ptr() + (i * c + ch) * h * w;
                        gp[sp.y0 * w + sp.x0] += g * (T(1) - sp.tx) * (T(1) - sp.ty);
                        gp[sp.y0 * w + sp.x1] += g * sp.tx * (T(1) - sp.ty);
                        gp[sp.y1 * w + sp.x0] += g * (T(1) - sp.tx) * sp.ty;
                        gp[sp.y1 * w + sp.x1] += g * sp.tx * sp.ty;
                    }
                    dx_sum += g * ((T(1) - sp.ty) * (v01 - v00) + sp.ty * (v11 - v10));
                    dy_sum += g * ((T(1) - sp.tx) * (v10 - v00) + sp.tx * (v11 - v01));
                }
                if (need_gc) {
                    gc.data[static_cast<std::size_t>(i * 2 * oh * ow + p)] = sp.clamped_x ? T(0) : dx_sum;
                    gc.data[static_cast<std::size_t>((i * 2 + 1) * oh * ow + p)] = sp.clamped_y ? T(0) : dy_sum;
                }
            }
        }
        if (need_gx) xn->accum_grad(gx);
        if (need_gc) cn->accum_grad(gc);
    });
}

template <typename T>
TensorT<T> identity_grid(std::int64_t n, std::int64_t h, std::int64_t w) {
    TensorT<T> grid(Shape{n, 2, h, w});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                grid.data[static_cast<std::size_t>(grid.off4(i, 0, y, x))] = static_cast<T>(x);
                grid.data[static_cast<std::size_t>(grid.off4(i, 1, y, x))] = static_cast<T>(y);
            }
    return grid;
}

template <typename T>
VarT<T> warp(const VarT<T>& x, const VarT<T>& offsets) {
    require_dim(offsets->value.ndim() == 4 && offsets->value.dim(1) == 2,
                "warp: offsets must be [N,2,H,W], got " + shape_str(offsets->value.shape));
    require_dim(x->value.ndim() == 4 && x->value.dim(0) == offsets->value.dim(0) &&
                    x->value.dim(2) == offsets->value.dim(2) && x->value.dim(3) == offsets->value.dim(3),
                "warp: input " + shape_str(x->value.shape) + " does not match offsets " +
                    shape_str(offsets->value.shape));
    auto grid = make_var<T>(identity_grid<T>(x->value.dim(0), x->value.dim(2), x->value.dim(3)), false);
    return bilinear_sample(x, add(grid, offsets));
}

// ---------------------------------------------------------------------------
// resize
// ---------------------------------------------------------------------------

namespace {

// source coordinate for an output index; align_corners=true keeps endpoints fixed
template <typename T>
T src_coord(std::int64_t o, std::int64_t in, std::int64_t out, bool align_corners) {
    if (in == 1 || out == 1) return align_corners ? T(0) : std::clamp((T(0.5) * in / out) - T(0.5), T(0), T(in - 1));
    if (align_corners) return static_cast<T>(o) * (static_cast<T>(in - 1) / static_cast<T>(out - 1));
    const T c = (static_cast<T>(o) + T(0.5)) * (static_cast<T>(in) / static_cast<T>(out)) - T(0.5);
    return std::clamp(c, T(0), static_cast<T>(in - 1));
}

}  // namespace

template <typename T>
VarT<T> bilinear_resize(const VarT<T>& x, std::int64_t out_h, std::int64_t out_w, bool align_corners) {
    require_dim(x->value.ndim() == 4, "bilinear_resize: input must be [N,C,H,W], got " + shape_str(x->value.shape));
    require_dim(out_h >= 1 && out_w >= 1, "bilinear_resize: target extents must be >= 1");
    const std::int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);

    TensorT<T> out(Shape{n, c, out_h, out_w});
    const std::int64_t planes = n * c;
    for (std::int64_t pl = 0; pl < planes; ++pl) {
        const T* src = x->value.ptr() + pl * h * w;
        T* dst = out.ptr() + pl * out_h * out_w;
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
            const T cy = src_coord<T>(oy, h, out_h, align_corners);
            for (std::int64_t ox = 0; ox < out_w; ++ox) {
                const T cx = src_coord<T>(ox, w, out_w, align_corners);
                dst[oy * out_w + ox] = lerp2(src, w, locate(cx, cy, h, w));
            }
        }
    }

    return make_node<T>(std::move(out), {x}, [n, c, h, w, out_h, out_w, align_corners](NodeT<T>& node) {
        TensorT<T> gx(node.inputs[0]->value.shape);
        const std::int64_t planes = n * c;
        for (std::int64_t pl = 0; pl < planes; ++pl) {
            const T* g = node.grad.ptr() + pl * out_h * out_w;
            T* dst = gx.ptr() + pl * h * w;
            for (std::int64_t oy = 0; oy < out_h; ++oy) {
                const T cy = src_coord<T>(oy, h, out_h, align_corners);
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    const T cx = src_coord<T>(ox, w, out_w, align_corners);
                    const SamplePoint<T> sp = locate(cx, cy, h, w);
                    const T gv = g[oy * out_w + ox];
                    dst[sp.y0 * w + sp.x0] += gv * (T(1) - sp.tx) * (T(1) - sp.ty);
                    dst[sp.y0 * w + sp.x1] += gv * sp.tx * (T(1) - sp.ty);
                    dst[sp.y1 * w + sp.x0] += gv * (T(1) - sp.tx) * sp.ty;
                    dst[sp.y1 * w + sp.x1] += gv * sp.tx * sp.ty;
                }
            }
        }
        node.inputs[0]->accum_grad(gx);
    });
}

// ---------------------------------------------------------------------------
// raw helpers (no tape)
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> resize_bilinear(const TensorT<T>& x, std::int64_t out_h, std::int64_t out_w, bool align_corners) {
    require_dim(x.ndim() >= 2, "resize_bilinear: needs at least 2 axes");
    require_dim(out_h >= 1 && out_w >= 1, "resize_bilinear: target extents must be >= 1");
    const std::int64_t h = x.dim(static_cast<int>(x.ndim()) - 2);
    const std::int64_t w = x.dim(static_cast<int>(x.ndim()) - 1);
    Shape out_shape = x.shape;
    out_shape[out_shape.size() - 2] = out_h;
    out_shape[out_shape.size() - 1] = out_w;
    TensorT<T> out(out_shape);
    const std::int64_t planes = x.numel() / (h * w);
    for (std::int64_t pl = 0; pl < planes; ++pl) {
        const T* src = x.ptr() + pl * h * w;
        T* dst = out.ptr() + pl * out_h * out_w;
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
            const T cy = src_coord<T>(oy, h, out_h, align_corners);
            for (std::int64_t ox = 0; ox < out_w; ++ox) {
                const T cx = src_coord<T>(ox, w, out_w, align_corners);
                dst[oy * out_w + ox] = lerp2(src, w, locate(cx, cy, h, w));
            }
        }
    }
    return out;
}

IntTensor resize_nearest(const IntTensor& x, std::int64_t out_h, std::int64_t out_w) {
    require_dim(x.ndim() >= 2, "resize_nearest: needs at least 2 axes");
    require_dim(out_h >= 1 && out_w >= 1, "resize_nearest: target extents must be >= 1");
    const std::int64_t h = x.dim(static_cast<int>(x.ndim()) - 2);
    const std::int64_t w = x.dim(static_cast<int>(x.ndim()) - 1);
    Shape out_shape = x.shape;
    out_shape[out_shape.size() - 2] = out_h;
    out_shape[out_shape.size() - 1] = out_w;
    IntTensor out(out_shape);
    const std::int64_t planes = x.numel() / (h * w);
    for (std::int64_t pl = 0; pl < planes; ++pl) {
        const std::int32_t* src = x.data.data() + pl * h * w;
        std::int32_t* dst = out.data.data() + pl * out_h * out_w;
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
            const std::int64_t iy = std::min<std::int64_t>(
                h - 1, static_cast<std::int64_t>(std::floor((static_cast<double>(oy) + 0.5) * h / out_h)));
            for (std::int64_t ox = 0; ox < out_w; ++ox) {
                const std::int64_t ix = std::min<std::int64_t>(
                    w - 1, static_cast<std::int64_t>(std::floor((static_cast<double>(ox) + 0.5) * w / out_w)));
                dst[oy * out_w + ox] = src[iy * w + ix];
            }
        }
    }
    return out;
}

template <typename T>
TensorT<T> hflip(const TensorT<T>& x) {
    require_dim(x.ndim() >= 1, "hflip: empty shape");
    const std::int64_t w = x.shape.back();
    TensorT<T> out(x.shape);
    const std::int64_t rows = x.numel() / w;
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = x.ptr() + r * w;
        T* dst = out.ptr() + r * w;
        for (std::int64_t i = 0; i < w; ++i) dst[i] = src[w - 1 - i];
    }
    return out;
}

IntTensor hflip_int(const IntTensor& x) {
    require_dim(x.ndim() >= 1, "hflip: empty shape");
    const std::int64_t w = x.shape.back();
    IntTensor out(x.shape);
    const std::int64_t rows = x.numel() / w;
    for (std::int64_t r = 0; r < rows; ++r) {
        const std::int32_t* src = x.data.data() + r * w;
        std::int32_t* dst = out.data.data() + r * w;
        for (std::int64_t i = 0; i < w; ++i) dst[i] = src[w - 1 - i];
    }
    return out;
}

#define GLPNET_INSTANTIATE_SAMPLE(T)                                                                \
    template VarT<T> bilinear_sample<T>(const VarT<T>&, const VarT<T>&);                            \
    template VarT<T> bilinear_resize<T>(const VarT<T>&, std::int64_t, std::int64_t, bool);          \
    template VarT<T> warp<T>(const VarT<T>&, const VarT<T>&);                                       \
    template TensorT<T> identity_grid<T>(std::int64_t, std::int64_t, std::int64_t);                 \
    template TensorT<T> resize_bilinear<T>(const TensorT<T>&, std::int64_t, std::int64_t, bool);    \
    template TensorT<T> hflip<T>(const TensorT<T>&);

GLPNET_INSTANTIATE_SAMPLE(float)
GLPNET_INSTANTIATE_SAMPLE(double)

}  // namespace glpnet
