#pragma once

#include <vector>

#include "glpnet/autodiff.hpp"

namespace glpnet {

struct Conv2dSpec {
    int stride = 1;
    int pad = 0;
    int dilation = 1;
};

// output extent of a convolution axis; DimensionError when non-positive
std::int64_t conv_out_extent(std::int64_t in, int k, int stride, int pad, int dilation);

// ---------------------------------------------------------------------------
// graph ops: forward value + recorded backward
// ---------------------------------------------------------------------------

template <typename T> VarT<T> add(const VarT<T>& a, const VarT<T>& b);
template <typename T> VarT<T> sub(const VarT<T>& a, const VarT<T>& b);
template <typename T> VarT<T> mul(const VarT<T>& a, const VarT<T>& b);
template <typename T> VarT<T> scale(const VarT<T>& a, T s);
template <typename T> VarT<T> relu(const VarT<T>& x);
template <typename T> VarT<T> sum_all(const VarT<T>& x);
template <typename T> VarT<T> mean_all(const VarT<T>& x);
template <typename T> VarT<T> reshape(const VarT<T>& x, Shape target);
template <typename T> VarT<T> transpose(const VarT<T>& x);        // [M,P] -> [P,M]
template <typename T> VarT<T> transpose_last2(const VarT<T>& x);  // swaps the two minor axes
template <typename T> VarT<T> concat(const std::vector<VarT<T>>& xs, int axis);
template <typename T> VarT<T> concat_channels(const VarT<T>& a, const VarT<T>& b);  // axis 1 of [N,C,H,W]
template <typename T> VarT<T> slice_axis(const VarT<T>& x, int axis, std::int64_t start, std::int64_t len);

template <typename T> VarT<T> matmul(const VarT<T>& a, const VarT<T>& b);  // [M,P]x[P,Q]
template <typename T> VarT<T> bmm(const VarT<T>& a, const VarT<T>& b);     // [N,M,P]x[N,P,Q]

template <typename T> VarT<T> softmax_lastdim(const VarT<T>& x);
template <typename T> VarT<T> channel_softmax(const VarT<T>& x);  // [M,L], rows sum to 1
template <typename T> VarT<T> spatial_softmax(const VarT<T>& x);  // [N,K,H,W], each plane sums to 1

// cross-correlation; bias may be null
template <typename T>
VarT<T> conv2d(const VarT<T>& x, const VarT<T>& w, const VarT<T>& bias, const Conv2dSpec& spec);

// coords: [N,2,H,W], channel 0 = sample x, channel 1 = sample y, pixel units,
// clamped to the input grid before interpolation
template <typename T> VarT<T> bilinear_sample(const VarT<T>& x, const VarT<T>& coords);

template <typename T>
VarT<T> bilinear_resize(const VarT<T>& x, std::int64_t out_h, std::int64_t out_w, bool align_corners);

// offsets: [N,2,H,W] displacement field; out(p) = sample(x, p + offsets(p))
template <typename T> VarT<T> warp(const VarT<T>& x, const VarT<T>& offsets);

template <typename T>
VarT<T> batch_norm(const VarT<T>& x, const VarT<T>& gamma, const VarT<T>& beta,
                   const VarT<T>& running_mean, const VarT<T>& running_var, bool training,
                   T momentum, T eps);

// mean over non-ignored pixels of -log softmax(logits)[label]
template <typename T>
VarT<T> cross_entropy(const VarT<T>& logits, const IntTensor& labels, int ignore_index);

// constant sampling grid: channel 0 = x index, channel 1 = y index
template <typename T> TensorT<T> identity_grid(std::int64_t n, std::int64_t h, std::int64_t w);

// ---------------------------------------------------------------------------
// raw helpers (no tape); minor-two-axes image ops reused by augmentation
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> resize_bilinear(const TensorT<T>& x, std::int64_t out_h, std::int64_t out_w, bool align_corners);

IntTensor resize_nearest(const IntTensor& x, std::int64_t out_h, std::int64_t out_w);

template <typename T> TensorT<T> hflip(const TensorT<T>& x);  // reverses the last axis
IntTensor hflip_int(const IntTensor& x);

template <typename T> IntTensor argmax_channels(const TensorT<T>& logits);  // [N,C,H,W] -> [N,H,W]

}  // namespace glpnet
