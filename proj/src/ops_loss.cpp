#include <cmath>

#include "glpnet/ops.hpp"

namespace glpnet {

namespace {

// stable per-pixel log-sum-exp over the channel axis
template <typename T>
T lse_channels(const T* base, std::int64_t c, std::int64_t hw) {
    T m = base[0];
    for (std::int64_t ch = 1; ch < c; ++ch) m = std::max(m, base[ch * hw]);
    T s = T(0);
    for (std::int64_t ch = 0; ch < c; ++ch) s += std::exp(base[ch * hw] - m);
    return m + std::log(s);
}

}  // namespace

template <typename T>
VarT<T> cross_entropy(const VarT<T>& logits, const IntTensor& labels, int ignore_index) {
    require_dim(logits->value.ndim() == 4, "cross_entropy: logits must be [N,C,H,W], got " +
                                               shape_str(logits->value.shape));
    const std::int64_t n = logits->value.dim(0), c = logits->value.dim(1);
    const std::int64_t h = logits->value.dim(2), w = logits->value.dim(3);
    require_dim(labels.ndim() == 3 && labels.dim(0) == n && labels.dim(1) == h && labels.dim(2) == w,
                "cross_entropy: labels must be [N,H,W] matching logits, got " + shape_str(labels.shape));
    const std::int64_t hw = h * w;

    std::int64_t count = 0;
    T total = T(0);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t p = 0; p < hw; ++p) {
            const std::int32_t lab = labels.data[static_cast<std::size_t>(i * hw + p)];
            if (lab == ignore_index) continue;
            require_data(lab >= 0 && lab < c, "cross_entropy: label " + std::to_string(lab) +
                                                  " outside [0, " + std::to_string(c) + ") at pixel " +
                                                  std::to_string(i * hw + p));
            const T* base = logits->value.ptr() + i * c * hw + p;
            total += lse_channels(base, c, hw) - base[lab * hw];
            ++count;
        }

    TensorT<T> out(Shape{1});
    out.data[0] = count > 0 ? total / static_cast<T>(count) : T(0);

    IntTensor labs = labels;
    return make_node<T>(std::move(out), {logits},
                        [n, c, hw, count, ignore_index, labs = std::move(labs)](NodeT<T>& node) {
                            TensorT<T> g(node.inputs[0]->value.shape);
                            if (count > 0) {
                                const T gscale = node.grad.data[0] / static_cast<T>(count);
                                for (std::int64_t i = 0; i < n; ++i)
                                    for (std::int64_t p = 0; p < hw; ++p) {
                                        const std::int32_t lab = labs.data[static_cast<std::size_t>(i * hw + p)];
                                        if (lab == ignore_index) continue;
                                        const T* base = node.inputs[0]->value.ptr() + i * c * hw + p;
                                        T m = base[0];
                                        for (std::int64_t ch = 1; ch < c; ++ch) m = std::max(m, base[ch * hw]);
                                        T s = T(0);
                                        for (std::int64_t ch = 0; ch < c; ++ch) s += std::exp(base[ch * hw] - m);
                                        const T inv = T(1) / s;
                                        T* gp = g.ptr() + i * c * hw + p;
                                        for (std::int64_t ch = 0; ch < c; ++ch) {
                                            const T prob = std::exp(base[ch * hw] - m) * inv;
                                            gp[ch * hw] = gscale * (prob - (ch == lab ? T(1) : T(0)));
                                        }
                                    }
                            }
                            node.inputs[0]->accum_grad(g);
                        });
}

template VarT<float> cross_entropy<float>(const VarT<float>&, const IntTensor&, int);
template VarT<double> cross_entropy<double>(const VarT<double>&, const IntTensor&, int);

}  // namespace glpnet
