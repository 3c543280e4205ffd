#include "glpnet/fusion.hpp"

namespace glpnet {

GcfmVariant gcfm_variant_from(const std::string& s) {
    if (s == "full") return GcfmVariant::full;
    if (s == "var1") return GcfmVariant::var1;
    if (s == "var2") return GcfmVariant::var2;
    throw ConfigError("gcfm variant must be full|var1|var2, got '" + s + "'");
}

std::string gcfm_variant_name(GcfmVariant v) {
    switch (v) {
        case GcfmVariant::full: return "full";
        case GcfmVariant::var1: return "var1";
        default: return "var2";
    }
}

namespace {

template <typename T>
void check_pair(const RgbdFeatT<T>& f, const char* op) {
    require_dim(f.rgb && f.depth, std::string(op) + ": missing modality");
    require_dim(f.rgb->value.shape == f.depth->value.shape,
                std::string(op) + ": modality shapes differ, " + shape_str(f.rgb->value.shape) + " vs " +
                    shape_str(f.depth->value.shape));
    require_dim(f.rgb->value.ndim() == 4, std::string(op) + ": features must be [N,C,H,W]");
}

}  // namespace

template <typename T>
VarT<T> additive_fuse(const RgbdFeatT<T>& f) {
    check_pair(f, "additive_fuse");
    return add(f.rgb, f.depth);
}

template <typename T>
LcfmT<T>::LcfmT(ParamStoreT<T>& store, const std::string& prefix, std::int64_t channels, Rng& rng)
    : offset_conv(store, prefix + ".offset_conv", 2 * channels, 4, 3, Conv2dSpec{1, 1, 1}, rng,
                  /*with_bias=*/true, /*zero_init=*/true) {}

template <typename T>
OffsetFieldT<T> LcfmT<T>::predict_offsets(const RgbdFeatT<T>& f) const {
    check_pair(f, "lcfm");
    auto both = concat_channels(f.rgb, f.depth);
    auto raw = offset_conv.forward(both);  // [N,4,H,W]
    OffsetFieldT<T> off;
    off.rgb_offset = slice_axis(raw, 1, 0, 2);
    off.d_offset = slice_axis(raw, 1, 2, 2);
    return off;
}

template <typename T>
VarT<T> LcfmT<T>::forward(const RgbdFeatT<T>& f) const {
    auto off = predict_offsets(f);
    return add(warp(f.rgb, off.rgb_offset), warp(f.depth, off.d_offset));
}

template <typename T>
GcfmT<T>::GcfmT(ParamStoreT<T>& store, const std::string& prefix, std::int64_t channels_,
                GcfmConfig cfg_, Rng& rng)
    : cfg(cfg_), channels(channels_) {
    require_config(cfg.k_contexts >= 1 && cfg.k_contexts <= 64,
                   "gcfm: k_contexts must be in [1,64], got " + std::to_string(cfg.k_contexts));
    require_config(channels % 4 == 0,
                   "gcfm: channels must be divisible by 4, got " + std::to_string(channels));
    const std::int64_t k = cfg.k_contexts;
    const Conv2dSpec one{1, 0, 1};
    rgb_mask_conv = Conv2dT<T>(store, prefix + ".rgb_mask_conv", channels, k, 1, one, rng);
    d_mask_conv = Conv2dT<T>(store, prefix + ".d_mask_conv", channels, k, 1, one, rng);
    query_conv = Conv2dT<T>(store, prefix + ".query_conv", channels, channels / 4, 1, one, rng);
    key_lin = LinearT<T>(store, prefix + ".key_lin", channels, channels / 4, rng);
    value_lin = LinearT<T>(store, prefix + ".value_lin", channels, channels, rng, /*zero_init=*/true);
}

namespace {

// mask = spatial_softmax(conv1x1(feat)); cxt[k] = sum_p mask[k,p] * feat[:,p]
template <typename T>
std::pair<VarT<T>, VarT<T>> pool_contexts(const Conv2dT<T>& mask_conv, const VarT<T>& feat) {
    const std::int64_t n = feat->value.dim(0), c = feat->value.dim(1);
    const std::int64_t hw = feat->value.dim(2) * feat->value.dim(3);
    auto mask = spatial_softmax(mask_conv.forward(feat));
    const std::int64_t k = mask->value.dim(1);
    auto mask_flat = reshape(mask, Shape{n, k, hw});
    auto feat_rows = transpose_last2(reshape(feat, Shape{n, c, hw}));  // [N,HW,C]
    auto cxt = bmm(mask_flat, feat_rows);                              // [N,K,C]
    return {mask, cxt};
}

}  // namespace

template <typename T>
std::pair<PoolingMasksT<T>, ContextBankT<T>> GcfmT<T>::extract_contexts(const RgbdFeatT<T>& f) const {
    check_pair(f, "gcfm");
    require_dim(f.rgb->value.dim(1) == channels, "gcfm: channel mismatch, expected " +
                                                     std::to_string(channels) + ", got " +
                                                     std::to_string(f.rgb->value.dim(1)));
    auto [rgb_mask, rgb_cxt] = pool_contexts(rgb_mask_conv, f.rgb);
    auto [d_mask, d_cxt] = pool_contexts(d_mask_conv, f.depth);
    PoolingMasksT<T> masks{rgb_mask, d_mask};
    ContextBankT<T> bank{rgb_cxt, d_cxt, concat<T>({rgb_cxt, d_cxt}, 1)};
    return {masks, bank};
}

template <typename T>
VarT<T> GcfmT<T>::attend(const VarT<T>& rgb_in, const VarT<T>& bank, GcfmTraceT<T>* trace) const {
    require_dim(bank->value.ndim() == 3 && bank->value.dim(2) == channels,
                "gcfm: bank must be [N,M,C], got " + shape_str(bank->value.shape));
    const std::int64_t n = rgb_in->value.dim(0), c = rgb_in->value.dim(1);
    const std::int64_t h = rgb_in->value.dim(2), w = rgb_in->value.dim(3);
    const std::int64_t hw = h * w;
    const std::int64_t cq = c / 4;

    auto q = query_conv.forward(rgb_in);                         // [N,C/4,H,W]
    auto q_rows = transpose_last2(reshape(q, Shape{n, cq, hw})); // [N,HW,C/4]
    auto keys = key_lin.forward(bank);                           // [N,M,C/4]
    auto values = value_lin.forward(bank);                       // [N,M,C]
    auto logits = bmm(q_rows, transpose_last2(keys));            // [N,HW,M]
    auto attn = softmax_lastdim(logits);
    auto attended = bmm(attn, values);                           // [N,HW,C]
    auto out = add(reshape(transpose_last2(attended), Shape{n, c, h, w}), rgb_in);

    if (trace) {
        trace->q = q;
        trace->keys = transpose_last2(keys);      // [N,C/4,M]
        trace->values = transpose_last2(values);  // [N,C,M]
        trace->attn = attn;
    }
    return out;
}

template <typename T>
VarT<T> GcfmT<T>::forward(const RgbdFeatT<T>& f, GcfmTraceT<T>* trace, PoolingMasksT<T>* masks) const {
    auto [m, bank] = extract_contexts(f);
    if (masks) *masks = m;
    return attend(f.rgb, bank.joint, trace);
}

template <typename T>
VarT<T> GcfmT<T>::var1(const VarT<T>& rgb_in, GcfmTraceT<T>* trace, VarT<T>* mask) const {
    auto [m, cxt] = pool_contexts(rgb_mask_conv, rgb_in);
    if (mask) *mask = m;
    return attend(rgb_in, cxt, trace);
}

template <typename T>
VarT<T> GcfmT<T>::var2(const RgbdFeatT<T>& f, GcfmTraceT<T>* trace, VarT<T>* mask) const {
    check_pair(f, "gcfm");
    auto fused = additive_fuse(f);
    auto [m, cxt] = pool_contexts(rgb_mask_conv, fused);
    if (mask) *mask = m;
    return attend(f.rgb, cxt, trace);
}

template <typename T>
VarT<T> GcfmT<T>::run(const RgbdFeatT<T>& f, GcfmTraceT<T>* trace, PoolingMasksT<T>* masks) const {
    switch (cfg.variant) {
        case GcfmVariant::full:
            return forward(f, trace, masks);
        case GcfmVariant::var1: {
            VarT<T> m;
            auto out = var1(f.rgb, trace, &m);
            if (masks) *masks = PoolingMasksT<T>{m, nullptr};
            return out;
        }
        default: {
            VarT<T> m;
            auto out = var2(f, trace, &m);
            if (masks) *masks = PoolingMasksT<T>{m, nullptr};
            return out;
        }
    }
}

template <typename T>
FusionStage4T<T>::FusionStage4T(ParamStoreT<T>& store, std::int64_t channels, bool use_lcfm_,
                                bool use_gcfm_, GcfmConfig gcfm_cfg, Rng& rng)
    : use_lcfm(use_lcfm_), use_gcfm(use_gcfm_) {
    if (use_lcfm) lcfm = LcfmT<T>(store, "lcfm", channels, rng);
    if (use_gcfm) gcfm = GcfmT<T>(store, "gcfm", channels, gcfm_cfg, rng);
    if (use_lcfm || use_gcfm) {
        const std::int64_t in_ch = (use_lcfm && use_gcfm) ? 2 * channels : channels;
        merge_conv = Conv2dT<T>(store, "stage4.merge_conv", in_ch, channels, 3, Conv2dSpec{1, 1, 1}, rng);
        merge_bn = BatchNorm2dT<T>(store, "stage4.merge_bn", channels);
    }
}

template <typename T>
VarT<T> FusionStage4T<T>::forward(const RgbdFeatT<T>& f, bool training, GcfmTraceT<T>* trace,
                                  PoolingMasksT<T>* masks) const {
    if (!use_lcfm && !use_gcfm) return additive_fuse(f);
    VarT<T> merged;
    if (use_lcfm && use_gcfm)
        merged = concat_channels(lcfm.forward(f), gcfm.run(f, trace, masks));
    else if (use_lcfm)
        merged = lcfm.forward(f);
    else
        merged = gcfm.run(f, trace, masks);
    return relu(merge_bn.forward(merge_conv.forward(merged), training));
}

#define GLPNET_INSTANTIATE_FUSION(T)                       \
    template VarT<T> additive_fuse<T>(const RgbdFeatT<T>&); \
    template struct LcfmT<T>;                               \
    template struct GcfmT<T>;                               \
    template struct FusionStage4T<T>;

GLPNET_INSTANTIATE_FUSION(float)
GLPNET_INSTANTIATE_FUSION(double)

}  // namespace glpnet
