#pragma once

#include <string>
#include <utility>

#include "glpnet/nn.hpp"

namespace glpnet {

// Paired per-modality feature maps, identical shapes.
template <typename T>
struct RgbdFeatT {
    VarT<T> rgb;
    VarT<T> depth;
};

// Per-pixel displacement fields, channel 0 = dx, channel 1 = dy, pixel units.
template <typename T>
struct OffsetFieldT {
    VarT<T> rgb_offset;
    VarT<T> d_offset;
};

// Spatial probability maps; each of the K planes sums to 1 over H*W.
template <typename T>
struct PoolingMasksT {
    VarT<T> rgb_mask;
    VarT<T> d_mask;
};

// Pooled context vectors per modality plus their concatenation.
template <typename T>
struct ContextBankT {
    VarT<T> rgb_cxt;  // [N,K,C]
    VarT<T> d_cxt;    // [N,K,C]
    VarT<T> joint;    // [N,2K,C]
};

// Attention internals kept for inspection and tests.
template <typename T>
struct GcfmTraceT {
    VarT<T> q;       // [N,C/4,H,W]
    VarT<T> keys;    // [N,C/4,M]
    VarT<T> values;  // [N,C,M]
    VarT<T> attn;    // [N,H*W,M] rows sum to 1
};

enum class GcfmVariant { full, var1, var2 };

GcfmVariant gcfm_variant_from(const std::string& s);
std::string gcfm_variant_name(GcfmVariant v);

struct GcfmConfig {
    int k_contexts = 15;  // configurable 1..64
    GcfmVariant variant = GcfmVariant::full;
};

template <typename T>
VarT<T> additive_fuse(const RgbdFeatT<T>& f);

// Offset-predict-and-warp alignment. The offset conv is 3x3, pad 1,
// 2C -> 4 channels, zero-initialized, so the module starts as the
// plain additive fusion (identity-at-init).
template <typename T>
struct LcfmT {
    Conv2dT<T> offset_conv;

    LcfmT() = default;
    LcfmT(ParamStoreT<T>& store, const std::string& prefix, std::int64_t channels, Rng& rng);

    OffsetFieldT<T> predict_offsets(const RgbdFeatT<T>& f) const;
    VarT<T> forward(const RgbdFeatT<T>& f) const;
};

// Mask-pooled multi-modal context attention with a residual connection.
// The value map is zero-initialized so the module starts as the identity
// on the RGB feature.
template <typename T>
struct GcfmT {
    Conv2dT<T> rgb_mask_conv;  // 1x1, C -> K
    Conv2dT<T> d_mask_conv;    // 1x1, C -> K
    Conv2dT<T> query_conv;     // 1x1, C -> C/4
    LinearT<T> key_lin;        // C -> C/4
    LinearT<T> value_lin;      // C -> C
    GcfmConfig cfg;
    std::int64_t channels = 0;

    GcfmT() = default;
    GcfmT(ParamStoreT<T>& store, const std::string& prefix, std::int64_t channels, GcfmConfig cfg,
          Rng& rng);

    std::pair<PoolingMasksT<T>, ContextBankT<T>> extract_contexts(const RgbdFeatT<T>& f) const;
    // bank: [N,M,C] with M = 2K (full) or K (variants)
    VarT<T> attend(const VarT<T>& rgb_in, const VarT<T>& bank, GcfmTraceT<T>* trace = nullptr) const;

    VarT<T> forward(const RgbdFeatT<T>& f, GcfmTraceT<T>* trace = nullptr,
                    PoolingMasksT<T>* masks = nullptr) const;
    VarT<T> var1(const VarT<T>& rgb_in, GcfmTraceT<T>* trace = nullptr,
                 VarT<T>* mask = nullptr) const;
    VarT<T> var2(const RgbdFeatT<T>& f, GcfmTraceT<T>* trace = nullptr,
                 VarT<T>* mask = nullptr) const;
    // dispatch on cfg.variant
    VarT<T> run(const RgbdFeatT<T>& f, GcfmTraceT<T>* trace = nullptr,
                PoolingMasksT<T>* masks = nullptr) const;
};

// The stage-4 fusion site: L-CFM and G-CFM in parallel, concat, merge conv
// block. With one module disabled the merge consumes that module's output
// alone; with both disabled it falls back to additive fusion (no extra
// parameters exist in that configuration).
template <typename T>
struct FusionStage4T {
    bool use_lcfm = false;
    bool use_gcfm = false;
    LcfmT<T> lcfm;
    GcfmT<T> gcfm;
    Conv2dT<T> merge_conv;
    BatchNorm2dT<T> merge_bn;

    FusionStage4T() = default;
    FusionStage4T(ParamStoreT<T>& store, std::int64_t channels, bool use_lcfm, bool use_gcfm,
                  GcfmConfig gcfm_cfg, Rng& rng);

    VarT<T> forward(const RgbdFeatT<T>& f, bool training, GcfmTraceT<T>* trace = nullptr,
                    PoolingMasksT<T>* masks = nullptr) const;
};

extern template struct LcfmT<float>;
extern template struct LcfmT<double>;
extern template struct GcfmT<float>;
extern template struct GcfmT<double>;
extern template struct FusionStage4T<float>;
extern template struct FusionStage4T<double>;

}  // namespace glpnet
