#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "glpnet/fusion.hpp"

namespace glpnet {

// Overall stride 16; stage 4 trades stride for dilation, so its block count
// equals the dilation list length.
struct BackboneConfig {
    std::vector<std::int64_t> stage_channels{16, 32, 64, 64};
    std::vector<int> last_stage_dilations{1, 1, 1};  // multi-grid option: {1,2,4}
    int blocks_per_stage = 2;

    static constexpr int stage_strides[4] = {4, 8, 16, 16};
    void validate() const;
};

struct ModelConfig {
    BackboneConfig backbone;
    GcfmConfig gcfm;
    bool use_lcfm = false;  // shorthand for 4 ∈ lcfm_stages
    bool use_gcfm = false;
    bool use_decoder = false;
    std::set<int> lcfm_stages;
    std::int64_t num_classes = 4;
    std::int64_t decoder_channels = 256;
    std::string aux_taps = "merge,refine";  // tap choice at 1/8 and 1/4: merge|refine

    // reconciles use_lcfm with lcfm_stages (either may imply the other)
    void normalize();
    void validate() const;
};

template <typename T>
struct ResBlockT {
    Conv2dT<T> conv1, conv2;
    BatchNorm2dT<T> bn1, bn2;
    Conv2dT<T> proj;
    BatchNorm2dT<T> proj_bn;
    bool has_proj = false;

    ResBlockT() = default;
    ResBlockT(ParamStoreT<T>& store, const std::string& prefix, std::int64_t cin, std::int64_t cout,
              int stride, int dilation, Rng& rng);
    VarT<T> forward(const VarT<T>& x, bool training) const;
};

// One modality branch: stride-4 stem then four residual stages.
template <typename T>
struct StreamT {
    Conv2dT<T> stem1, stem2;
    BatchNorm2dT<T> stem1_bn, stem2_bn;
    std::vector<std::vector<ResBlockT<T>>> stages;

    StreamT() = default;
    StreamT(ParamStoreT<T>& store, const std::string& prefix, std::int64_t in_channels,
            const BackboneConfig& cfg, Rng& rng);
    VarT<T> stem(const VarT<T>& x, bool training) const;
    VarT<T> stage(int k, const VarT<T>& x, bool training) const;  // k in 1..4
};

template <typename T>
struct StageFeaturesT {
    RgbdFeatT<T> s1, s2, s3;  // rgb = post-propagation feature, depth = branch feature
    RgbdFeatT<T> s4;          // unfused, feeds the fusion site
};

template <typename T>
struct ModelOutputT {
    VarT<T> logits;        // [N,classes,H,W] at input resolution
    VarT<T> aux1, aux2;    // null without decoder
    GcfmTraceT<T> trace;   // filled when requested and G-CFM runs
    PoolingMasksT<T> masks;
};

template <typename T>
struct ModelT {
    ModelConfig cfg;
    ParamStoreT<T> store;
    StreamT<T> rgb_stream, d_stream;
    std::map<int, LcfmT<T>> stage_lcfm;  // stages 1..3
    FusionStage4T<T> fusion;

    Conv2dT<T> lat4, lat2, lat1;
    Conv2dT<T> refine8, refine4;
    BatchNorm2dT<T> refine8_bn, refine4_bn;
    Conv2dT<T> classifier;
    Conv2dT<T> aux1_head, aux2_head;

    ModelT(ModelConfig cfg, std::uint64_t seed);

    StageFeaturesT<T> encoder_forward(const VarT<T>& rgb, const VarT<T>& depth, bool training) const;
    ModelOutputT<T> forward(const VarT<T>& rgb, const VarT<T>& depth, bool training,
                            bool want_trace = false) const;
};

extern template struct ResBlockT<float>;
extern template struct ResBlockT<double>;
extern template struct StreamT<float>;
extern template struct StreamT<double>;
extern template struct ModelT<float>;
extern template struct ModelT<double>;

}  // namespace glpnet
