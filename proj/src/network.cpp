#include "glpnet/network.hpp"

namespace glpnet {

constexpr int BackboneConfig::stage_strides[4];

void BackboneConfig::validate() const {
    require_config(stage_channels.size() == 4, "backbone: stage_channels needs 4 entries");
    for (auto c : stage_channels) require_config(c >= 1, "backbone: channels must be positive");
    require_config(!last_stage_dilations.empty(), "backbone: last_stage_dilations must be non-empty");
    for (auto d : last_stage_dilations) require_config(d >= 1, "backbone: dilations must be >= 1");
    require_config(blocks_per_stage >= 1, "backbone: blocks_per_stage must be >= 1");
}

void ModelConfig::normalize() {
    if (use_lcfm) lcfm_stages.insert(4);
    use_lcfm = lcfm_stages.count(4) > 0;
}

void ModelConfig::validate() const {
    backbone.validate();
    for (int s : lcfm_stages)
        require_config(s >= 1 && s <= 4, "lcfm_stages entries must be in 1..4, got " + std::to_string(s));
    require_config(num_classes >= 2, "num_classes must be >= 2");
    require_config(decoder_channels >= 1, "decoder_channels must be >= 1");
    require_config(gcfm.k_contexts >= 1 && gcfm.k_contexts <= 64,
                   "gcfm.k must be in [1,64], got " + std::to_string(gcfm.k_contexts));
    require_config(aux_taps == "merge,refine" || aux_taps == "merge,merge" ||
                       aux_taps == "refine,refine" || aux_taps == "refine,merge",
                   "aux_taps must pick merge|refine per resolution, got '" + aux_taps + "'");
    if (use_gcfm)
        require_config(backbone.stage_channels[3] % 4 == 0,
                       "gcfm needs stage-4 channels divisible by 4");
}

template <typename T>
ResBlockT<T>::ResBlockT(ParamStoreT<T>& store, const std::string& prefix, std::int64_t cin,
                        std::int64_t cout, int stride, int dilation, Rng& rng)
    : conv1(store, prefix + ".conv1", cin, cout, 3, Conv2dSpec{stride, dilation, dilation}, rng,
            /*with_bias=*/false),
      conv2(store, prefix + ".conv2", cout, cout, 3, Conv2dSpec{1, dilation, dilation}, rng,
            /*with_bias=*/false),
      bn1(store, prefix + ".bn1", cout),
      bn2(store, prefix + ".bn2", cout),
      has_proj(stride != 1 || cin != cout) {
    if (has_proj) {
        proj = Conv2dT<T>(store, prefix + ".proj", cin, cout, 1, Conv2dSpec{stride, 0, 1}, rng,
                          /*with_bias=*/false);
        proj_bn = BatchNorm2dT<T>(store, prefix + ".proj_bn", cout);
    }
}

template <typename T>
VarT<T> ResBlockT<T>::forward(const VarT<T>& x, bool training) const {
    auto y = bn2.forward(conv2.forward(relu(bn1.forward(conv1.forward(x), training))), training);
    auto skip = has_proj ? proj_bn.forward(proj.forward(x), training) : x;
    return relu(add(y, skip));
}

template <typename T>
StreamT<T>::StreamT(ParamStoreT<T>& store, const std::string& prefix, std::int64_t in_channels,
                    const BackboneConfig& cfg, Rng& rng) {
    const auto& ch = cfg.stage_channels;
    stem1 = Conv2dT<T>(store, prefix + ".stem1", in_channels, ch[0], 3, Conv2dSpec{2, 1, 1}, rng,
                       /*with_bias=*/false);
    stem1_bn = BatchNorm2dT<T>(store, prefix + ".stem1_bn", ch[0]);
    stem2 = Conv2dT<T>(store, prefix + ".stem2", ch[0], ch[0], 3, Conv2dSpec{2, 1, 1}, rng,
                       /*with_bias=*/false);
    stem2_bn = BatchNorm2dT<T>(store, prefix + ".stem2_bn", ch[0]);

    stages.resize(4);
    for (int s = 0; s < 3; ++s) {
        const std::int64_t cin = s == 0 ? ch[0] : ch[s - 1];
        const int stride = s == 0 ? 1 : 2;
        for (int b = 0; b < cfg.blocks_per_stage; ++b) {
            const std::string name = prefix + ".stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
            stages[s].emplace_back(store, name, b == 0 ? cin : ch[s], ch[s], b == 0 ? stride : 1, 1, rng);
        }
    }
    for (std::size_t b = 0; b < cfg.last_stage_dilations.size(); ++b) {
        const std::string name = prefix + ".stage4.block" + std::to_string(b);
        stages[3].emplace_back(store, name, b == 0 ? ch[2] : ch[3], ch[3], 1,
                               cfg.last_stage_dilations[b], rng);
    }
}

template <typename T>
VarT<T> StreamT<T>::stem(const VarT<T>& x, bool training) const {
    auto y = relu(stem1_bn.forward(stem1.forward(x), training));
    return relu(stem2_bn.forward(stem2.forward(y), training));
}

template <typename T>
VarT<T> StreamT<T>::stage(int k, const VarT<T>& x, bool training) const {
    auto y = x;
    for (const auto& block : stages[static_cast<std::size_t>(k - 1)]) y = block.forward(y, training);
    return y;
}

template <typename T>
ModelT<T>::ModelT(ModelConfig cfg_, std::uint64_t seed) : cfg(std::move(cfg_)) {
    cfg.normalize();
    cfg.validate();
    Rng rng(Rng::mix(seed, 0x6d6f64656cull));
    const auto& ch = cfg.backbone.stage_channels;

    rgb_stream = StreamT<T>(store, "rgb", 3, cfg.backbone, rng);
    d_stream = StreamT<T>(store, "d", 1, cfg.backbone, rng);

    for (int s : cfg.lcfm_stages)
        if (s != 4)
            stage_lcfm.emplace(s, LcfmT<T>(store, "lcfm.stage" + std::to_string(s), ch[s - 1], rng));

    fusion = FusionStage4T<T>(store, ch[3], cfg.use_lcfm, cfg.use_gcfm, cfg.gcfm, rng);

    const std::int64_t dch = cfg.decoder_channels;
    const Conv2dSpec one{1, 0, 1};
    if (cfg.use_decoder) {
        lat4 = Conv2dT<T>(store, "decoder.lat4", ch[3], dch, 1, one, rng);
        lat2 = Conv2dT<T>(store, "decoder.lat2", ch[1], dch, 1, one, rng);
        lat1 = Conv2dT<T>(store, "decoder.lat1", ch[0], dch, 1, one, rng);
        refine8 = Conv2dT<T>(store, "decoder.refine8", dch, dch, 3, Conv2dSpec{1, 1, 1}, rng,
                             /*with_bias=*/false);
        refine8_bn = BatchNorm2dT<T>(store, "decoder.refine8_bn", dch);
        refine4 = Conv2dT<T>(store, "decoder.refine4", dch, dch, 3, Conv2dSpec{1, 1, 1}, rng,
                             /*with_bias=*/false);
        refine4_bn = BatchNorm2dT<T>(store, "decoder.refine4_bn", dch);
        classifier = Conv2dT<T>(store, "head.classifier", dch, cfg.num_classes, 1, one, rng);
        aux1_head = Conv2dT<T>(store, "aux1_head.classifier", dch, cfg.num_classes, 1, one, rng);
        aux2_head = Conv2dT<T>(store, "aux2_head.classifier", dch, cfg.num_classes, 1, one, rng);
    } else {
        classifier = Conv2dT<T>(store, "head.classifier", ch[3], cfg.num_classes, 1, one, rng);
    }
}

template <typename T>
StageFeaturesT<T> ModelT<T>::encoder_forward(const VarT<T>& rgb, const VarT<T>& depth,
                                             bool training) const {
    require_dim(rgb->value.ndim() == 4 && rgb->value.dim(1) == 3,
                "encoder: rgb must be [N,3,H,W], got " + shape_str(rgb->value.shape));
    require_dim(depth->value.ndim() == 4 && depth->value.dim(1) == 1,
                "encoder: depth must be [N,1,H,W], got " + shape_str(depth->value.shape));
    require_dim(rgb->value.dim(0) == depth->value.dim(0) && rgb->value.dim(2) == depth->value.dim(2) &&
                    rgb->value.dim(3) == depth->value.dim(3),
                "encoder: rgb/depth extents differ");
    require_dim(rgb->value.dim(2) % 16 == 0 && rgb->value.dim(3) % 16 == 0,
                "encoder: input extents must be divisible by 16, got " + shape_str(rgb->value.shape));

    auto r = rgb_stream.stem(rgb, training);
    auto d = d_stream.stem(depth, training);

    StageFeaturesT<T> out;
    RgbdFeatT<T>* slots[3] = {&out.s1, &out.s2, &out.s3};
    for (int k = 1; k <= 3; ++k) {
        r = rgb_stream.stage(k, r, training);
        d = d_stream.stage(k, d, training);
        RgbdFeatT<T> pair{r, d};
        auto it = stage_lcfm.find(k);
        r = it == stage_lcfm.end() ? additive_fuse(pair) : it->second.forward(pair);
        *slots[k - 1] = RgbdFeatT<T>{r, d};
    }
    out.s4 = RgbdFeatT<T>{rgb_stream.stage(4, r, training), d_stream.stage(4, d, training)};
    return out;
}

template <typename T>
ModelOutputT<T> ModelT<T>::forward(const VarT<T>& rgb, const VarT<T>& depth, bool training,
                                   bool want_trace) const {
    const std::int64_t h = rgb->value.dim(2), w = rgb->value.dim(3);
    auto feats = encoder_forward(rgb, depth, training);

    ModelOutputT<T> out;
    auto fused4 = fusion.forward(feats.s4, training, want_trace ? &out.trace : nullptr,
                                 want_trace ? &out.masks : nullptr);

    if (!cfg.use_decoder) {
        out.logits = bilinear_resize(classifier.forward(fused4), h, w, true);
        return out;
    }

    const auto& skip2 = feats.s2.rgb;
    const auto& skip1 = feats.s1.rgb;
    auto x16 = lat4.forward(fused4);
    auto merged8 = add(bilinear_resize(x16, skip2->value.dim(2), skip2->value.dim(3), true),
                       lat2.forward(skip2));
    auto refined8 = relu(refine8_bn.forward(refine8.forward(merged8), training));
    auto merged4 = add(bilinear_resize(refined8, skip1->value.dim(2), skip1->value.dim(3), true),
                       lat1.forward(skip1));
    auto refined4 = relu(refine4_bn.forward(refine4.forward(merged4), training));

    out.logits = bilinear_resize(classifier.forward(refined4), h, w, true);
    auto tap1 = cfg.aux_taps.substr(0, cfg.aux_taps.find(',')) == "refine" ? refined8 : merged8;
    auto tap2 = cfg.aux_taps.substr(cfg.aux_taps.find(',') + 1) == "merge" ? merged4 : refined4;
    out.aux1 = bilinear_resize(aux1_head.forward(tap1), h, w, true);
    out.aux2 = bilinear_resize(aux2_head.forward(tap2), h, w, true);
    return out;
}

template struct ResBlockT<float>;
template struct ResBlockT<double>;
template struct StreamT<float>;
template struct StreamT<double>;
template struct ModelT<float>;
template struct ModelT<double>;

}  // namespace glpnet
