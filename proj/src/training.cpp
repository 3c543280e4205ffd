#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "glpnet/ops.hpp"
#include "glpnet/training.hpp"

namespace glpnet {

void TrainConfig::validate() const {
    require_config(lr >= 0, "train.lr must be non-negative");
    require_config(momentum >= 0 && momentum < 1, "train.momentum must lie in [0,1)");
    require_config(weight_decay >= 0, "train.weight_decay must be non-negative");
    require_config(batch_size >= 1, "train.batch_size must be positive");
    require_config(epochs >= 1, "train.epochs must be positive");
    require_config(poly_power > 0, "train.poly_power must be positive");
    require_config(aux_weight >= 0, "train.aux_weight must be non-negative");
    require_config(scale_min > 0 && scale_min <= scale_max, "train scale range must satisfy 0 < min <= max");
    require_config(crop_h >= 16 && crop_w >= 16 && crop_h % 16 == 0 && crop_w % 16 == 0,
                   "train crop extents must be positive multiples of 16");
    require_config(ignore_index >= 0 && ignore_index <= 255, "train.ignore_index must fit in a label byte");
}

void EvalConfig::validate() const {
    require_config(!ms_scales.empty(), "eval.ms_scales must not be empty");
    for (double s : ms_scales) require_config(s > 0, "eval.ms_scales entries must be positive");
}

double poly_lr(double base_lr, std::int64_t iter, std::int64_t max_iter, double power) {
    require_contract(max_iter > 0, "poly_lr: max_iter must be positive");
    require_contract(iter >= 0, "poly_lr: iter must be non-negative");
    require_contract(iter <= max_iter, "poly_lr: iter " + std::to_string(iter) + " exceeds max_iter " +
                                           std::to_string(max_iter));
    return base_lr * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), power);
}

template <typename T>
void SgdT<T>::step(const std::vector<VarT<T>>& params) {
    for (const auto& p : params) {
        if (!p->is_param) continue;
        p->ensure_grad();
        auto [it, fresh] = velocity_.try_emplace(p.get(), p->value.shape);
        TensorT<T>& buf = it->second;
        const std::size_t n = p->value.data.size();
        for (std::size_t i = 0; i < n; ++i) {
            const T g = p->grad.data[i] + static_cast<T>(weight_decay_) * p->value.data[i];
            buf.data[i] = static_cast<T>(momentum_) * buf.data[i] + g;
            p->value.data[i] -= static_cast<T>(lr_) * buf.data[i];
        }
    }
}

namespace {

// pad bottom/right to at least (th, tw); images get zeros, labels ignore_index
template <typename T>
TensorT<T> pad_image(const TensorT<T>& x, std::int64_t th, std::int64_t tw) {
    const std::int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h >= th && w >= tw) return x;
    TensorT<T> out(Shape{c, std::max(h, th), std::max(w, tw)});
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t xx = 0; xx < w; ++xx) out.at3(ch, y, xx) = x.at3(ch, y, xx);
    return out;
}

IntTensor pad_label(const IntTensor& x, std::int64_t th, std::int64_t tw, std::int32_t fill) {
    const std::int64_t h = x.dim(0), w = x.dim(1);
    if (h >= th && w >= tw) return x;
    IntTensor out(Shape{std::max(h, th), std::max(w, tw)}, fill);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t xx = 0; xx < w; ++xx) out.at2(y, xx) = x.at2(y, xx);
    return out;
}

template <typename T>
TensorT<T> crop_image(const TensorT<T>& x, std::int64_t y0, std::int64_t x0, std::int64_t th, std::int64_t tw) {
    TensorT<T> out(Shape{x.dim(0), th, tw});
    for (std::int64_t ch = 0; ch < x.dim(0); ++ch)
        for (std::int64_t y = 0; y < th; ++y)
            for (std::int64_t xx = 0; xx < tw; ++xx) out.at3(ch, y, xx) = x.at3(ch, y0 + y, x0 + xx);
    return out;
}

IntTensor crop_label(const IntTensor& x, std::int64_t y0, std::int64_t x0, std::int64_t th, std::int64_t tw) {
    IntTensor out(Shape{th, tw});
    for (std::int64_t y = 0; y < th; ++y)
        for (std::int64_t xx = 0; xx < tw; ++xx) out.at2(y, xx) = x.at2(y0 + y, x0 + xx);
    return out;
}

}  // namespace

RgbdSample augment(const RgbdSample& s, Rng& rng, const TrainConfig& cfg) {
    const std::int64_t h = s.rgb.dim(1), w = s.rgb.dim(2);
    const double scale = rng.uniform(cfg.scale_min, cfg.scale_max);
    const std::int64_t nh = std::max<std::int64_t>(1, std::llround(static_cast<double>(h) * scale));
    const std::int64_t nw = std::max<std::int64_t>(1, std::llround(static_cast<double>(w) * scale));

    RgbdSample out;
    out.rgb = resize_bilinear(s.rgb, nh, nw, true);
    out.depth = resize_bilinear(s.depth, nh, nw, true);
    if (cfg.depth_scale_div)
        for (auto& v : out.depth.data) v = static_cast<float>(v / scale);
    out.label = resize_nearest(s.label, nh, nw);

    out.rgb = pad_image(out.rgb, cfg.crop_h, cfg.crop_w);
    out.depth = pad_image(out.depth, cfg.crop_h, cfg.crop_w);
    out.label = pad_label(out.label, cfg.crop_h, cfg.crop_w, static_cast<std::int32_t>(cfg.ignore_index));

    const std::int64_t ph = out.rgb.dim(1), pw = out.rgb.dim(2);
    const std::int64_t y0 = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(ph - cfg.crop_h + 1)));
    const std::int64_t x0 = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(pw - cfg.crop_w + 1)));
    out.rgb = crop_image(out.rgb, y0, x0, cfg.crop_h, cfg.crop_w);
    out.depth = crop_image(out.depth, y0, x0, cfg.crop_h, cfg.crop_w);
    out.label = crop_label(out.label, y0, x0, cfg.crop_h, cfg.crop_w);

    if (cfg.flip && rng.bernoulli(0.5)) {
        out.rgb = hflip(out.rgb);
        out.depth = hflip(out.depth);
        out.label = hflip_int(out.label);
    }
    return out;
}

Dataset Dataset::from_manifest(const DatasetManifest& m) {
    Dataset d;
    d.num_classes = m.num_classes;
    d.samples.reserve(static_cast<std::size_t>(m.size()));
    for (std::int64_t i = 0; i < m.size(); ++i) d.samples.push_back(load_sample(m, i));
    return d;
}

Batch stack_batch(const std::vector<RgbdSample>& samples) {
    require_contract(!samples.empty(), "stack_batch: empty batch");
    const std::int64_t n = static_cast<std::int64_t>(samples.size());
    const std::int64_t h = samples[0].rgb.dim(1), w = samples[0].rgb.dim(2);
    Batch b{TensorT<float>(Shape{n, 3, h, w}), TensorT<float>(Shape{n, 1, h, w}), IntTensor(Shape{n, h, w})};
    for (std::int64_t i = 0; i < n; ++i) {
        const RgbdSample& s = samples[static_cast<std::size_t>(i)];
        require_dim(s.rgb.dim(1) == h && s.rgb.dim(2) == w, "stack_batch: mixed sample extents");
        std::copy(s.rgb.data.begin(), s.rgb.data.end(), b.rgb.data.begin() + 3 * h * w * i);
        std::copy(s.depth.data.begin(), s.depth.data.end(), b.depth.data.begin() + h * w * i);
        std::copy(s.label.data.begin(), s.label.data.end(), b.label.data.begin() + h * w * i);
    }
    return b;
}

namespace {

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

template <typename T>
TensorT<T> to_precision(const TensorT<float>& x) {
    if constexpr (std::is_same_v<T, float>)
        return x;
    else
        return tensor_cast<T>(x);
}

}  // namespace

template <typename T>
TrainResult train_loop(ModelT<T>& model, const Dataset& train, const Dataset* val, const TrainConfig& cfg,
                       const std::string& diag_dir, const StepHook<T>& hook, bool hook_wants_trace) {
    cfg.validate();
    require_data(train.size() >= 1, "train_loop: empty training set");

    const std::int64_t n = train.size();
    const std::int64_t iters_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t max_iter = cfg.epochs * iters_per_epoch;
    const auto params = model.store.trainable();
    SgdT<T> opt(cfg.lr, cfg.momentum, cfg.weight_decay);

    TrainResult res;
    res.log_csv = "epoch,iter,lr,loss,main,aux1,aux2,miou\n";
    std::int64_t iter = 0;

    for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::int64_t> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(Rng::mix(cfg.seed, 0x534855ull, static_cast<std::uint64_t>(epoch)));
        for (std::int64_t i = n - 1; i > 0; --i) {
            const auto j = static_cast<std::int64_t>(shuffle_rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }

        double ep_loss = 0, ep_main = 0, ep_aux1 = 0, ep_aux2 = 0;
        std::int64_t ep_steps = 0;
        double last_lr = cfg.lr;

        for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
            std::vector<RgbdSample> batch_samples;
            for (std::int64_t i = start; i < std::min(n, start + cfg.batch_size); ++i) {
                const std::int64_t idx = order[static_cast<std::size_t>(i)];
                Rng arng(Rng::mix(Rng::mix(cfg.seed, 0x415547ull, static_cast<std::uint64_t>(epoch)),
                                  static_cast<std::uint64_t>(idx)));
                batch_samples.push_back(augment(train.samples[static_cast<std::size_t>(idx)], arng, cfg));
            }
            Batch b = stack_batch(batch_samples);

            auto rgb = make_var(to_precision<T>(b.rgb), false);
            auto depth = make_var(to_precision<T>(b.depth), false);
            auto out = model.forward(rgb, depth, true, hook_wants_trace);

            auto main = cross_entropy(out.logits, b.label, static_cast<int>(cfg.ignore_index));
            VarT<T> total = main;
            double main_v = main->value.data[0], aux1_v = 0, aux2_v = 0;
            if (out.aux1 && out.aux2) {
                auto aux1 = cross_entropy(out.aux1, b.label, static_cast<int>(cfg.ignore_index));
                auto aux2 = cross_entropy(out.aux2, b.label, static_cast<int>(cfg.ignore_index));
                aux1_v = aux1->value.data[0];
                aux2_v = aux2->value.data[0];
                total = add(main, scale(add(aux1, aux2), static_cast<T>(cfg.aux_weight)));
            }

            const double loss_v = total->value.data[0];
            if (!std::isfinite(loss_v)) {
                if (!diag_dir.empty()) {
                    std::filesystem::create_directories(diag_dir);
                    save_glt(diag_dir + "/bad_batch_rgb.glt", b.rgb);
                    save_glt(diag_dir + "/bad_batch_depth.glt", b.depth);
                    save_glt(diag_dir + "/bad_batch_label.glt", b.label);
                }
                throw NumericalError("train_loop: non-finite loss " + std::to_string(loss_v) + " at iter " +
                                     std::to_string(iter) + (diag_dir.empty() ? "" : "; batch dumped to " + diag_dir));
            }

            last_lr = poly_lr(cfg.lr, iter, max_iter, cfg.poly_power);
            model.store.zero_grad();
            backward(total);
            opt.set_lr(last_lr);
            opt.step(params);
            ++iter;

            ep_loss += loss_v;
            ep_main += main_v;
            ep_aux1 += aux1_v;
            ep_aux2 += aux2_v;
            ++ep_steps;

            if (hook) hook(StepInfo<T>{epoch, iter - 1, loss_v, &out});
        }

        EpochLogRow row;
        row.epoch = epoch + 1;
        row.iter = iter;
        row.lr = last_lr;
        row.loss = ep_loss / static_cast<double>(ep_steps);
        row.main = ep_main / static_cast<double>(ep_steps);
        row.aux1 = ep_aux1 / static_cast<double>(ep_steps);
        row.aux2 = ep_aux2 / static_cast<double>(ep_steps);
        if (val) {
            EvalConfig ec;
            ec.ms_scales = {1.0};
            ec.ms_flip = false;
            row.miou = evaluate(model, *val, ec).miou;
        }
        res.log.push_back(row);
        res.log_csv += std::to_string(row.epoch) + "," + std::to_string(row.iter) + "," + fmt6(row.lr) + "," +
                       fmt6(row.loss) + "," + fmt6(row.main) + "," + fmt6(row.aux1) + "," + fmt6(row.aux2) + "," +
                       fmt6(row.miou) + "\n";
    }
    return res;
}

namespace {

std::int64_t snap16(double v) {
    return std::max<std::int64_t>(16, std::llround(v / 16.0) * 16);
}

}  // namespace

template <typename T>
TensorT<T> multiscale_eval(const ModelT<T>& model, const TensorT<T>& rgb, const TensorT<T>& depth,
                           const EvalConfig& cfg) {
    cfg.validate();
    require_dim(rgb.ndim() == 3 && rgb.dim(0) == 3, "multiscale_eval: rgb must be [3,H,W], got " + shape_str(rgb.shape));
    require_dim(depth.ndim() == 3 && depth.dim(0) == 1,
                "multiscale_eval: depth must be [1,H,W], got " + shape_str(depth.shape));
    const std::int64_t h = rgb.dim(1), w = rgb.dim(2);

    NoGradGuard eval_guard;
    TensorT<T> acc;
    std::int64_t count = 0;

    for (double s : cfg.ms_scales) {
        const std::int64_t nh = snap16(static_cast<double>(h) * s);
        const std::int64_t nw = snap16(static_cast<double>(w) * s);
        TensorT<T> r = resize_bilinear(rgb, nh, nw, true);
        TensorT<T> d = resize_bilinear(depth, nh, nw, true);
        if (cfg.depth_scale_div)
            for (auto& v : d.data) v = static_cast<T>(v / s);
        for (int flipped = 0; flipped < (cfg.ms_flip ? 2 : 1); ++flipped) {
            TensorT<T> ri = flipped ? hflip(r) : r;
            TensorT<T> di = flipped ? hflip(d) : d;
            ri.shape = Shape{1, 3, nh, nw};
            di.shape = Shape{1, 1, nh, nw};
            auto out = model.forward(make_var(ri, false), make_var(di, false), false);
            TensorT<T> logits = out.logits->value;  // [1,classes,nh,nw]
            logits.shape = Shape{logits.dim(1), nh, nw};
            TensorT<T> back = resize_bilinear(logits, h, w, true);
            if (flipped) back = hflip(back);
            if (count == 0)
                acc = back;
            else
                for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += back.data[i];
            ++count;
        }
    }
    for (auto& v : acc.data) v /= static_cast<T>(count);
    return acc;
}

template <typename T>
MetricsResult evaluate(const ModelT<T>& model, const Dataset& data, const EvalConfig& cfg, ConfusionMatrix* cm_out) {
    require_data(data.size() >= 1, "evaluate: empty dataset");
    ConfusionMatrix cm(data.num_classes);
    for (const auto& s : data.samples) {
        TensorT<T> logits = multiscale_eval(model, to_precision<T>(s.rgb), to_precision<T>(s.depth), cfg);
        TensorT<T> batched = logits;
        batched.shape = Shape{1, logits.dim(0), logits.dim(1), logits.dim(2)};
        IntTensor pred = argmax_channels(batched);
        IntTensor flat_pred(Shape{pred.dim(1), pred.dim(2)}, pred.data);
        cm.update(flat_pred, s.label);
    }
    if (cm_out) *cm_out = cm;
    return compute_metrics(cm);
}

template class SgdT<float>;
template class SgdT<double>;
template TrainResult train_loop<float>(ModelT<float>&, const Dataset&, const Dataset*, const TrainConfig&,
                                       const std::string&, const StepHook<float>&, bool);
template TrainResult train_loop<double>(ModelT<double>&, const Dataset&, const Dataset*, const TrainConfig&,
                                        const std::string&, const StepHook<double>&, bool);
template TensorT<float> multiscale_eval<float>(const ModelT<float>&, const TensorT<float>&, const TensorT<float>&,
                                               const EvalConfig&);
template TensorT<double> multiscale_eval<double>(const ModelT<double>&, const TensorT<double>&,
                                                 const TensorT<double>&, const EvalConfig&);
template MetricsResult evaluate<float>(const ModelT<float>&, const Dataset&, const EvalConfig&, ConfusionMatrix*);
template MetricsResult evaluate<double>(const ModelT<double>&, const Dataset&, const EvalConfig&, ConfusionMatrix*);

}  // namespace glpnet
