#pragma once

#include <functional>
#include <unordered_map>

#include "glpnet/dataio.hpp"
#include "glpnet/metrics.hpp"
#include "glpnet/network.hpp"

namespace glpnet {

struct TrainConfig {
    double lr = 0.005;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    std::int64_t batch_size = 4;
    std::int64_t epochs = 40;
    double poly_power = 0.9;
    double aux_weight = 0.2;
    double scale_min = 0.5;
    double scale_max = 2.25;
    std::int64_t crop_h = 64;
    std::int64_t crop_w = 64;
    bool flip = true;
    bool depth_scale_div = true;  // divide depth values by the zoom factor
    std::int64_t ignore_index = 255;
    std::uint64_t seed = 1;

    void validate() const;
};

struct EvalConfig {
    std::vector<double> ms_scales{0.75, 1.0, 1.25};
    bool ms_flip = true;
    bool depth_scale_div = true;  // keep eval-time depth scaling consistent with training

    void validate() const;
};

// base_lr * (1 - iter/max_iter)^power
double poly_lr(double base_lr, std::int64_t iter, std::int64_t max_iter, double power);

template <typename T>
class SgdT {
public:
    SgdT(double lr, double momentum, double weight_decay)
        : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    // v = momentum*v + (grad + wd*param); param -= lr*v
    void step(const std::vector<VarT<T>>& params);

private:
    double lr_, momentum_, weight_decay_;
    std::unordered_map<const NodeT<T>*, TensorT<T>> velocity_;
};

RgbdSample augment(const RgbdSample& s, Rng& rng, const TrainConfig& cfg);

// in-memory dataset; samples are loaded once up front
struct Dataset {
    std::vector<RgbdSample> samples;
    std::int64_t num_classes = 0;

    static Dataset from_manifest(const DatasetManifest& m);
    std::int64_t size() const { return static_cast<std::int64_t>(samples.size()); }
};

struct Batch {
    TensorT<float> rgb;    // [N,3,H,W]
    TensorT<float> depth;  // [N,1,H,W]
    IntTensor label;       // [N,H,W]
};

Batch stack_batch(const std::vector<RgbdSample>& samples);

struct EpochLogRow {
    std::int64_t epoch = 0, iter = 0;
    double lr = 0, loss = 0, main = 0, aux1 = 0, aux2 = 0;
    double miou = -1;  // -1 when no val set
};

struct TrainResult {
    std::vector<EpochLogRow> log;
    std::string log_csv;  // "epoch,iter,lr,loss,main,aux1,aux2,miou" rows
};

template <typename T>
struct StepInfo {
    std::int64_t epoch, iter;
    double loss;
    const ModelOutputT<T>* output;
};

template <typename T>
using StepHook = std::function<void(const StepInfo<T>&)>;

template <typename T>
TrainResult train_loop(ModelT<T>& model, const Dataset& train, const Dataset* val, const TrainConfig& cfg,
                       const std::string& diag_dir = "", const StepHook<T>& hook = nullptr,
                       bool hook_wants_trace = false);

// average logits over rescaled (and optionally flipped) forwards
template <typename T>
TensorT<T> multiscale_eval(const ModelT<T>& model, const TensorT<T>& rgb, const TensorT<T>& depth,
                           const EvalConfig& cfg);

template <typename T>
MetricsResult evaluate(const ModelT<T>& model, const Dataset& data, const EvalConfig& cfg,
                       ConfusionMatrix* cm_out = nullptr);

extern template class SgdT<float>;
extern template class SgdT<double>;
extern template TrainResult train_loop<float>(ModelT<float>&, const Dataset&, const Dataset*,
                                              const TrainConfig&, const std::string&,
                                              const StepHook<float>&, bool);
extern template TrainResult train_loop<double>(ModelT<double>&, const Dataset&, const Dataset*,
                                               const TrainConfig&, const std::string&,
                                               const StepHook<double>&, bool);
extern template TensorT<float> multiscale_eval<float>(const ModelT<float>&, const TensorT<float>&,
                                                      const TensorT<float>&, const EvalConfig&);
extern template TensorT<double> multiscale_eval<double>(const ModelT<double>&, const TensorT<double>&,
                                                        const TensorT<double>&, const EvalConfig&);
extern template MetricsResult evaluate<float>(const ModelT<float>&, const Dataset&, const EvalConfig&,
                                              ConfusionMatrix*);
extern template MetricsResult evaluate<double>(const ModelT<double>&, const Dataset&, const EvalConfig&,
                                               ConfusionMatrix*);

}  // namespace glpnet
