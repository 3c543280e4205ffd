#include <json.hpp>

#include "glpnet/metrics.hpp"

namespace glpnet {

ConfusionMatrix::ConfusionMatrix(std::int64_t classes) : num_classes(classes) {
    require_config(classes >= 1, "confusion matrix needs at least one class");
    counts.assign(static_cast<std::size_t>(classes * classes), 0);
}

void ConfusionMatrix::update(const IntTensor& pred, const IntTensor& label, int ignore_index) {
    require_dim(pred.shape == label.shape, "cm_update: prediction shape " + shape_str(pred.shape) +
                                               " does not match label shape " + shape_str(label.shape));
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        const std::int32_t l = label.data[static_cast<std::size_t>(i)];
        if (l == ignore_index) continue;
        const std::int32_t p = pred.data[static_cast<std::size_t>(i)];
        require_data(l >= 0 && l < num_classes,
                     "cm_update: label " + std::to_string(l) + " outside [0, " + std::to_string(num_classes) + ")");
        require_data(p >= 0 && p < num_classes,
                     "cm_update: prediction " + std::to_string(p) + " outside [0, " + std::to_string(num_classes) + ")");
        ++at(l, p);
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    require_dim(num_classes == other.num_classes, "cm merge: class counts differ");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t t = 0;
    for (auto c : counts) t += c;
    return t;
}

MetricsResult compute_metrics(const ConfusionMatrix& cm) {
    require_contract(cm.total() > 0, "compute_metrics: no scored pixels");
    const std::int64_t n = cm.num_classes;

    MetricsResult r;
    std::int64_t trace = 0;
    double acc_sum = 0.0, iou_sum = 0.0;
    std::int64_t acc_classes = 0, iou_classes = 0;
    r.per_class_iou.assign(static_cast<std::size_t>(n), -1.0);
    for (std::int64_t c = 0; c < n; ++c) {
        std::int64_t row = 0, col = 0;
        for (std::int64_t j = 0; j < n; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        const std::int64_t diag = cm.at(c, c);
        trace += diag;
        if (row > 0) {
            acc_sum += static_cast<double>(diag) / static_cast<double>(row);
            ++acc_classes;
        }
        const std::int64_t uni = row + col - diag;
        if (uni > 0) {
            const double iou = static_cast<double>(diag) / static_cast<double>(uni);
            r.per_class_iou[static_cast<std::size_t>(c)] = iou;
            iou_sum += iou;
            ++iou_classes;
        }
    }
    r.acc = static_cast<double>(trace) / static_cast<double>(cm.total());
    r.macc = acc_classes > 0 ? acc_sum / static_cast<double>(acc_classes) : 0.0;
    r.miou = iou_classes > 0 ? iou_sum / static_cast<double>(iou_classes) : 0.0;
    return r;
}

std::string metrics_to_json(const MetricsResult& m) {
    nlohmann::json j;
    j["acc"] = m.acc;
    j["macc"] = m.macc;
    j["miou"] = m.miou;
    nlohmann::json ious = nlohmann::json::array();
    for (double v : m.per_class_iou) {
        if (v < 0)
            ious.push_back(nullptr);
        else
            ious.push_back(v);
    }
    j["per_class_iou"] = ious;
    return j.dump(2);
}

}  // namespace glpnet
