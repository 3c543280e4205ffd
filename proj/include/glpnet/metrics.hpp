#pragma once

#include <string>
#include <vector>

#include "glpnet/tensor.hpp"

namespace glpnet {

inline constexpr int kIgnoreIndex = 255;

// Rows are ground truth, columns are predictions; ignored pixels never count.
struct ConfusionMatrix {
    std::int64_t num_classes = 0;
    std::vector<std::int64_t> counts;  // [classes, classes] row-major

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::int64_t classes);

    std::int64_t& at(std::int64_t truth, std::int64_t pred) { return counts[static_cast<std::size_t>(truth * num_classes + pred)]; }
    std::int64_t at(std::int64_t truth, std::int64_t pred) const { return counts[static_cast<std::size_t>(truth * num_classes + pred)]; }

    void update(const IntTensor& pred, const IntTensor& label, int ignore_index = kIgnoreIndex);
    void merge(const ConfusionMatrix& other);
    std::int64_t total() const;
};

struct MetricsResult {
    double acc = 0.0;
    double macc = 0.0;
    double miou = 0.0;
    // one entry per class; absent classes (zero union) carry -1 and are
    // excluded from the mean
    std::vector<double> per_class_iou;
};

MetricsResult compute_metrics(const ConfusionMatrix& cm);

// {"acc": ..., "macc": ..., "miou": ..., "per_class_iou": [...]}
std::string metrics_to_json(const MetricsResult& m);

}  // namespace glpnet
