#include <doctest.h>

#include "glpnet/metrics.hpp"
#include "oracles.hpp"

using namespace glpnet;

namespace {

ConfusionMatrix from_counts(std::int64_t classes, std::vector<std::int64_t> counts) {
    ConfusionMatrix cm(classes);
    cm.counts = std::move(counts);
    return cm;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("symmetric two-class example") {
    // [[3,1],[1,3]]: acc 6/8, per-class iou 3/5 each
    auto m = compute_metrics(from_counts(2, {3, 1, 1, 3}));
    CHECK(m.acc == doctest::Approx(0.75));
    CHECK(m.macc == doctest::Approx(0.75));
    CHECK(m.per_class_iou[0] == doctest::Approx(0.6));
    CHECK(m.per_class_iou[1] == doctest::Approx(0.6));
    CHECK(m.miou == doctest::Approx(0.6));
}

TEST_CASE("degenerate predictor") {
    // everything predicted as class 1: [[0,2],[0,2]]
    auto m = compute_metrics(from_counts(2, {0, 2, 0, 2}));
    CHECK(m.acc == doctest::Approx(0.5));
    CHECK(m.per_class_iou[0] == doctest::Approx(0.0));
    CHECK(m.per_class_iou[1] == doctest::Approx(0.5));
    CHECK(m.miou == doctest::Approx(0.25));
}

TEST_CASE("perfect predictions") {
    auto m = compute_metrics(from_counts(3, {4, 0, 0, 0, 9, 0, 0, 0, 2}));
    CHECK(m.acc == doctest::Approx(1.0));
    CHECK(m.macc == doctest::Approx(1.0));
    CHECK(m.miou == doctest::Approx(1.0));
}

TEST_CASE("absent class is excluded from the mean") {
    // class 2 never appears in truth or prediction
    auto m = compute_metrics(from_counts(3, {5, 0, 0, 0, 5, 0, 0, 0, 0}));
    CHECK(m.per_class_iou[2] == doctest::Approx(-1.0));
    CHECK(m.miou == doctest::Approx(1.0));
    CHECK(m.macc == doctest::Approx(1.0));
}

TEST_CASE("empty matrix rejected") {
    ConfusionMatrix cm(2);
    CHECK_THROWS_AS((void)compute_metrics(cm), ContractError);
}

TEST_CASE("update counts pixels and skips ignore") {
    ConfusionMatrix cm(3);
    IntTensor pred(Shape{1, 2, 2}, {0, 1, 2, 2});
    IntTensor label(Shape{1, 2, 2}, {0, 1, 1, 255});
    cm.update(pred, label);
    CHECK(cm.total() == 3);
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(1, 1) == 1);
    CHECK(cm.at(1, 2) == 1);

    auto counts = oracle::confusion_counts(pred, label, 3, 255);
    for (std::int64_t i = 0; i < 9; ++i)
        CHECK(cm.counts[static_cast<std::size_t>(i)] == counts[static_cast<std::size_t>(i)]);
}

TEST_CASE("update order does not matter") {
    Rng rng(9);
    ConfusionMatrix fwd(4), rev(4);
    std::vector<IntTensor> preds, labels;
    for (int i = 0; i < 6; ++i) {
        IntTensor p(Shape{1, 3, 3}), l(Shape{1, 3, 3});
        for (auto& pv : p.data) pv = static_cast<std::int32_t>(rng.uniform_int(4));
        for (auto& lv : l.data) lv = rng.bernoulli(0.2) ? 255 : static_cast<std::int32_t>(rng.uniform_int(4));
        preds.push_back(p);
        labels.push_back(l);
    }
    for (std::size_t i = 0; i < preds.size(); ++i) fwd.update(preds[i], labels[i]);
    for (std::size_t i = preds.size(); i-- > 0;) rev.update(preds[i], labels[i]);
    CHECK(fwd.counts == rev.counts);
}

TEST_CASE("merge equals pooled updates") {
    IntTensor p1(Shape{1, 2, 2}, {0, 0, 1, 1}), l1(Shape{1, 2, 2}, {0, 1, 1, 1});
    IntTensor p2(Shape{1, 2, 2}, {1, 1, 0, 0}), l2(Shape{1, 2, 2}, {1, 0, 0, 255});
    ConfusionMatrix a(2), b(2), pooled(2);
    a.update(p1, l1);
    b.update(p2, l2);
    pooled.update(p1, l1);
    pooled.update(p2, l2);
    a.merge(b);
    CHECK(a.counts == pooled.counts);
    ConfusionMatrix other(3);
    CHECK_THROWS_AS(a.merge(other), DimensionError);
}

TEST_CASE("all-ignored update changes nothing") {
    ConfusionMatrix cm(2);
    IntTensor p(Shape{1, 2, 2}, {0, 1, 0, 1});
    IntTensor l(Shape{1, 2, 2}, 255);
    cm.update(p, l);
    CHECK(cm.total() == 0);
}

TEST_CASE("out-of-range values rejected") {
    ConfusionMatrix cm(2);
    IntTensor p(Shape{1, 1, 1}, 2);
    IntTensor l(Shape{1, 1, 1}, 0);
    CHECK_THROWS_AS(cm.update(p, l), DataError);
    IntTensor p2(Shape{1, 1, 1}, 0);
    IntTensor l2(Shape{1, 1, 1}, 7);
    CHECK_THROWS_AS(cm.update(p2, l2), DataError);
    IntTensor lneg(Shape{1, 1, 1}, -1);
    CHECK_THROWS_AS(cm.update(p2, lneg), DataError);
}

TEST_CASE("shape mismatch rejected") {
    ConfusionMatrix cm(2);
    IntTensor p(Shape{1, 2, 2});
    IntTensor l(Shape{1, 2, 3});
    CHECK_THROWS_AS(cm.update(p, l), DimensionError);
}

TEST_CASE("json carries all fields") {
    auto m = compute_metrics(from_counts(2, {3, 1, 1, 3}));
    auto s = metrics_to_json(m);
    CHECK(s.find("\"acc\"") != std::string::npos);
    CHECK(s.find("\"macc\"") != std::string::npos);
    CHECK(s.find("\"miou\"") != std::string::npos);
    CHECK(s.find("\"per_class_iou\"") != std::string::npos);
}

}  // TEST_SUITE
