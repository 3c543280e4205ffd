#include <doctest.h>

#include "glpnet/gradcheck.hpp"

using namespace glpnet;

TEST_SUITE("gradcheck") {

TEST_CASE("f64 suite passes at tight tolerance") {
    auto report = run_gradcheck_suite<double>();
    for (const auto& c : report.cases) {
        INFO(c.name, ": rel err ", c.max_rel_err, " vs ", c.threshold);
        CHECK(c.passed);
    }
    CHECK(report.all_passed());
}

TEST_CASE("f32 suite passes at loose tolerance") {
    auto report = run_gradcheck_suite<float>();
    for (const auto& c : report.cases) {
        INFO(c.name, ": rel err ", c.max_rel_err, " vs ", c.threshold);
        CHECK(c.passed);
    }
    CHECK(report.all_passed());
}

TEST_CASE("suite covers the fusion and attention ops") {
    auto report = run_gradcheck_suite<double>();
    auto has = [&](const std::string& name) {
        for (const auto& c : report.cases)
            if (c.name == name) return true;
        return false;
    };
    for (const char* name :
         {"conv2d_3x3_pad1", "bilinear_sample", "warp", "spatial_softmax", "channel_softmax",
          "cross_entropy", "lcfm_forward", "gcfm_forward", "gcfm_var1", "gcfm_var2", "gcfm_attend",
          "fusion_stage4", "batch_norm_train", "bmm"}) {
        INFO("missing case: ", name);
        CHECK(has(name));
    }
    CHECK(report.cases.size() >= 30);
}

TEST_CASE("report text lists every case") {
    auto report = run_gradcheck_suite<double>();
    auto text = report.to_text();
    CHECK(text.find("conv2d_3x3_pad1") != std::string::npos);
    CHECK(text.find("passed") != std::string::npos);
}

}  // TEST_SUITE
