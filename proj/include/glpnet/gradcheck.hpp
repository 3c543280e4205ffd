#pragma once

#include <string>
#include <vector>

namespace glpnet {

struct GradCheckCase {
    std::string name;
    double max_rel_err = 0;
    double threshold = 0;
    bool passed = false;
};

struct GradCheckReport {
    std::vector<GradCheckCase> cases;

    bool all_passed() const;
    double worst() const;
    std::string to_text() const;  // one line per case plus a verdict
};

// Central finite differences against the recorded-tape gradients for every
// differentiable op and fusion module. f64: h=1e-5, tolerance 1e-4.
// f32 runs the same suite as a smoke check with loose tolerances.
template <typename T>
GradCheckReport run_gradcheck_suite();

extern template GradCheckReport run_gradcheck_suite<float>();
extern template GradCheckReport run_gradcheck_suite<double>();

}  // namespace glpnet
