#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "glpnet/tensor.hpp"

namespace glpnet {

template <typename T>
struct NodeT;

template <typename T>
using VarT = std::shared_ptr<NodeT<T>>;

// Thread-local recording switch. Evaluation paths wrap forwards in a
// NoGradGuard so no tape is built.
struct GradMode {
    static bool enabled();
    static void set(bool on);
};

struct NoGradGuard {
    NoGradGuard() : prev(GradMode::enabled()) { GradMode::set(false); }
    ~NoGradGuard() { GradMode::set(prev); }
    bool prev;
};

// One tape node: the op's output value plus everything backward needs.
// Gradients accumulate (+=); call zero_grad between steps.
template <typename T>
struct NodeT {
    TensorT<T> value;
    TensorT<T> grad;  // allocated lazily with value's shape
    bool requires_grad = false;
    bool is_param = false;
    std::string name;  // parameter path, empty for activations

    std::vector<VarT<T>> inputs;
    std::function<void(NodeT<T>&)> backward_fn;

    void ensure_grad() {
        if (grad.numel() != value.numel()) grad = TensorT<T>::zeros(value.shape);
    }

    void zero_grad() {
        if (grad.numel() > 0) grad.fill(T(0));
    }

    void accum_grad(const TensorT<T>& g) {
        if (!requires_grad) return;
        require_dim(g.shape == value.shape, "gradient shape " + shape_str(g.shape) +
                                                " does not match value shape " + shape_str(value.shape));
        ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) grad.data[static_cast<std::size_t>(i)] += g.data[static_cast<std::size_t>(i)];
    }
};

template <typename T>
VarT<T> make_var(TensorT<T> value, bool requires_grad = false) {
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad && GradMode::enabled();
    return n;
}

template <typename T>
VarT<T> make_param(TensorT<T> value, std::string name) {
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->is_param = true;
    n->name = std::move(name);
    return n;
}

// Wraps an op result. Records inputs and the backward closure only when the
// tape is live and some input needs gradients; otherwise the node is a leaf.
template <typename T>
VarT<T> make_node(TensorT<T> value, std::vector<VarT<T>> inputs, std::function<void(NodeT<T>&)> backward_fn) {
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    if (GradMode::enabled()) {
        bool any = false;
        for (const auto& in : inputs)
            if (in && in->requires_grad) any = true;
        if (any) {
            n->requires_grad = true;
            n->inputs = std::move(inputs);
            n->backward_fn = std::move(backward_fn);
        }
    }
    return n;
}

// Reverse-mode sweep from a scalar loss. Visits reachable nodes in reverse
// topological order exactly once, accumulates into Parameter grads, and
// consumes the tape (activation nodes drop their edges and closures).
template <typename T>
void backward(const VarT<T>& loss);

}  // namespace glpnet
