#include "glpnet/autodiff.hpp"

#include <unordered_set>

namespace glpnet {

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set(bool on) { g_grad_enabled = on; }

template <typename T>
void backward(const VarT<T>& loss) {
    require_contract(loss != nullptr, "backward: null loss");
    require_contract(loss->value.numel() == 1,
                     "backward: loss must be scalar, got shape " + shape_str(loss->value.shape));
    if (!loss->requires_grad) return;

    // iterative post-order DFS over the recorded graph
    struct Frame {
        NodeT<T>* node;
        std::size_t next;
    };
    std::vector<NodeT<T>*> order;
    std::unordered_set<NodeT<T>*> seen;
    std::vector<Frame> stack;
    stack.push_back({loss.get(), 0});
    seen.insert(loss.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->inputs.size()) {
            NodeT<T>* child = f.node->inputs[f.next++].get();
            if (child && child->requires_grad && !seen.count(child)) {
                seen.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    loss->ensure_grad();
    loss->grad.data[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeT<T>* n = *it;
        // grad never materialized means no consumer contributed: zero flows on
        if (n->backward_fn && n->grad.numel() > 0) n->backward_fn(*n);
    }

    // consume the tape; parameters keep their accumulated grads
    for (NodeT<T>* n : order) {
        if (!n->is_param) {
            n->inputs.clear();
            n->backward_fn = nullptr;
        }
    }
}

template void backward<float>(const VarT<float>&);
template void backward<double>(const VarT<double>&);

}  // namespace glpnet
