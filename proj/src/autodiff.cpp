#include "faceanim/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

namespace faceanim::ad {

namespace {
std::atomic<int64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

Var leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->id = g_next_id.fetch_add(1);
    return n;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->id = g_next_id.fetch_add(1);
    if (g_grad_enabled) {
        bool req = false;
        for (const auto& p : parents)
            if (p->requires_grad) req = true;
        if (req) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backprop = std::move(bw);
        }
    }
    return n;
}

void backward(const Var& root) {
    require(root != nullptr, "backward: null root");
    require(root->numel() == 1, "backward: root must be a scalar");
    if (!root->requires_grad) return;

    // Collect the reachable differentiable subgraph.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });

    root->ensure_grad();
    root->grad.data[0] += 1.0;
    for (Node* n : order) {
        if (n->backprop && !n->grad.shape.empty()) n->backprop(*n);
    }
}

}  // namespace faceanim::ad
