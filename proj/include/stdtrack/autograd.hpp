#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "stdtrack/tensor.hpp"

namespace stdtrack {

/// Thread-local switch for graph recording. Inference runs with recording off.
class GradMode {
public:
    static bool enabled() noexcept { return flag(); }
    static void set_enabled(bool on) noexcept { flag() = on; }

private:
    static bool& flag() noexcept {
        thread_local bool on = true;
        return on;
    }
};

class NoGradGuard {
public:
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents.
    std::function<void(Node&)> backward;

    void accumulate(Tensor<T> g) {
        if (grad.empty() && !value.empty()) {
            grad = std::move(g);
            return;
        }
        T* d = grad.data();
        const T* s = g.data();
        for (std::size_t i = 0; i < grad.numel(); ++i) d[i] += s[i];
    }

    Tensor<T>& grad_buffer() {
        if (grad.numel() != value.numel() || grad.shape() != value.shape())
            grad = Tensor<T>::zeros(value.shape());
        return grad;
    }
};

/// Handle to a graph node. Copies share the node.
template <typename T>
class Var {
public:
    using NodePtr = std::shared_ptr<Node<T>>;

    Var() : node_(std::make_shared<Node<T>>()) {}
    explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }
    explicit Var(NodePtr node) : node_(std::move(node)) {}

    const Tensor<T>& value() const noexcept { return node_->value; }
    Tensor<T>& mutable_value() noexcept { return node_->value; }
    const Shape& shape() const noexcept { return node_->value.shape(); }
    std::size_t numel() const noexcept { return node_->value.numel(); }
    std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
    bool requires_grad() const noexcept { return node_->requires_grad; }

    /// Gradient of the last backward pass; zeros when none reached this node.
    const Tensor<T>& grad() const { return node_->grad_buffer(); }
    Tensor<T>& grad() { return node_->grad_buffer(); }
    void zero_grad() { node_->grad = Tensor<T>::zeros(node_->value.shape()); }

    /// Same value, cut from the graph.
    Var detached() const { return Var(node_->value, false); }

    const NodePtr& node() const noexcept { return node_; }

private:
    NodePtr node_;
};

/// Builds an op result. Parents and the backward closure are kept only when
/// recording is on and some parent needs a gradient.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<typename Var<T>::NodePtr> parents,
                   std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    bool need = false;
    if (GradMode::enabled())
        for (const auto& p : parents) need = need || p->requires_grad;
    if (need) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward = std::move(backward);
    }
    return Var<T>(std::move(node));
}

/// Reverse-mode sweep from a scalar. Gradients accumulate into leaves, so call
/// zero_grad on parameters between steps.
template <typename T>
void backward(const Var<T>& loss) {
    if (loss.numel() != 1)
        throw ContractError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node<T>* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    loss.node()->accumulate(Tensor<T>::ones(loss.shape()));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
    // Interior grads are not needed after the sweep.
    for (Node<T>* n : order)
        if (n->backward) n->grad = Tensor<T>();
}

}  // namespace stdtrack
