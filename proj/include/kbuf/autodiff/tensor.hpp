#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace kbuf::ad {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {
inline bool& grad_enabled_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

/// Disables graph recording in scope (inference, evaluation).
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
    ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <class T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until the first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::size_t size() const { return value.size(); }

    std::vector<T>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), T(0));
        return grad;
    }
};

/// Handle to a node of the reverse-mode graph. Copies share the node.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
        if (ad::numel(shape) != values.size())
            throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
        node_->shape = std::move(shape);
        node_->value = std::move(values);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::size_t n = ad::numel(shape);
        return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
    }

    static Tensor full(Shape shape, T v, bool requires_grad = false) {
        std::size_t n = ad::numel(shape);
        return Tensor(std::move(shape), std::vector<T>(n, v), requires_grad);
    }

    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    explicit operator bool() const { return static_cast<bool>(node_); }

    const Shape& shape() const { return node_->shape; }
    int dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->value.size(); }

    std::span<const T> values() const { return node_->value; }
    /// Mutable access for leaves (parameters, inputs); do not use on graph outputs.
    std::span<T> mutable_values() { return node_->value; }
    T item() const {
        if (numel() != 1) throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
        return node_->value[0];
    }
    T operator[](std::size_t i) const { return node_->value[i]; }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->grad_buffer(); }
    void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

    Node<T>* node() const { return node_.get(); }
    const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

    /// Reverse sweep from this scalar; gradients accumulate into every
    /// reachable node that requires grad.
    void backward() const {
        if (numel() != 1) throw ShapeError("backward: root must be a scalar");
        if (!node_->requires_grad) return;
        std::vector<Node<T>*> order;
        std::unordered_set<Node<T>*> seen;
        std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                Node<T>* p = n->parents[next++].get();
                if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        node_->grad_buffer()[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node<T>* n = *it;
            if (n->backward && !n->grad.empty()) n->backward(*n);
        }
    }

private:
    std::shared_ptr<Node<T>> node_;
};

/// Builds an op result. When recording is on and any parent needs a
/// gradient, the node keeps its parents and backward closure.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> values, std::vector<Tensor<T>> parents,
                      std::function<void(Node<T>&)> backward) {
    Tensor<T> out(std::move(shape), std::move(values));
    bool needs = false;
    if (grad_enabled())
        for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs) {
        Node<T>* n = out.node();
        n->requires_grad = true;
        for (auto& p : parents) n->parents.push_back(p.node_ptr());
        n->backward = std::move(backward);
    }
    return out;
}

/// Gradient buffer of parent `i` if it participates, else nullptr.
template <class T>
T* parent_grad(Node<T>& self, std::size_t i) {
    Node<T>* p = self.parents[i].get();
    return p->requires_grad ? p->grad_buffer().data() : nullptr;
}

template <class T>
const T* parent_value(Node<T>& self, std::size_t i) {
    return self.parents[i]->value.data();
}

}  // namespace kbuf::ad
