#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "kbuf/autodiff/tensor.hpp"

namespace kbuf::ad {

template <class T>
struct AdamState {
    std::vector<std::vector<T>> m, v;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update. Parameters without a gradient buffer
/// are treated as having a zero gradient.
template <class T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, double lr) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.numel(), T(0));
            state.v.emplace_back(p.numel(), T(0));
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adam_step: parameter count changed");
    ++state.step;
    double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& m = state.m[k];
        auto& v = state.v[k];
        if (m.size() != params[k].numel()) throw ShapeError("adam_step: moment shape mismatch");
        if (!params[k].has_grad()) {
            // zero gradient: moments decay, parameter moves by the decayed momentum
            for (std::size_t i = 0; i < m.size(); ++i) {
                m[i] *= b1;
                v[i] *= b2;
            }
        } else {
            auto g = params[k].grad();
            for (std::size_t i = 0; i < m.size(); ++i) {
                m[i] = b1 * m[i] + (T(1) - b1) * g[i];
                v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            }
        }
        auto val = params[k].mutable_values();
        for (std::size_t i = 0; i < m.size(); ++i) {
            double mh = static_cast<double>(m[i]) / c1;
            double vh = static_cast<double>(v[i]) / c2;
            val[i] -= static_cast<T>(lr * mh / (std::sqrt(vh) + state.eps));
        }
    }
}

}  // namespace kbuf::ad
