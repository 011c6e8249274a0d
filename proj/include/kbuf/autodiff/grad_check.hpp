#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "kbuf/autodiff/tensor.hpp"

namespace kbuf::ad {

struct GradCheckOptions {
    double h = 1e-5;
    /// Parameters with more entries are probed along random directions.
    std::size_t max_coords = 256;
    std::size_t projections = 16;
    /// Denominator floor, so near-zero gradients compare absolutely.
    double atol = 1e-3;
    /// A probe that disagrees is retried at h/10, h/100, ... this many times.
    /// A central difference straddling a ReLU kink recovers at a smaller
    /// step; a wrong backward disagrees at every step.
    int refinements = 2;
    /// Errors at or below this are not refined.
    double tolerance_hint = 1e-6;
    std::uint64_t seed = 7;
};

struct GradCheckResult {
    double max_rel_error = 0;
    std::size_t probes = 0;
};

/// Compares reverse-mode gradients of the scalar f() against central
/// differences (f(p+h) - f(p-h)) / 2h, per coordinate or along random
/// directions for large parameters. Each probe reports its best agreement
/// over the step sizes tried.
template <class F>
GradCheckResult grad_check(F&& f, std::vector<Tensor<double>> params, const GradCheckOptions& opt = {}) {
    for (auto& p : params) p.zero_grad();
    f().backward();
    std::vector<std::vector<double>> analytic;
    for (auto& p : params) {
        if (p.has_grad())
            analytic.emplace_back(p.grad().begin(), p.grad().end());
        else
            analytic.emplace_back(p.numel(), 0.0);
    }

    auto eval = [&] {
        NoGradGuard guard;
        return f().item();
    };
    auto rel = [&](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), opt.atol}); };

    auto probe = [&](auto&& err_at) {
        double h = opt.h, best = err_at(h);
        for (int r = 0; r < opt.refinements && best > opt.tolerance_hint; ++r) best = std::min(best, err_at(h /= 10));
        return best;
    };

    GradCheckResult res;
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> gauss;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto vals = params[k].mutable_values();
        if (vals.size() <= opt.max_coords) {
            for (std::size_t i = 0; i < vals.size(); ++i) {
                double orig = vals[i];
                double best = probe([&](double h) {
                    vals[i] = orig + h;
                    double fp = eval();
                    vals[i] = orig - h;
                    double fm = eval();
                    vals[i] = orig;
                    return rel(analytic[k][i], (fp - fm) / (2 * h));
                });
                res.max_rel_error = std::max(res.max_rel_error, best);
                ++res.probes;
            }
        } else {
            std::vector<double> orig(vals.begin(), vals.end()), dir(vals.size());
            for (std::size_t t = 0; t < opt.projections; ++t) {
                double norm = 0;
                for (auto& d : dir) {
                    d = gauss(rng);
                    norm += d * d;
                }
                norm = std::sqrt(norm);
                double a = 0;
                for (std::size_t i = 0; i < dir.size(); ++i) {
                    dir[i] /= norm;
                    a += analytic[k][i] * dir[i];
                }
                double best = probe([&](double h) {
                    for (std::size_t i = 0; i < dir.size(); ++i) vals[i] = orig[i] + h * dir[i];
                    double fp = eval();
                    for (std::size_t i = 0; i < dir.size(); ++i) vals[i] = orig[i] - h * dir[i];
                    double fm = eval();
                    std::copy(orig.begin(), orig.end(), vals.begin());
                    return rel(a, (fp - fm) / (2 * h));
                });
                res.max_rel_error = std::max(res.max_rel_error, best);
                ++res.probes;
            }
        }
    }
    return res;
}

}  // namespace kbuf::ad
