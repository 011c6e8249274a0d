#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbuf/radiance/field.hpp"

namespace kbuf::radiance {

/// NeRF-style quadrature over each pixel's K depth samples, with a
/// radiance MLP emitting (rgb, sigma) through sigmoid and softplus.
///
/// counts[p] samples per pixel (at most K); depths is [P*K] with valid
/// entries ascending per pixel; x and d list the valid samples pixel-major.
/// Returns [P, 3].
template <class T>
ad::Tensor<T> naive_volume_baseline(std::span<const int> counts, int K, std::span<const double> depths,
                                    std::span<const Vec3> x, std::span<const Vec3> d, const RadianceMLP<T>& mlp,
                                    double far) {
    if (mlp.channels() != 4) throw std::invalid_argument("naive_volume_baseline: mlp must emit 4 channels");
    std::size_t P = counts.size();
    if (depths.size() != P * static_cast<std::size_t>(K)) throw ad::ShapeError("naive_volume_baseline: depths must be [P*K]");
    std::size_t valid = 0;
    for (int c : counts) {
        if (c < 0 || c > K) throw std::invalid_argument("naive_volume_baseline: bad sample count");
        valid += static_cast<std::size_t>(c);
    }
    if (x.size() != valid || d.size() != valid) throw ad::ShapeError("naive_volume_baseline: sample count mismatch");

    std::vector<std::uint32_t> idx(P * K, static_cast<std::uint32_t>(valid));  // padding reads the zero row
    std::vector<T> delta(P * K, T(0));
    std::uint32_t s = 0;
    for (std::size_t p = 0; p < P; ++p)
        for (int i = 0; i < counts[p]; ++i) {
            std::size_t k = p * K + i;
            idx[k] = s++;
            double next = i + 1 < counts[p] ? depths[k + 1] : far;
            if (next < depths[k]) throw std::invalid_argument("naive_volume_baseline: depths not ascending");
            delta[k] = static_cast<T>(next - depths[k]);
        }

    int rows = static_cast<int>(P * K);
    auto raw = ad::concat<T>({radiance_features<T>(x, d, mlp), ad::Tensor<T>::zeros({1, 4})}, 0);
    auto g = ad::gather_rows(raw, std::move(idx));
    auto rgb = ad::sigmoid(ad::slice(g, 1, 0, 3));
    auto sigma = ad::reshape(ad::softplus(ad::slice(g, 1, 3, 4)), {rows});
    // a = 1 - exp(-sigma * delta)
    auto tau = ad::mul(sigma, ad::Tensor<T>({rows}, std::move(delta)));
    auto alpha = ad::add_scalar(ad::scale(ad::exp(ad::scale(tau, T(-1))), T(-1)), T(1));
    int pk = static_cast<int>(P);
    return ad::alpha_composite(ad::reshape(alpha, {pk, K}), ad::reshape(rgb, {pk, K, 3}));
}

}  // namespace kbuf::radiance
