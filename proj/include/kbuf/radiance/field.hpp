#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kbuf/autodiff/nn.hpp"
#include "kbuf/encoders/positional.hpp"

namespace kbuf::radiance {

using Vec3 = Eigen::Vector3d;

inline constexpr int kPositionOctaves = 10;
inline constexpr int kDirectionOctaves = 4;
inline constexpr int kFieldWidth = 256;
inline constexpr int kFieldNarrow = 128;
inline constexpr int kPositionWidth = 2 * kPositionOctaves * 3;
inline constexpr int kDirectionWidth = 2 * kDirectionOctaves * 3;

/// Learnable scalars of F_Theta with `channels` outputs.
constexpr std::size_t radiance_param_count(std::size_t channels) {
    constexpr std::size_t w = kFieldWidth, n = kFieldNarrow;
    return (kPositionWidth + 1) * w + (w + 1) * w + (w + kDirectionWidth + 1) * w + (w + 1) * n + (n + 1) * channels;
}

/// Positional encodings of positions and directions as constant tensors [N, 60] and [N, 24].
template <class T>
std::pair<ad::Tensor<T>, ad::Tensor<T>> encode_points(std::span<const Vec3> x, std::span<const Vec3> d) {
    if (x.size() != d.size()) throw ad::ShapeError("encode_points: " + std::to_string(x.size()) + " positions vs " +
                                                   std::to_string(d.size()) + " directions");
    std::size_t n = x.size();
    constexpr std::size_t wx = kPositionWidth, wd = kDirectionWidth;
    std::vector<T> ex(n * wx), ed(n * wd);
    for (std::size_t i = 0; i < n; ++i) {
        if (!x[i].allFinite()) throw std::invalid_argument("encode_points: non-finite position");
        if (std::abs(d[i].norm() - 1) > 1e-6) throw std::invalid_argument("encode_points: direction is not unit length");
        enc::positional_encode_into<T>(std::span<const double>(x[i].data(), 3), kPositionOctaves, ex.data() + i * wx);
        enc::positional_encode_into<T>(std::span<const double>(d[i].data(), 3), kDirectionOctaves, ed.data() + i * wd);
    }
    int rows = static_cast<int>(n);
    return {ad::Tensor<T>({rows, static_cast<int>(wx)}, std::move(ex)), ad::Tensor<T>({rows, static_cast<int>(wd)}, std::move(ed))};
}

/// F_Theta: 60 -> 256 -> 256, direction joins, -> 256 -> 128 -> C.
template <class T>
struct RadianceMLP {
    ad::DenseLayer<T> l1, l2, l3, l4, l5;

    RadianceMLP() = default;
    template <class Rng>
    RadianceMLP(int channels, Rng& rng)
        : l1(kPositionWidth, kFieldWidth, rng),
          l2(kFieldWidth, kFieldWidth, rng),
          l3(kFieldWidth + kDirectionWidth, kFieldWidth, rng),
          l4(kFieldWidth, kFieldNarrow, rng),
          l5(kFieldNarrow, channels, rng) {
        if (channels < 1) throw std::invalid_argument("radiance mlp: channels must be >= 1");
    }

    int channels() const { return l5.out(); }

    ad::Tensor<T> forward(const ad::Tensor<T>& x_enc, const ad::Tensor<T>& d_enc) const {
        auto h = ad::relu(l2(ad::relu(l1(x_enc))));
        h = ad::concat<T>({h, d_enc}, 1);
        h = ad::relu(l4(ad::relu(l3(h))));
        return l5(h);
    }

    void collect(ad::ParamList<T>& out, const std::string& prefix) const {
        l1.collect(out, prefix + ".l1");
        l2.collect(out, prefix + ".l2");
        l3.collect(out, prefix + ".l3");
        l4.collect(out, prefix + ".l4");
        l5.collect(out, prefix + ".l5");
    }

    std::size_t param_count() const {
        ad::ParamList<T> p;
        collect(p, "");
        return ad::count_params(p);
    }
};

/// Features for N (position, unit direction) rows, [N, C].
template <class T>
ad::Tensor<T> radiance_features(std::span<const Vec3> x, std::span<const Vec3> d, const RadianceMLP<T>& mlp) {
    auto [ex, ed] = encode_points<T>(x, d);
    return mlp.forward(ex, ed);
}

}  // namespace kbuf::radiance
