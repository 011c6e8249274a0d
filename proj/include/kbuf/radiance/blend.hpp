#pragma once

#include <span>
#include <string>
#include <vector>

#include "kbuf/encoders/sh.hpp"
#include "kbuf/radiance/field.hpp"

namespace kbuf::radiance {

/// H_Gamma: sh(d) (4 bands) -> 64 -> 64 -> C.
template <class T>
struct BlendMLP {
    ad::DenseLayer<T> l1, l2, l3;

    BlendMLP() = default;
    template <class Rng>
    BlendMLP(int channels, Rng& rng) : l1(16, 64, rng), l2(64, 64, rng), l3(64, channels, rng) {}

    int channels() const { return l3.out(); }

    /// H_Gamma(d) for N unit directions, [N, C].
    ad::Tensor<T> forward(std::span<const Vec3> dirs) const {
        int n = static_cast<int>(dirs.size());
        std::vector<T> sh(static_cast<std::size_t>(n) * 16);
        for (int i = 0; i < n; ++i) enc::sh_encode_into<T>(dirs[static_cast<std::size_t>(i)], 4, sh.data() + i * 16);
        return l3(ad::relu(l2(ad::relu(l1(ad::Tensor<T>({n, 16}, std::move(sh)))))));
    }

    void collect(ad::ParamList<T>& out, const std::string& prefix) const {
        l1.collect(out, prefix + ".l1");
        l2.collect(out, prefix + ".l2");
        l3.collect(out, prefix + ".l3");
    }
};

/// Ordered Gaussian blend over P lists of K fragments:
/// out[p] = sum_i a[p,i] prod_{j<i}(1 - a[p,j]) (H(d[p,i]) + f[p,i]).
/// alpha [P, K], feats [P, K, C], dirs P*K unit directions.
template <class T>
ad::Tensor<T> gaussian_blend(const ad::Tensor<T>& alpha, const ad::Tensor<T>& feats, std::span<const Vec3> dirs,
                             const BlendMLP<T>& mlp) {
    if (alpha.rank() != 2 || feats.rank() != 3 || dirs.size() != alpha.numel())
        throw ad::ShapeError("gaussian_blend: expects alpha [P,K], feats [P,K,C], P*K directions");
    for (T a : alpha.values())
        if (!(a >= T(0) && a <= T(1))) throw std::invalid_argument("gaussian_blend: alpha outside [0, 1]");
    auto h = ad::reshape(mlp.forward(dirs), feats.shape());
    return ad::alpha_composite(alpha, ad::add(h, feats));
}

/// One front-to-back fragment list: alpha [N], feats [N, C]. Empty lists blend to zero.
template <class T>
ad::Tensor<T> gaussian_blend(const ad::Tensor<T>& alpha, const ad::Tensor<T>& feats, std::span<const Vec3> dirs,
                             const BlendMLP<T>& mlp, int channels) {
    if (alpha.numel() == 0) return ad::Tensor<T>::zeros({channels});
    int n = static_cast<int>(alpha.numel());
    auto out = gaussian_blend(ad::reshape(alpha, {1, n}), ad::reshape(feats, {1, n, channels}), dirs, mlp);
    return ad::reshape(out, {channels});
}

}  // namespace kbuf::radiance
