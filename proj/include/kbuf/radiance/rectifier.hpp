#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kbuf/encoders/hash_grid.hpp"
#include "kbuf/encoders/sh.hpp"
#include "kbuf/radiance/field.hpp"

namespace kbuf::radiance {

inline constexpr int kShBands = 4;
inline constexpr int kRectifierHidden = 64;

/// Learnable scalars of the T_Psi network (hash tables excluded).
constexpr std::size_t rectifier_param_count(std::size_t hash_width, std::size_t channels) {
    constexpr std::size_t h = kRectifierHidden;
    return (hash_width + kShBands * kShBands + 1) * h + (h + 1) * channels;
}

/// T_Psi: [hash(o) ++ sh(d_j)] -> 64 -> C, ReLU between.
template <class T>
struct RectifierMLP {
    ad::DenseLayer<T> l1, l2;

    RectifierMLP() = default;
    template <class Rng>
    RectifierMLP(int in, int channels, Rng& rng) : l1(in, kRectifierHidden, rng), l2(kRectifierHidden, channels, rng) {}

    int channels() const { return l2.out(); }
    ad::Tensor<T> forward(const ad::Tensor<T>& x) const { return l2(ad::relu(l1(x))); }

    void collect(ad::ParamList<T>& out, const std::string& prefix) const {
        l1.collect(out, prefix + ".l1");
        l2.collect(out, prefix + ".l2");
    }

    std::size_t param_count() const {
        ad::ParamList<T> p;
        collect(p, "");
        return ad::count_params(p);
    }
};

/// The rectifier network together with the hash grid it reads.
template <class T>
struct Rectifier {
    enc::HashGrid<T> grid;
    RectifierMLP<T> mlp;

    Rectifier() = default;
    template <class Rng>
    Rectifier(const enc::HashGridConfig& cfg, const Vec3& box_min, const Vec3& box_max, int channels, Rng& rng)
        : grid(cfg, box_min, box_max, rng), mlp(cfg.output_width() + kShBands * kShBands, channels, rng) {}

    /// T_Psi(o, d) for each of D directions, [D, C].
    ad::Tensor<T> terms(const Vec3& origin, std::span<const Vec3> dirs) const {
        int D = static_cast<int>(dirs.size());
        std::vector<Vec3> o{origin};
        auto h = ad::repeat_rows(grid.encode(o), D);
        constexpr int sw = kShBands * kShBands;
        std::vector<T> sh(static_cast<std::size_t>(D) * sw);
        for (int i = 0; i < D; ++i) enc::sh_encode_into<T>(dirs[static_cast<std::size_t>(i)], kShBands, sh.data() + i * sw);
        auto x = ad::concat<T>({h, ad::Tensor<T>({D, sw}, std::move(sh))}, 1);
        return mlp.forward(x);
    }

    void collect(ad::ParamList<T>& out, const std::string& prefix) const {
        grid.collect(out, prefix + ".hash");
        mlp.collect(out, prefix + ".mlp");
    }
};

/// out[s] = point_feat[slot_to_point[s]] + T_Psi(o, dirs[slot_to_dir[s]]), with T_Psi
/// evaluated once per entry of `dirs`. A null rectifier leaves the shared features.
template <class T>
ad::Tensor<T> rectified_features(const ad::Tensor<T>& point_feat, const Vec3& origin, std::span<const Vec3> dirs,
                                 std::span<const std::uint32_t> slot_to_point, std::span<const std::uint32_t> slot_to_dir,
                                 const Rectifier<T>* rect) {
    auto shared = ad::gather_rows(point_feat, std::vector<std::uint32_t>(slot_to_point.begin(), slot_to_point.end()));
    if (!rect) return shared;
    if (slot_to_dir.size() != slot_to_point.size()) throw ad::ShapeError("rectified_features: slot tables differ in length");
    auto t = rect->terms(origin, dirs);
    return ad::add(shared, ad::gather_rows(t, std::vector<std::uint32_t>(slot_to_dir.begin(), slot_to_dir.end())));
}

/// Per-slot directions form: identical directions share one T_Psi evaluation.
template <class T>
ad::Tensor<T> rectified_features(const ad::Tensor<T>& point_feat, const Vec3& origin, std::span<const Vec3> slot_dirs,
                                 std::span<const std::uint32_t> slot_to_point, const Rectifier<T>* rect) {
    if (slot_dirs.size() != slot_to_point.size()) throw ad::ShapeError("rectified_features: slot tables differ in length");
    std::vector<Vec3> distinct;
    std::vector<std::uint32_t> slot_to_dir(slot_dirs.size());
    std::map<std::array<std::uint64_t, 3>, std::uint32_t> index;
    for (std::size_t s = 0; s < slot_dirs.size(); ++s) {
        std::array<std::uint64_t, 3> key{};
        std::memcpy(key.data(), slot_dirs[s].data(), sizeof(key));
        auto [it, fresh] = index.try_emplace(key, static_cast<std::uint32_t>(distinct.size()));
        if (fresh) distinct.push_back(slot_dirs[s]);
        slot_to_dir[s] = it->second;
    }
    return rectified_features(point_feat, origin, distinct, slot_to_point, slot_to_dir, rect);
}

}  // namespace kbuf::radiance
