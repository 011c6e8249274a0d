#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kbuf/autodiff/nn.hpp"
#include "kbuf/decoder/unet.hpp"
#include "kbuf/encoders/hash_grid.hpp"
#include "kbuf/kfn/kfn.hpp"
#include "kbuf/querygen/pipeline.hpp"
#include "kbuf/radiance/naive.hpp"
#include "kbuf/scene/views.hpp"
#include "kbuf/trainer/config.hpp"

namespace kbuf::train {

/// Optimizer groups, each with its own initial learning rate.
enum Group : std::size_t { field_group = 0, rect_group = 1, kfn_group = 2, unet_group = 3 };
inline constexpr std::array<const char*, 4> group_names{"field", "rect", "kfn", "unet"};

/// Everything a forward pass needs for one view, built once.
struct ViewInputs {
    int width = 0;
    int height = 0;
    query::QuerySet queries;
    // naive baseline: per-pixel samples along each pixel's own ray
    std::vector<int> counts;
    std::vector<double> depths;
    std::vector<Vec3> x, d;
    double far = 0;
};

/// Centroid and largest centroid distance of a cloud.
struct BoundingSphere {
    Vec3 center = Vec3::Zero();
    double radius = 0;
};

inline BoundingSphere bounding_sphere(const PointCloud& cloud) {
    BoundingSphere b;
    for (const auto& p : cloud.positions()) b.center += p;
    if (!cloud.empty()) b.center /= static_cast<double>(cloud.size());
    for (const auto& p : cloud.positions()) b.radius = std::max(b.radius, (p - b.center).norm());
    return b;
}

/// The naive baseline closes its last quadrature interval at the far side of
/// `bounds` as seen from the camera, which no fragment inside it can pass.
inline ViewInputs make_view_inputs(const RasterResult& r, const Camera& cam, const TrainConfig& cfg, std::uint64_t view_seed,
                                   const BoundingSphere& bounds = {}) {
    ViewInputs v;
    v.width = cam.width();
    v.height = cam.height();
    bool prune = cfg.prune && !cfg.naive_baseline;
    v.queries = query::build_queries(r.buffer, r.occupancy, cam, prune, cfg.dm_policy, view_seed);
    if (cfg.naive_baseline) {
        const auto& q = v.queries;
        int K = r.buffer.k();
        std::size_t P = r.buffer.pixel_count();
        v.counts.assign(P, 0);
        v.depths.assign(P * static_cast<std::size_t>(K), 0.0);
        for (const auto& s : q.slots) {
            v.counts[s.pixel] += 1;
            v.depths[static_cast<std::size_t>(s.pixel) * K + s.layer] = q.z[s.query];
            v.x.push_back(q.x[s.query]);
            v.d.push_back(q.d[s.query]);
        }
        v.far = (cam.origin() - bounds.center).norm() + bounds.radius;
    }
    return v;
}

/// Ground truth as a [3, H, W] buffer.
template <class T>
std::vector<T> image_to_chw(const Image& img) {
    std::vector<T> out(static_cast<std::size_t>(img.channels) * img.width * img.height);
    std::size_t hw = static_cast<std::size_t>(img.width) * img.height;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                out[static_cast<std::size_t>(c) * hw + static_cast<std::size_t>(y) * img.width + x] = static_cast<T>(img.at(x, y, c));
    return out;
}

template <class T>
Image chw_to_image(std::span<const T> v, int w, int h) {
    Image img(w, h, 3);
    std::size_t hw = static_cast<std::size_t>(w) * h;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) = static_cast<double>(v[static_cast<std::size_t>(c) * hw + static_cast<std::size_t>(y) * w + x]);
    return img;
}

/// All learned modules of one configuration. Absent modules (no rectifier,
/// no KFN, or the naive baseline's missing decoder) own no parameters.
template <class T>
struct Model {
    TrainConfig cfg;
    radiance::RadianceMLP<T> field;
    std::optional<radiance::Rectifier<T>> rect;
    std::optional<kfn::Kfn<T>> fusion;
    std::optional<decoder::UNet<T>> unet;

    Model(const TrainConfig& c, const Vec3& box_min, const Vec3& box_max) : cfg(c) {
        cfg.validate();
        std::mt19937_64 rng(cfg.seed);
        if (cfg.naive_baseline) {
            field = radiance::RadianceMLP<T>(4, rng);
            return;
        }
        field = radiance::RadianceMLP<T>(cfg.c, rng);
        if (cfg.rect) rect.emplace(enc::HashGridConfig{}, box_min, box_max, cfg.c, rng);
        if (cfg.kfn) fusion.emplace(kfn::KfnConfig{cfg.k, cfg.c, cfg.kfn_hidden, cfg.kfn_per_channel}, rng);
        unet.emplace(cfg.unet(), rng);
    }

    /// Named parameters keyed by module path.
    ad::ParamList<T> named_params() const {
        ad::ParamList<T> out;
        field.collect(out, "field");
        if (rect) rect->collect(out, "rect");
        if (fusion) fusion->collect(out, "kfn");
        if (unet) unet->collect(out, "unet");
        return out;
    }

    std::array<std::vector<ad::Tensor<T>>, 4> groups() const {
        std::array<std::vector<ad::Tensor<T>>, 4> g;
        for (const auto& p : named_params()) {
            std::size_t which = field_group;
            if (p.name.rfind("rect", 0) == 0) which = rect_group;
            else if (p.name.rfind("kfn", 0) == 0) which = kfn_group;
            else if (p.name.rfind("unet", 0) == 0) which = unet_group;
            g[which].push_back(p.tensor);
        }
        return g;
    }

    std::size_t param_count() const { return ad::count_params(named_params()); }

    /// Rendered image, [3, H, W] in [0, 1].
    ad::Tensor<T> forward(const ViewInputs& v) const {
        if (cfg.naive_baseline) {
            auto rgb = radiance::naive_volume_baseline<T>(v.counts, cfg.k, v.depths, v.x, v.d, field, v.far);
            return ad::reshape(ad::transpose(rgb), {3, v.height, v.width});
        }
        auto stack = query::build_feature_stack(v.queries, field, rect ? &*rect : nullptr);
        ad::Tensor<T> fused = fusion ? kfn::fuse(stack, kfn::kfn_mask(stack, *fusion))
                                     : ad::reshape(stack.features, {cfg.c, v.height, v.width});
        return unet->forward(fused);
    }

    /// Copies values from `tensors`; names and shapes must match exactly.
    void load_params(const std::map<std::string, ad::Tensor<T>>& tensors) const {
        auto mine = named_params();
        if (tensors.size() != mine.size())
            throw std::invalid_argument("checkpoint has " + std::to_string(tensors.size()) + " tensors, model has " +
                                        std::to_string(mine.size()));
        for (auto& p : mine) {
            auto it = tensors.find(p.name);
            if (it == tensors.end()) throw std::invalid_argument("checkpoint is missing tensor " + p.name);
            if (it->second.shape() != p.tensor.shape())
                throw std::invalid_argument("checkpoint tensor " + p.name + " has shape " + ad::shape_str(it->second.shape()) +
                                            ", model expects " + ad::shape_str(p.tensor.shape()));
            auto dst = p.tensor.mutable_values();
            std::copy(it->second.values().begin(), it->second.values().end(), dst.begin());
        }
    }
};

}  // namespace kbuf::train
