#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kbuf/autodiff/nn.hpp"
#include "kbuf/autodiff/tensor.hpp"

namespace kbuf::enc {

struct HashGridConfig {
    int levels = 16;
    int features_per_level = 2;
    std::uint32_t table_size = 1u << 14;
    int base_resolution = 16;
    double growth_factor = 1.38;

    constexpr int output_width() const { return levels * features_per_level; }

    void validate() const {
        if (levels < 1 || features_per_level < 1) throw std::invalid_argument("hash grid: levels and features must be >= 1");
        if (table_size == 0 || (table_size & (table_size - 1)))
            throw std::invalid_argument("hash grid: table_size " + std::to_string(table_size) + " is not a power of two");
        if (base_resolution < 1 || !(growth_factor > 1)) throw std::invalid_argument("hash grid: bad resolution schedule");
    }
};

/// Axis-aligned cube around a set of camera origins, padded so that
/// nearby unseen origins still fall inside.
inline std::pair<Eigen::Vector3d, Eigen::Vector3d> origin_box(std::span<const Eigen::Vector3d> origins) {
    if (origins.empty()) throw std::invalid_argument("origin_box: no origins");
    Eigen::Vector3d lo = origins[0], hi = origins[0];
    for (const auto& o : origins) {
        lo = lo.cwiseMin(o);
        hi = hi.cwiseMax(o);
    }
    Eigen::Vector3d c = 0.5 * (lo + hi);
    double half = 0.5 * (hi - lo).maxCoeff();
    half = half * 1.1 + 0.05 * std::max(1.0, c.norm());
    Eigen::Vector3d h = Eigen::Vector3d::Constant(half);
    return {c - h, c + h};
}

/// Multiresolution hash encoding over a fixed box with learnable tables.
template <class T>
class HashGrid {
public:
    HashGrid() = default;

    template <class Rng>
    HashGrid(const HashGridConfig& cfg, Eigen::Vector3d box_min, Eigen::Vector3d box_max, Rng& rng)
        : cfg_(cfg), box_min_(box_min), box_max_(box_max) {
        cfg_.validate();
        if (!((box_max - box_min).array() > 0).all()) throw std::invalid_argument("hash grid: empty domain box");
        std::vector<T> v(static_cast<std::size_t>(cfg.levels) * cfg.table_size * cfg.features_per_level);
        std::uniform_real_distribution<double> u(-1e-4, 1e-4);
        for (auto& x : v) x = static_cast<T>(u(rng));
        tables_ = ad::Tensor<T>({cfg.levels, static_cast<int>(cfg.table_size), cfg.features_per_level}, std::move(v), true);
    }

    const HashGridConfig& config() const { return cfg_; }
    const Eigen::Vector3d& box_min() const { return box_min_; }
    const Eigen::Vector3d& box_max() const { return box_max_; }
    ad::Tensor<T>& tables() { return tables_; }
    const ad::Tensor<T>& tables() const { return tables_; }

    int resolution(int level) const {
        return static_cast<int>(std::floor(cfg_.base_resolution * std::pow(cfg_.growth_factor, level)));
    }

    bool is_direct(int level) const {
        double n = resolution(level) + 1.0;
        return n * n * n <= static_cast<double>(cfg_.table_size);
    }

    /// Table slot of integer corner (ix, iy, iz) at `level`.
    std::uint32_t corner_index(int level, std::uint32_t ix, std::uint32_t iy, std::uint32_t iz) const {
        if (is_direct(level)) {
            auto n = static_cast<std::uint32_t>(resolution(level) + 1);
            return ix + n * (iy + n * iz);
        }
        std::uint32_t h = ix * 1u ^ iy * 2654435761u ^ iz * 805459861u;
        return h & (cfg_.table_size - 1);
    }

    /// Encodes N points into [N, levels * features]. Points outside the box are clamped to it.
    ad::Tensor<T> encode(std::span<const Eigen::Vector3d> points) const {
        int L = cfg_.levels, F = cfg_.features_per_level;
        std::size_t n = points.size();
        std::size_t width = static_cast<std::size_t>(L) * F;
        // 8 (slot, weight) pairs per point and level
        std::vector<std::uint32_t> slots(n * L * 8);
        std::vector<T> weights(n * L * 8);
        std::vector<T> out(n * width, T(0));
        auto tab = tables_.values();
        Eigen::Vector3d extent = box_max_ - box_min_;
        for (std::size_t p = 0; p < n; ++p) {
            Eigen::Vector3d u = ((points[p] - box_min_).array() / extent.array()).cwiseMax(0.0).cwiseMin(1.0);
            for (int l = 0; l < L; ++l) {
                int res = resolution(l);
                std::array<std::uint32_t, 3> base{};
                std::array<double, 3> frac{};
                for (int a = 0; a < 3; ++a) {
                    double s = u[a] * res;
                    int c = std::min(static_cast<int>(std::floor(s)), res - 1);
                    base[static_cast<std::size_t>(a)] = static_cast<std::uint32_t>(c);
                    frac[static_cast<std::size_t>(a)] = s - c;
                }
                for (int corner = 0; corner < 8; ++corner) {
                    double w = 1;
                    std::array<std::uint32_t, 3> idx{};
                    for (int a = 0; a < 3; ++a) {
                        bool hi = corner >> a & 1;
                        idx[static_cast<std::size_t>(a)] = base[static_cast<std::size_t>(a)] + (hi ? 1u : 0u);
                        w *= hi ? frac[static_cast<std::size_t>(a)] : 1 - frac[static_cast<std::size_t>(a)];
                    }
                    std::uint32_t slot = corner_index(l, idx[0], idx[1], idx[2]);
                    std::size_t k = (p * L + l) * 8 + corner;
                    slots[k] = slot;
                    weights[k] = static_cast<T>(w);
                    const T* e = tab.data() + (static_cast<std::size_t>(l) * cfg_.table_size + slot) * F;
                    for (int f = 0; f < F; ++f) out[p * width + l * F + f] += static_cast<T>(w) * e[f];
                }
            }
        }
        std::uint32_t table_size = cfg_.table_size;
        return ad::make_result<T>(
            {static_cast<int>(n), static_cast<int>(width)}, std::move(out), {tables_},
            [slots = std::move(slots), weights = std::move(weights), n, L, F, width, table_size](ad::Node<T>& self) {
                T* g = ad::parent_grad(self, 0);
                if (!g) return;
                for (std::size_t p = 0; p < n; ++p)
                    for (int l = 0; l < L; ++l)
                        for (int corner = 0; corner < 8; ++corner) {
                            std::size_t k = (p * L + l) * 8 + corner;
                            T* e = g + (static_cast<std::size_t>(l) * table_size + slots[k]) * F;
                            for (int f = 0; f < F; ++f) e[f] += weights[k] * self.grad[p * width + l * F + f];
                        }
            });
    }

    void collect(ad::ParamList<T>& out, const std::string& prefix) const { out.push_back({prefix + ".tables", tables_}); }

private:
    HashGridConfig cfg_;
    Eigen::Vector3d box_min_ = Eigen::Vector3d::Zero();
    Eigen::Vector3d box_max_ = Eigen::Vector3d::Ones();
    ad::Tensor<T> tables_;
};

}  // namespace kbuf::enc
