#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kbuf/raster/kraster.hpp"
#include "kbuf/raster/kzb_io.hpp"
#include "kbuf/scene/views.hpp"

namespace kbuf::train {

struct FragmentKey {
    double tau = 0;
    int k = 0;
    std::uint64_t scene_hash = 0;
    friend bool operator==(const FragmentKey&, const FragmentKey&) = default;
};

namespace frag_detail {

inline void mix(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
}

}  // namespace frag_detail

/// FNV-1a over point positions and camera parameters.
inline std::uint64_t scene_hash(const PointCloud& cloud, const ViewSet& views) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& p : cloud.positions()) frag_detail::mix(h, p.data(), sizeof(double) * 3);
    for (const auto& v : views) {
        const auto& c = v.camera;
        double vals[5] = {static_cast<double>(c.width()), static_cast<double>(c.height()), c.focal(), c.cx(), c.cy()};
        frag_detail::mix(h, vals, sizeof vals);
        frag_detail::mix(h, c.rotation().data(), sizeof(double) * 9);
        frag_detail::mix(h, c.translation().data(), sizeof(double) * 3);
    }
    return h;
}

/// Per-view K-buffers rasterized once and reused while tau, K and the scene
/// stay the same. With a spill directory the buffers are also kept on disk
/// as KZB files and reloaded by later caches with a matching key.
class FragmentCache {
public:
    FragmentCache() = default;
    explicit FragmentCache(std::filesystem::path spill_dir) : spill_(std::move(spill_dir)) {}

    const std::vector<RasterResult>& get(const PointCloud& cloud, const ViewSet& views, double tau, int k,
                                         std::size_t workers = worker_count()) {
        FragmentKey key{tau, k, scene_hash(cloud, views)};
        if (key_ && *key_ == key) return views_;
        views_.clear();
        key_.reset();
        if (!spill_.empty() && load_spill(key, views.size())) {
            ++disk_loads_;
        } else {
            for (const auto& v : views) views_.push_back(rasterize_k(cloud, v.camera, tau, k, workers));
            ++builds_;
            if (!spill_.empty()) save_spill(key);
        }
        key_ = key;
        return views_;
    }

    /// Times the buffers were rasterized / reloaded from disk.
    int builds() const { return builds_; }
    int disk_loads() const { return disk_loads_; }

private:
    static nlohmann::json key_json(const FragmentKey& key, std::size_t n) {
        return {{"tau", key.tau}, {"k", key.k}, {"scene_hash", key.scene_hash}, {"views", n}};
    }

    bool load_spill(const FragmentKey& key, std::size_t n) {
        std::ifstream meta(spill_ / "fragments.json");
        if (!meta) return false;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(meta);
        } catch (const nlohmann::json::exception&) {
            return false;
        }
        if (j != key_json(key, n)) return false;
        std::vector<RasterResult> loaded;
        for (std::size_t i = 0; i < n; ++i) {
            auto path = spill_ / view_file(i);
            if (!std::filesystem::exists(path)) return false;
            RasterResult r;
            r.buffer = load_kzb(path);
            r.occupancy = OccupancyMap::from_buffer(r.buffer);
            loaded.push_back(std::move(r));
        }
        views_ = std::move(loaded);
        return true;
    }

    void save_spill(const FragmentKey& key) const {
        std::filesystem::create_directories(spill_);
        for (std::size_t i = 0; i < views_.size(); ++i) save_kzb(spill_ / view_file(i), views_[i].buffer);
        std::ofstream meta(spill_ / "fragments.json");
        if (!meta) throw std::runtime_error("cannot write " + (spill_ / "fragments.json").string());
        meta << key_json(key, views_.size()).dump() << '\n';
    }

    static std::string view_file(std::size_t i) {
        char name[32];
        std::snprintf(name, sizeof name, "view_%03zu.kzb", i);
        return name;
    }

    std::filesystem::path spill_;
    std::optional<FragmentKey> key_;
    std::vector<RasterResult> views_;
    int builds_ = 0;
    int disk_loads_ = 0;
};

}  // namespace kbuf::train
