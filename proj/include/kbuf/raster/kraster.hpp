#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kbuf/scene/camera.hpp"
#include "kbuf/scene/point_cloud.hpp"
#include "kbuf/util/threads.hpp"

namespace kbuf {

/// One depth-test candidate: a point splatted onto a pixel.
struct Fragment {
    std::uint32_t point_id = 0;
    float dist = 0;  // Euclidean camera distance, identical for every pixel of a splat

    friend bool operator==(const Fragment&, const Fragment&) = default;
};

/// Depth order with ties broken by ascending point id.
inline bool nearer(const Fragment& a, const Fragment& b) {
    return a.dist < b.dist || (a.dist == b.dist && a.point_id < b.point_id);
}

/// Row-major pixel ID: width * row + column.
inline std::uint32_t pixel_id(int width, int px, int py) {
    if (width < 1 || px < 0 || px >= width || py < 0)
        throw std::out_of_range("pixel_id: (" + std::to_string(px) + ", " + std::to_string(py) +
                                ") invalid for width " + std::to_string(width));
    return static_cast<std::uint32_t>(width) * static_cast<std::uint32_t>(py) + static_cast<std::uint32_t>(px);
}

/// Projected splat radius in pixels, floored at half a pixel.
inline double screen_radius(double tau, double focal, double dist) {
    if (!(dist > 0)) throw std::invalid_argument("screen_radius: dist must be > 0");
    return std::max(tau * focal / dist, 0.5);
}

/// Sorted insertion into a slot holding `count` fragments (capacity `k`).
/// Returns the new count; the farthest entry falls off when full.
inline int depth_insert(std::span<Fragment> slot, int count, const Fragment& frag, int k) {
    int pos = count;
    while (pos > 0 && nearer(frag, slot[static_cast<std::size_t>(pos - 1)])) --pos;
    if (pos >= k) return count;
    int last = std::min(count, k - 1);
    for (int i = last; i > pos; --i) slot[static_cast<std::size_t>(i)] = slot[static_cast<std::size_t>(i - 1)];
    slot[static_cast<std::size_t>(pos)] = frag;
    return std::min(count + 1, k);
}

/// Vector form of depth_insert.
inline void depth_insert(std::vector<Fragment>& slot, const Fragment& frag, int k) {
    if (k < 1) throw std::invalid_argument("depth_insert: K must be >= 1");
    int count = static_cast<int>(slot.size());
    slot.resize(static_cast<std::size_t>(std::max(count, k)));
    count = depth_insert(std::span<Fragment>(slot), count, frag, k);
    slot.resize(static_cast<std::size_t>(count));
}

/// Per-pixel lists of up to K fragments sorted by ascending distance.
class KZBuffer {
public:
    KZBuffer() = default;
    KZBuffer(int width, int height, int k)
        : width_(width),
          height_(height),
          k_(k),
          counts_(static_cast<std::size_t>(width) * height, 0),
          frags_(static_cast<std::size_t>(width) * height * k) {
        if (width < 1 || height < 1) throw std::invalid_argument("KZBuffer: empty image");
        if (k < 1 || k > 255) throw std::invalid_argument("KZBuffer: K must be in [1, 255]");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    int k() const { return k_; }
    std::size_t pixel_count() const { return counts_.size(); }

    int count(std::uint32_t pid) const { return counts_[pid]; }
    std::span<const Fragment> slot(std::uint32_t pid) const {
        return {frags_.data() + static_cast<std::size_t>(pid) * k_, counts_[pid]};
    }
    std::span<const Fragment> slot(int px, int py) const { return slot(pixel_id(width_, px, py)); }

    void insert(std::uint32_t pid, const Fragment& f) {
        std::span<Fragment> s(frags_.data() + static_cast<std::size_t>(pid) * k_, static_cast<std::size_t>(k_));
        counts_[pid] = static_cast<std::uint8_t>(depth_insert(s, counts_[pid], f, k_));
    }

    /// Replaces a pixel's list; `frags` must already be sorted and at most K long.
    void set_slot(std::uint32_t pid, std::span<const Fragment> frags) {
        if (frags.size() > static_cast<std::size_t>(k_)) throw std::invalid_argument("KZBuffer: slot exceeds K");
        std::copy(frags.begin(), frags.end(), frags_.begin() + static_cast<std::ptrdiff_t>(pid) * k_);
        counts_[pid] = static_cast<std::uint8_t>(frags.size());
    }

    std::size_t total_fragments() const {
        std::size_t n = 0;
        for (auto c : counts_) n += c;
        return n;
    }

    friend bool operator==(const KZBuffer& a, const KZBuffer& b) {
        if (a.width_ != b.width_ || a.height_ != b.height_ || a.k_ != b.k_ || a.counts_ != b.counts_) return false;
        for (std::uint32_t p = 0; p < a.counts_.size(); ++p)
            if (!std::equal(a.slot(p).begin(), a.slot(p).end(), b.slot(p).begin())) return false;
        return true;
    }

private:
    int width_ = 0;
    int height_ = 0;
    int k_ = 0;
    std::vector<std::uint8_t> counts_;
    std::vector<Fragment> frags_;
};

/// For each visible point, the ascending pixel IDs it occupies in any layer.
class OccupancyMap {
public:
    OccupancyMap() = default;

    static OccupancyMap from_buffer(const KZBuffer& buf) {
        OccupancyMap occ;
        std::vector<std::uint32_t> ids;
        for (std::uint32_t p = 0; p < buf.pixel_count(); ++p)
            for (const auto& f : buf.slot(p)) ids.push_back(f.point_id);
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        occ.points_ = std::move(ids);
        occ.offsets_.assign(occ.points_.size() + 1, 0);
        for (std::uint32_t p = 0; p < buf.pixel_count(); ++p)
            for (const auto& f : buf.slot(p)) ++occ.offsets_[occ.index_of(f.point_id) + 1];
        for (std::size_t i = 1; i < occ.offsets_.size(); ++i) occ.offsets_[i] += occ.offsets_[i - 1];
        occ.pixels_.resize(occ.offsets_.back());
        std::vector<std::size_t> cursor(occ.offsets_.begin(), occ.offsets_.end() - 1);
        // ascending pixel scan keeps each list sorted
        for (std::uint32_t p = 0; p < buf.pixel_count(); ++p)
            for (const auto& f : buf.slot(p)) occ.pixels_[cursor[occ.index_of(f.point_id)]++] = p;
        return occ;
    }

    /// Distinct visible point ids, ascending.
    const std::vector<std::uint32_t>& points() const { return points_; }
    std::size_t size() const { return points_.size(); }
    std::size_t total_entries() const { return pixels_.size(); }

    std::span<const std::uint32_t> pixels_at(std::size_t index) const {
        return {pixels_.data() + offsets_[index], offsets_[index + 1] - offsets_[index]};
    }

    std::span<const std::uint32_t> pixels_of(std::uint32_t point_id) const {
        auto it = std::lower_bound(points_.begin(), points_.end(), point_id);
        if (it == points_.end() || *it != point_id) return {};
        return pixels_at(static_cast<std::size_t>(it - points_.begin()));
    }

    bool contains(std::uint32_t point_id, std::uint32_t pixel) const {
        auto px = pixels_of(point_id);
        return std::binary_search(px.begin(), px.end(), pixel);
    }

    /// Index of `point_id` in points(), or npos.
    std::size_t find(std::uint32_t point_id) const {
        auto it = std::lower_bound(points_.begin(), points_.end(), point_id);
        if (it == points_.end() || *it != point_id) return npos;
        return static_cast<std::size_t>(it - points_.begin());
    }

    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    friend bool operator==(const OccupancyMap&, const OccupancyMap&) = default;

private:
    std::size_t index_of(std::uint32_t point_id) const {
        return static_cast<std::size_t>(std::lower_bound(points_.begin(), points_.end(), point_id) - points_.begin());
    }

    std::vector<std::uint32_t> points_;
    std::vector<std::size_t> offsets_;
    std::vector<std::uint32_t> pixels_;
};

struct RasterResult {
    KZBuffer buffer;
    OccupancyMap occupancy;
};

namespace raster_detail {

struct Splat {
    std::uint32_t id;
    float dist;
    double u, v, r2;
    int x0, x1, y0, y1;  // inclusive pixel bounds, clipped to the image
};

inline constexpr int tile_size = 32;

}  // namespace raster_detail

/// Splats every visible point as a disk of world radius `tau` and keeps
/// the K nearest fragments per pixel. Tiles are written by exactly one
/// worker each, so the result is independent of `workers`.
inline RasterResult rasterize_k(const PointCloud& cloud, const Camera& cam, double tau, int k,
                                std::size_t workers = worker_count()) {
    using namespace raster_detail;
    if (k < 1) throw std::invalid_argument("rasterize_k: K must be >= 1");
    const int w = cam.width();
    const int h = cam.height();
    RasterResult out{KZBuffer(w, h, k), {}};

    std::vector<Splat> splats;
    splats.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        Projection pr = cam.project(cloud.position(i));
        if (!pr.visible) continue;
        float dist = static_cast<float>(pr.dist);
        if (!(dist > 0) || !std::isfinite(dist)) continue;
        double r = screen_radius(tau, cam.focal(), pr.dist);
        double fx0 = std::ceil(pr.u - r - 0.5), fx1 = std::floor(pr.u + r - 0.5);
        double fy0 = std::ceil(pr.v - r - 0.5), fy1 = std::floor(pr.v + r - 0.5);
        if (fx1 < 0 || fy1 < 0 || fx0 > w - 1 || fy0 > h - 1 || fx0 > fx1 || fy0 > fy1) continue;
        Splat s;
        s.id = static_cast<std::uint32_t>(i);
        s.dist = dist;
        s.u = pr.u;
        s.v = pr.v;
        s.r2 = r * r;
        s.x0 = static_cast<int>(std::max(fx0, 0.0));
        s.x1 = static_cast<int>(std::min(fx1, double(w - 1)));
        s.y0 = static_cast<int>(std::max(fy0, 0.0));
        s.y1 = static_cast<int>(std::min(fy1, double(h - 1)));
        splats.push_back(s);
    }

    const int tiles_x = (w + tile_size - 1) / tile_size;
    const int tiles_y = (h + tile_size - 1) / tile_size;
    std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (std::uint32_t s = 0; s < splats.size(); ++s) {
        const auto& sp = splats[s];
        for (int ty = sp.y0 / tile_size; ty <= sp.y1 / tile_size; ++ty)
            for (int tx = sp.x0 / tile_size; tx <= sp.x1 / tile_size; ++tx)
                bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(s);
    }

    KZBuffer& buf = out.buffer;
    parallel_for(bins.size(), workers, [&](std::size_t t) {
        int tx = static_cast<int>(t % tiles_x), ty = static_cast<int>(t / tiles_x);
        int bx0 = tx * tile_size, by0 = ty * tile_size;
        int bx1 = std::min(bx0 + tile_size, w) - 1, by1 = std::min(by0 + tile_size, h) - 1;
        for (std::uint32_t s : bins[t]) {
            const auto& sp = splats[s];
            Fragment f{sp.id, sp.dist};
            for (int y = std::max(sp.y0, by0); y <= std::min(sp.y1, by1); ++y) {
                double dy = y + 0.5 - sp.v;
                for (int x = std::max(sp.x0, bx0); x <= std::min(sp.x1, bx1); ++x) {
                    double dx = x + 0.5 - sp.u;
                    if (dx * dx + dy * dy <= sp.r2) buf.insert(pixel_id(w, x, y), f);
                }
            }
        }
    });

    out.occupancy = OccupancyMap::from_buffer(buf);
    return out;
}

}  // namespace kbuf
