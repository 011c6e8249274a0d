#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbuf/raster/kraster.hpp"
#include "kbuf/scene/camera.hpp"

namespace kbuf::query {

enum class DmPolicy { minimum, random, average };

inline DmPolicy parse_dm_policy(const std::string& s) {
    if (s == "minimum") return DmPolicy::minimum;
    if (s == "random") return DmPolicy::random;
    if (s == "average") return DmPolicy::average;
    throw std::invalid_argument("unknown d_m policy '" + s + "' (expected minimum, random or average)");
}

inline std::string to_string(DmPolicy p) {
    switch (p) {
        case DmPolicy::minimum: return "minimum";
        case DmPolicy::random: return "random";
        case DmPolicy::average: return "average";
    }
    return "?";
}

/// One occupied z-buffer entry.
struct Slot {
    int layer = 0;
    std::uint32_t pixel = 0;
    std::uint32_t query = 0;  // row of the query table feeding this slot
    std::uint32_t dir = 0;    // row of pixel_dirs holding d_j
};

struct QuerySet {
    int width = 0, height = 0, k = 0;
    bool pruned = true;
    Vec3 origin = Vec3::Zero();
    // query table
    std::vector<Vec3> x;
    std::vector<Vec3> d;
    std::vector<double> z;
    std::vector<std::uint32_t> point_ids;
    // slot table, pixel-major then layer
    std::vector<Slot> slots;
    // ray directions of occupied pixels
    std::vector<Vec3> pixel_dirs;
    std::vector<std::uint32_t> dir_pixels;

    std::size_t query_count() const { return x.size(); }
    std::size_t slot_count() const { return slots.size(); }

    std::vector<std::uint32_t> slot_queries() const {
        std::vector<std::uint32_t> out(slots.size());
        for (std::size_t s = 0; s < slots.size(); ++s) out[s] = slots[s].query;
        return out;
    }
    std::vector<std::uint32_t> slot_dirs() const {
        std::vector<std::uint32_t> out(slots.size());
        for (std::size_t s = 0; s < slots.size(); ++s) out[s] = slots[s].dir;
        return out;
    }
};

inline Vec3 reconstruct_x(const Vec3& origin, double z, const Vec3& d) { return origin + z * d; }

/// Builds queried points from a K z-buffer. With pruning each visible
/// point is queried once along the direction chosen by `policy`;
/// otherwise every slot is its own query along its pixel ray.
inline QuerySet build_queries(const KZBuffer& buf, const OccupancyMap& occ, const Camera& cam, bool prune,
                              DmPolicy policy = DmPolicy::minimum, std::uint64_t seed = 0) {
    if (buf.width() != cam.width() || buf.height() != cam.height())
        throw std::invalid_argument("build_queries: buffer and camera sizes differ");
    if (occ.total_entries() != buf.total_fragments())
        throw std::invalid_argument("build_queries: occupancy map does not match the buffer");
    QuerySet q;
    q.width = buf.width();
    q.height = buf.height();
    q.k = buf.k();
    q.pruned = prune;
    q.origin = cam.origin();

    std::vector<std::uint32_t> dir_of_pixel(buf.pixel_count(), UINT32_MAX);
    for (std::uint32_t p = 0; p < buf.pixel_count(); ++p) {
        if (buf.count(p) == 0) continue;
        dir_of_pixel[p] = static_cast<std::uint32_t>(q.pixel_dirs.size());
        q.pixel_dirs.push_back(ray_direction(cam, static_cast<int>(p % static_cast<std::uint32_t>(q.width)),
                                             static_cast<int>(p / static_cast<std::uint32_t>(q.width))));
        q.dir_pixels.push_back(p);
    }

    if (prune) {
        std::size_t n = occ.size();
        q.x.resize(n);
        q.d.resize(n);
        q.z.resize(n);
        q.point_ids = occ.points();
        std::mt19937_64 rng(seed);
        for (std::size_t i = 0; i < n; ++i) {
            auto pix = occ.pixels_at(i);
            if (pix.empty()) throw std::invalid_argument("build_queries: point without pixels in occupancy map");
            std::uint32_t jmin = pix[0];  // pixels are stored ascending
            Vec3 dm = q.pixel_dirs[dir_of_pixel[jmin]];
            if (policy == DmPolicy::random) {
                std::uniform_int_distribution<std::size_t> pick(0, pix.size() - 1);
                dm = q.pixel_dirs[dir_of_pixel[pix[pick(rng)]]];
            } else if (policy == DmPolicy::average) {
                Vec3 sum = Vec3::Zero();
                for (auto j : pix) sum += q.pixel_dirs[dir_of_pixel[j]];
                if (sum.norm() > 1e-12) dm = sum.normalized();
            }
            // the point's camera distance, identical in all of its fragments
            double z = 0;
            bool found = false;
            for (const auto& f : buf.slot(jmin))
                if (f.point_id == q.point_ids[i]) {
                    z = f.dist;
                    found = true;
                    break;
                }
            if (!found) throw std::invalid_argument("build_queries: occupancy map does not match the buffer");
            q.z[i] = z;
            q.d[i] = dm;
            q.x[i] = reconstruct_x(q.origin, z, dm);
        }
    }

    q.slots.reserve(buf.total_fragments());
    for (std::uint32_t p = 0; p < buf.pixel_count(); ++p) {
        auto s = buf.slot(p);
        for (std::size_t l = 0; l < s.size(); ++l) {
            Slot slot{static_cast<int>(l), p, 0, dir_of_pixel[p]};
            if (prune) {
                std::size_t i = occ.find(s[l].point_id);
                if (i == OccupancyMap::npos) throw std::invalid_argument("build_queries: point missing from occupancy map");
                slot.query = static_cast<std::uint32_t>(i);
            } else {
                slot.query = static_cast<std::uint32_t>(q.x.size());
                const Vec3& dj = q.pixel_dirs[slot.dir];
                q.x.push_back(reconstruct_x(q.origin, s[l].dist, dj));
                q.d.push_back(dj);
                q.z.push_back(s[l].dist);
                q.point_ids.push_back(s[l].point_id);
            }
            q.slots.push_back(slot);
        }
    }
    return q;
}

}  // namespace kbuf::query
