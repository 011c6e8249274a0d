#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kbuf/scene/camera.hpp"

namespace kbuf {

/// World-space point set with optional per-point RGB in [0,1].
class PointCloud {
public:
    PointCloud() = default;

    explicit PointCloud(std::vector<Vec3> positions, std::vector<Vec3> colors = {})
        : positions_(std::move(positions)), colors_(std::move(colors)) {
        if (positions_.empty()) throw std::invalid_argument("point cloud: no points");
        for (std::size_t i = 0; i < positions_.size(); ++i)
            if (!positions_[i].allFinite())
                throw std::invalid_argument("point cloud: non-finite position at index " + std::to_string(i));
        if (!colors_.empty()) {
            if (colors_.size() != positions_.size())
                throw std::invalid_argument("point cloud: " + std::to_string(colors_.size()) + " colors for " +
                                            std::to_string(positions_.size()) + " points");
            for (std::size_t i = 0; i < colors_.size(); ++i)
                for (int c = 0; c < 3; ++c)
                    if (!(colors_[i][c] >= 0.0 && colors_[i][c] <= 1.0))
                        throw std::invalid_argument("point cloud: color out of [0,1] at index " +
                                                    std::to_string(i));
        }
    }

    std::size_t size() const { return positions_.size(); }
    bool empty() const { return positions_.empty(); }
    bool has_colors() const { return !colors_.empty(); }
    const std::vector<Vec3>& positions() const { return positions_; }
    const std::vector<Vec3>& colors() const { return colors_; }
    const Vec3& position(std::size_t i) const { return positions_[i]; }
    const Vec3& color(std::size_t i) const { return colors_[i]; }

    friend bool operator==(const PointCloud& a, const PointCloud& b) {
        return a.positions_ == b.positions_ && a.colors_ == b.colors_;
    }

private:
    std::vector<Vec3> positions_;
    std::vector<Vec3> colors_;
};

}  // namespace kbuf
