#pragma once

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "kbuf/raster/kraster.hpp"
#include "kbuf/scene/image.hpp"

namespace kbuf {

/// Grayscale view of one buffer layer: min-max normalized over the layer's
/// occupied pixels with the nearest depth white, background black. A layer
/// with a single distinct depth renders white wherever occupied.
inline Image depth_layer_image(const KZBuffer& buf, int layer) {
    if (layer < 0 || layer >= buf.k()) throw std::out_of_range("depth_layer_image: layer out of range");
    Image img(buf.width(), buf.height(), 1, 0.0);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::uint32_t p = 0; p < buf.pixel_count(); ++p)
        if (buf.count(p) > layer) {
            double d = buf.slot(p)[static_cast<std::size_t>(layer)].dist;
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
    for (std::uint32_t p = 0; p < buf.pixel_count(); ++p)
        if (buf.count(p) > layer) {
            double d = buf.slot(p)[static_cast<std::size_t>(layer)].dist;
            img.data[p] = hi > lo ? 1.0 - (d - lo) / (hi - lo) : 1.0;
        }
    return img;
}

}  // namespace kbuf
