#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbuf/autodiff/nn.hpp"

namespace kbuf::decoder {

struct UNetConfig {
    std::vector<int> widths{16, 32, 64, 128, 256};
    int downsamples = 4;
    double width_multiplier = 1.0;
    int in_channels = 8;
    int out_channels = 3;

    /// Widths after the multiplier, each at least 1.
    std::vector<int> effective_widths() const {
        std::vector<int> out;
        for (int w : widths) out.push_back(std::max(1, static_cast<int>(std::lround(w * width_multiplier))));
        return out;
    }

    void validate() const {
        if (downsamples < 0) throw std::invalid_argument("unet: downsample count must be >= 0");
        if (static_cast<int>(widths.size()) != downsamples + 1)
            throw std::invalid_argument("unet: need " + std::to_string(downsamples + 1) + " widths, got " +
                                        std::to_string(widths.size()));
        for (int w : widths)
            if (w < 1) throw std::invalid_argument("unet: widths must be >= 1");
        if (!(width_multiplier > 0)) throw std::invalid_argument("unet: width multiplier must be > 0");
        if (in_channels < 1 || out_channels < 1) throw std::invalid_argument("unet: channel counts must be >= 1");
    }
};

/// Side length the network runs at: the next multiple of 2^n, and at
/// least 2^(n+1) so the innermost level keeps a 2x2 extent for instance norm.
inline int padded_extent(int n, int downsamples) {
    int step = 1 << downsamples;
    return std::max((n + step - 1) / step * step, 2 * step);
}

/// Spatial extent of the innermost level for an H x W input.
inline std::pair<int, int> innermost_extent(int h, int w, int downsamples) {
    return {padded_extent(h, downsamples) >> downsamples, padded_extent(w, downsamples) >> downsamples};
}

template <class T>
struct UNet {
    UNetConfig cfg;
    std::vector<ad::GatedBlock<T>> enc;  // level 0..n
    std::vector<ad::GatedBlock<T>> dec;  // level 0..n-1, applied n-1 down to 0
    ad::ConvLayer<T> head;

    UNet() = default;
    template <class Rng>
    UNet(const UNetConfig& c, Rng& rng) : cfg(c) {
        cfg.validate();
        auto w = cfg.effective_widths();
        int n = cfg.downsamples;
        for (int l = 0; l <= n; ++l) enc.emplace_back(l == 0 ? cfg.in_channels : w[static_cast<std::size_t>(l - 1)], w[static_cast<std::size_t>(l)], rng);
        for (int l = 0; l < n; ++l)
            dec.emplace_back(w[static_cast<std::size_t>(l + 1)] + w[static_cast<std::size_t>(l)], w[static_cast<std::size_t>(l)], rng);
        head = ad::ConvLayer<T>(w[0], cfg.out_channels, 3, rng);
    }

    /// [C, H, W] features to an [out, H, W] image in (0, 1).
    ad::Tensor<T> forward(const ad::Tensor<T>& x) const {
        if (x.rank() != 3 || x.dim(0) != cfg.in_channels)
            throw ad::ShapeError("unet: expected [" + std::to_string(cfg.in_channels) + ", H, W], got " + ad::shape_str(x.shape()));
        int h = x.dim(1), w = x.dim(2), n = cfg.downsamples;
        int hp = padded_extent(h, n), wp = padded_extent(w, n);
        ad::Tensor<T> cur = (hp != h || wp != w) ? ad::pad_reflect(x, hp, wp) : x;
        std::vector<ad::Tensor<T>> skips;
        for (int l = 0; l <= n; ++l) {
            if (l > 0) cur = ad::downsample2(cur);
            cur = enc[static_cast<std::size_t>(l)](cur);
            skips.push_back(cur);
        }
        for (int l = n - 1; l >= 0; --l)
            cur = dec[static_cast<std::size_t>(l)](ad::concat<T>({ad::upsample2(cur), skips[static_cast<std::size_t>(l)]}, 0));
        auto img = ad::sigmoid(head(cur));
        return (hp != h || wp != w) ? ad::crop(img, h, w) : img;
    }

    void collect(ad::ParamList<T>& out, const std::string& prefix) const {
        for (std::size_t l = 0; l < enc.size(); ++l) enc[l].collect(out, prefix + ".enc" + std::to_string(l));
        for (std::size_t l = 0; l < dec.size(); ++l) dec[l].collect(out, prefix + ".dec" + std::to_string(l));
        head.collect(out, prefix + ".head");
    }
};

/// Learnable scalar count of a configuration, computed from the layer shapes.
inline std::size_t param_count(const UNetConfig& cfg) {
    cfg.validate();
    auto w = cfg.effective_widths();
    auto gated = [](std::size_t cin, std::size_t cout) { return 2 * (cout * cin * 9 + cout) + 2 * cout; };
    std::size_t n = 0;
    for (int l = 0; l <= cfg.downsamples; ++l)
        n += gated(static_cast<std::size_t>(l == 0 ? cfg.in_channels : w[static_cast<std::size_t>(l - 1)]), static_cast<std::size_t>(w[static_cast<std::size_t>(l)]));
    for (int l = 0; l < cfg.downsamples; ++l)
        n += gated(static_cast<std::size_t>(w[static_cast<std::size_t>(l + 1)] + w[static_cast<std::size_t>(l)]), static_cast<std::size_t>(w[static_cast<std::size_t>(l)]));
    n += static_cast<std::size_t>(cfg.out_channels) * (static_cast<std::size_t>(w[0]) * 9 + 1);
    return n;
}

}  // namespace kbuf::decoder
