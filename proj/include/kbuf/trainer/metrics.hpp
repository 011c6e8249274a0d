#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "kbuf/scene/image.hpp"

namespace kbuf::train {

inline void check_same_shape(const Image& a, const Image& b, const char* what) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw std::invalid_argument(std::string(what) + ": image shapes differ");
}

inline double mse(const Image& a, const Image& b) {
    check_same_shape(a, b, "mse");
    double s = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return a.data.empty() ? 0.0 : s / static_cast<double>(a.data.size());
}

/// 10 log10(1 / MSE), capped at 99 dB when MSE < 1e-10.
inline double psnr(const Image& a, const Image& b) {
    double m = mse(a, b);
    if (m < 1e-10) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / m));
}

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Mean SSIM over valid window positions and channels, Gaussian-weighted
/// windows. Images smaller than the window use a window clipped to the image.
inline double ssim(const Image& a, const Image& b, const SsimOptions& opt = {}) {
    check_same_shape(a, b, "ssim");
    if (opt.window < 1 || opt.window % 2 == 0) throw std::invalid_argument("ssim: window must be odd and >= 1");
    int win_h = std::min(opt.window, a.height), win_w = std::min(opt.window, a.width);
    if (win_h < 1 || win_w < 1) throw std::invalid_argument("ssim: empty image");
    auto kernel = [&](int n) {
        std::vector<double> g(static_cast<std::size_t>(n));
        double c = (n - 1) / 2.0, s = 0;
        for (int i = 0; i < n; ++i) s += g[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2 * opt.sigma * opt.sigma));
        for (auto& v : g) v /= s;
        return g;
    };
    auto gy = kernel(win_h), gx = kernel(win_w);
    const double c1 = opt.k1 * opt.k1, c2 = opt.k2 * opt.k2;
    double total = 0;
    std::size_t count = 0;
    for (int ch = 0; ch < a.channels; ++ch)
        for (int y0 = 0; y0 + win_h <= a.height; ++y0)
            for (int x0 = 0; x0 + win_w <= a.width; ++x0) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = 0; i < win_h; ++i)
                    for (int j = 0; j < win_w; ++j) {
                        double w = gy[static_cast<std::size_t>(i)] * gx[static_cast<std::size_t>(j)];
                        double va = a.at(x0 + j, y0 + i, ch), vb = b.at(x0 + j, y0 + i, ch);
                        ma += w * va;
                        mb += w * vb;
                        saa += w * va * va;
                        sbb += w * vb * vb;
                        sab += w * va * vb;
                    }
                double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
    return total / static_cast<double>(count);
}

}  // namespace kbuf::train
