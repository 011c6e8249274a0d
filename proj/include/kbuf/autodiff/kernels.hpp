#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "kbuf/util/threads.hpp"

namespace kbuf::ad::kernels {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRow = Eigen::Map<RowMat<T>>;
template <class T>
using CMapRow = Eigen::Map<const RowMat<T>>;

/// y[n,:] = b + x[n,:] W for row-major x [N, in], W [in, out].
/// Rows are processed in register tiles of kRows; a short final tile is
/// copied into a zero-padded buffer so every row goes through the same
/// instruction sequence. A row's result therefore does not depend on the
/// batch it was evaluated in.
template <class T>
void dense_forward(const T* x, const T* w, const T* b, T* y, std::size_t n, std::size_t in, std::size_t out,
                   std::size_t workers = 1) {
    constexpr std::size_t kRows = 4, kCols = 32;
    auto tile = [&](const T* xt, T* yt) {
        std::size_t ob = 0;
        for (; ob + kCols <= out; ob += kCols) {
            T acc[kRows][kCols];
            for (std::size_t r = 0; r < kRows; ++r)
                for (std::size_t o = 0; o < kCols; ++o) acc[r][o] = b ? b[ob + o] : T(0);
            for (std::size_t i = 0; i < in; ++i) {
                const T* wi = w + i * out + ob;
                for (std::size_t r = 0; r < kRows; ++r) {
                    T xi = xt[r * in + i];
                    for (std::size_t o = 0; o < kCols; ++o) acc[r][o] += xi * wi[o];
                }
            }
            for (std::size_t r = 0; r < kRows; ++r)
                for (std::size_t o = 0; o < kCols; ++o) yt[r * out + ob + o] = acc[r][o];
        }
        for (std::size_t o = ob; o < out; ++o)
            for (std::size_t r = 0; r < kRows; ++r) {
                T acc = b ? b[o] : T(0);
                for (std::size_t i = 0; i < in; ++i) acc += xt[r * in + i] * w[i * out + o];
                yt[r * out + o] = acc;
            }
    };
    std::size_t full = n / kRows;
    constexpr std::size_t kTilesPerTask = 16;
    std::size_t tasks = (full + kTilesPerTask - 1) / kTilesPerTask;
    parallel_for(tasks, tasks >= 4 ? workers : 1, [&](std::size_t t) {
        std::size_t end = std::min(full, (t + 1) * kTilesPerTask);
        for (std::size_t ti = t * kTilesPerTask; ti < end; ++ti) tile(x + ti * kRows * in, y + ti * kRows * out);
    });
    if (std::size_t rest = n - full * kRows) {
        std::vector<T> xp(kRows * in, T(0)), yp(kRows * out);
        std::copy_n(x + full * kRows * in, rest * in, xp.data());
        tile(xp.data(), yp.data());
        std::copy_n(yp.data(), rest * out, y + full * kRows * out);
    }
}

/// Unfolds [cin, h, w] into [cin*kh*kw, h*w] with zero padding ("same" output size).
template <class T>
void im2col(const T* x, int cin, int h, int w, int kh, int kw, T* cols) {
    int ph = kh / 2, pw = kw / 2;
    std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < cin; ++c)
        for (int dy = 0; dy < kh; ++dy)
            for (int dx = 0; dx < kw; ++dx) {
                T* row = cols + ((static_cast<std::size_t>(c) * kh + dy) * kw + dx) * hw;
                const T* plane = x + static_cast<std::size_t>(c) * hw;
                for (int i = 0; i < h; ++i) {
                    int si = i + dy - ph;
                    T* dst = row + static_cast<std::size_t>(i) * w;
                    if (si < 0 || si >= h) {
                        std::fill(dst, dst + w, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(si) * w;
                    for (int j = 0; j < w; ++j) {
                        int sj = j + dx - pw;
                        dst[j] = (sj >= 0 && sj < w) ? src[sj] : T(0);
                    }
                }
            }
}

/// Adjoint of im2col: accumulates column gradients back into gx.
template <class T>
void col2im(const T* cols, int cin, int h, int w, int kh, int kw, T* gx) {
    int ph = kh / 2, pw = kw / 2;
    std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < cin; ++c)
        for (int dy = 0; dy < kh; ++dy)
            for (int dx = 0; dx < kw; ++dx) {
                const T* row = cols + ((static_cast<std::size_t>(c) * kh + dy) * kw + dx) * hw;
                T* plane = gx + static_cast<std::size_t>(c) * hw;
                for (int i = 0; i < h; ++i) {
                    int si = i + dy - ph;
                    if (si < 0 || si >= h) continue;
                    const T* src = row + static_cast<std::size_t>(i) * w;
                    T* dst = plane + static_cast<std::size_t>(si) * w;
                    for (int j = 0; j < w; ++j) {
                        int sj = j + dx - pw;
                        if (sj >= 0 && sj < w) dst[sj] += src[j];
                    }
                }
            }
}

}  // namespace kbuf::ad::kernels
