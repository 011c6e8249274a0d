#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "kbuf/autodiff/tensor.hpp"

namespace kbuf::ad {

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

/// (outer, n, inner) factorization of a shape around `axis`.
struct AxisSplit {
    std::size_t outer = 1, n = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& s, int axis) {
    if (axis < 0 || axis >= static_cast<int>(s.size())) throw ShapeError("axis out of range for " + shape_str(s));
    AxisSplit r;
    for (int i = 0; i < axis; ++i) r.outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
    r.n = static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]);
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) r.inner *= static_cast<std::size_t>(s[i]);
    return r;
}

template <class T, class F, class G>
Tensor<T> unary(const Tensor<T>& x, F fwd, G dfdx_from_xy) {
    std::vector<T> y(x.numel());
    auto xv = x.values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(xv[i]);
    return make_result<T>(x.shape(), std::move(y), {x}, [dfdx_from_xy](Node<T>& self) {
        T* gx = parent_grad(self, 0);
        if (!gx) return;
        const T* xv = parent_value(self, 0);
        for (std::size_t i = 0; i < self.size(); ++i) gx[i] += self.grad[i] * dfdx_from_xy(xv[i], self.value[i]);
    });
}

}  // namespace detail

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    return detail::unary(
        x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return detail::unary(
        x,
        [](T v) {
            if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
            T e = std::exp(v);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> softplus(const Tensor<T>& x) {
    return detail::unary(
        x, [](T v) { return v > T(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
        [](T v, T) {
            if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
            T e = std::exp(v);
            return e / (T(1) + e);
        });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
    return detail::unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
    return detail::unary(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
    return detail::unary(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a.shape(), b.shape(), "add");
    std::vector<T> y(a.numel());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
    return make_result<T>(a.shape(), std::move(y), {a, b}, [](Node<T>& self) {
        for (std::size_t p = 0; p < 2; ++p)
            if (T* g = parent_grad(self, p))
                for (std::size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i];
    });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a.shape(), b.shape(), "sub");
    std::vector<T> y(a.numel());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
    return make_result<T>(a.shape(), std::move(y), {a, b}, [](Node<T>& self) {
        if (T* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i];
        if (T* g = parent_grad(self, 1))
            for (std::size_t i = 0; i < self.size(); ++i) g[i] -= self.grad[i];
    });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a.shape(), b.shape(), "mul");
    std::vector<T> y(a.numel());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    return make_result<T>(a.shape(), std::move(y), {a, b}, [](Node<T>& self) {
        const T* av = parent_value(self, 0);
        const T* bv = parent_value(self, 1);
        if (T* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i] * bv[i];
        if (T* g = parent_grad(self, 1))
            for (std::size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i] * av[i];
    });
}

/// Same values under a new shape with equal element count.
template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel(shape) != x.numel())
        throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
    std::vector<T> y(x.values().begin(), x.values().end());
    return make_result<T>(std::move(shape), std::move(y), {x}, [](Node<T>& self) {
        if (T* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < self.size(); ++i) g[i] += self.grad[i];
    });
}

/// Concatenation along `axis`; all other extents must agree.
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    Shape out_shape = parts[0].shape();
    if (axis < 0 || axis >= static_cast<int>(out_shape.size())) throw ShapeError("concat: bad axis");
    int total = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != out_shape.size()) throw ShapeError("concat: rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d)
            if (static_cast<int>(d) != axis && s[d] != out_shape[d])
                throw ShapeError("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(out_shape));
        total += s[static_cast<std::size_t>(axis)];
    }
    out_shape[static_cast<std::size_t>(axis)] = total;
    auto sp = detail::split_axis(out_shape, axis);
    std::vector<std::size_t> widths;  // n * inner per part
    for (const auto& p : parts) widths.push_back(static_cast<std::size_t>(p.dim(static_cast<std::size_t>(axis))) * sp.inner);
    std::size_t row = sp.n * sp.inner;
    std::vector<T> y(numel(out_shape));
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        auto v = parts[k].values();
        for (std::size_t o = 0; o < sp.outer; ++o)
            std::copy_n(v.data() + o * widths[k], widths[k], y.data() + o * row + off);
        off += widths[k];
    }
    return make_result<T>(out_shape, std::move(y), parts, [widths, sp, row](Node<T>& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            if (T* g = parent_grad(self, k))
                for (std::size_t o = 0; o < sp.outer; ++o)
                    for (std::size_t i = 0; i < widths[k]; ++i) g[o * widths[k] + i] += self.grad[o * row + off + i];
            off += widths[k];
        }
    });
}

/// Elements [begin, end) along `axis`.
template <class T>
Tensor<T> slice(const Tensor<T>& x, int axis, int begin, int end) {
    auto sp = detail::split_axis(x.shape(), axis);
    if (begin < 0 || end > static_cast<int>(sp.n) || begin >= end) throw ShapeError("slice: bad range");
    Shape s = x.shape();
    s[static_cast<std::size_t>(axis)] = end - begin;
    std::size_t w = static_cast<std::size_t>(end - begin) * sp.inner;
    std::size_t src_row = sp.n * sp.inner, off = static_cast<std::size_t>(begin) * sp.inner;
    std::vector<T> y(sp.outer * w);
    auto v = x.values();
    for (std::size_t o = 0; o < sp.outer; ++o) std::copy_n(v.data() + o * src_row + off, w, y.data() + o * w);
    return make_result<T>(s, std::move(y), {x}, [sp, w, src_row, off](Node<T>& self) {
        if (T* g = parent_grad(self, 0))
            for (std::size_t o = 0; o < sp.outer; ++o)
                for (std::size_t i = 0; i < w; ++i) g[o * src_row + off + i] += self.grad[o * w + i];
    });
}

/// Rows of a [N, C] tensor selected by index: out[m] = x[index[m]].
template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, std::vector<std::uint32_t> index) {
    if (x.rank() != 2) throw ShapeError("gather_rows: expects [N, C]");
    std::size_t n = static_cast<std::size_t>(x.dim(0)), c = static_cast<std::size_t>(x.dim(1));
    std::vector<T> y(index.size() * c);
    auto v = x.values();
    for (std::size_t m = 0; m < index.size(); ++m) {
        if (index[m] >= n) throw std::out_of_range("gather_rows: index " + std::to_string(index[m]) + " >= " + std::to_string(n));
        std::copy_n(v.data() + index[m] * c, c, y.data() + m * c);
    }
    int rows = static_cast<int>(index.size());
    return make_result<T>({rows, static_cast<int>(c)}, std::move(y), {x}, [index = std::move(index), c](Node<T>& self) {
        if (T* g = parent_grad(self, 0))
            for (std::size_t m = 0; m < index.size(); ++m)
                for (std::size_t j = 0; j < c; ++j) g[index[m] * c + j] += self.grad[m * c + j];
    });
}

/// [1, C] -> [M, C] by repetition.
template <class T>
Tensor<T> repeat_rows(const Tensor<T>& x, int m) {
    if (x.rank() != 2 || x.dim(0) != 1) throw ShapeError("repeat_rows: expects [1, C]");
    std::size_t c = static_cast<std::size_t>(x.dim(1));
    std::vector<T> y(static_cast<std::size_t>(m) * c);
    for (int r = 0; r < m; ++r) std::copy_n(x.values().data(), c, y.data() + static_cast<std::size_t>(r) * c);
    return make_result<T>({m, static_cast<int>(c)}, std::move(y), {x}, [c, m](Node<T>& self) {
        if (T* g = parent_grad(self, 0))
            for (int r = 0; r < m; ++r)
                for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[static_cast<std::size_t>(r) * c + j];
    });
}

/// [N, M] -> [M, N].
template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
    if (x.rank() != 2) throw ShapeError("transpose: expects a matrix, got " + shape_str(x.shape()));
    std::size_t n = static_cast<std::size_t>(x.dim(0)), m = static_cast<std::size_t>(x.dim(1));
    auto v = x.values();
    std::vector<T> y(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) y[j * n + i] = v[i * m + j];
    return make_result<T>({x.dim(1), x.dim(0)}, std::move(y), {x}, [n, m](Node<T>& self) {
        if (T* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[j * n + i];
    });
}

/// Numerically stable softmax along `axis` (max subtraction).
template <class T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    auto sp = detail::split_axis(x.shape(), axis);
    std::vector<T> y(x.numel());
    auto v = x.values();
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t in = 0; in < sp.inner; ++in) {
            std::size_t base = o * sp.n * sp.inner + in;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t k = 0; k < sp.n; ++k) mx = std::max(mx, v[base + k * sp.inner]);
            T sum = 0;
            for (std::size_t k = 0; k < sp.n; ++k) {
                T e = std::exp(v[base + k * sp.inner] - mx);
                y[base + k * sp.inner] = e;
                sum += e;
            }
            for (std::size_t k = 0; k < sp.n; ++k) y[base + k * sp.inner] /= sum;
        }
    return make_result<T>(x.shape(), std::move(y), {x}, [sp](Node<T>& self) {
        T* g = parent_grad(self, 0);
        if (!g) return;
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t in = 0; in < sp.inner; ++in) {
                std::size_t base = o * sp.n * sp.inner + in;
                T dot = 0;
                for (std::size_t k = 0; k < sp.n; ++k) dot += self.grad[base + k * sp.inner] * self.value[base + k * sp.inner];
                for (std::size_t k = 0; k < sp.n; ++k) {
                    std::size_t i = base + k * sp.inner;
                    g[i] += self.value[i] * (self.grad[i] - dot);
                }
            }
    });
}

/// Mean squared error against a constant target.
template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, std::span<const T> target) {
    if (pred.numel() != target.size()) throw ShapeError("mse_loss: size mismatch");
    double acc = 0;
    auto p = pred.values();
    for (std::size_t i = 0; i < target.size(); ++i) {
        double d = static_cast<double>(p[i]) - static_cast<double>(target[i]);
        acc += d * d;
    }
    T loss = static_cast<T>(acc / static_cast<double>(target.size()));
    std::vector<T> tgt(target.begin(), target.end());
    return make_result<T>({1}, {loss}, {pred}, [tgt = std::move(tgt)](Node<T>& self) {
        T* g = parent_grad(self, 0);
        if (!g) return;
        const T* p = parent_value(self, 0);
        T s = self.grad[0] * T(2) / static_cast<T>(tgt.size());
        for (std::size_t i = 0; i < tgt.size(); ++i) g[i] += s * (p[i] - tgt[i]);
    });
}

template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    return mse_loss(pred, target.values());
}

/// Sum of all elements.
template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    double acc = 0;
    for (T v : x.values()) acc += static_cast<double>(v);
    return make_result<T>({1}, {static_cast<T>(acc)}, {x}, [](Node<T>& self) {
        if (T* g = parent_grad(self, 0)) {
            std::size_t n = self.parents[0]->value.size();
            for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
        }
    });
}

/// <x, w> with a constant weight vector; used to build scalar probes.
template <class T>
Tensor<T> dot_const(const Tensor<T>& x, std::vector<T> w) {
    if (w.size() != x.numel()) throw ShapeError("dot_const: size mismatch");
    double acc = 0;
    auto v = x.values();
    for (std::size_t i = 0; i < w.size(); ++i) acc += static_cast<double>(v[i]) * static_cast<double>(w[i]);
    return make_result<T>({1}, {static_cast<T>(acc)}, {x}, [w = std::move(w)](Node<T>& self) {
        if (T* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < w.size(); ++i) g[i] += self.grad[0] * w[i];
    });
}

/// 2x2 stride-2 average pooling of [C, H, W] (H, W even).
template <class T>
Tensor<T> downsample2(const Tensor<T>& x) {
    if (x.rank() != 3 || x.dim(1) % 2 || x.dim(2) % 2) throw ShapeError("downsample2: expects [C, even H, even W]");
    int c = x.dim(0), h = x.dim(1), w = x.dim(2), ho = h / 2, wo = w / 2;
    std::vector<T> y(static_cast<std::size_t>(c) * ho * wo);
    auto v = x.values();
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < ho; ++i)
            for (int j = 0; j < wo; ++j) {
                std::size_t b = (static_cast<std::size_t>(ch) * h + 2 * i) * w + 2 * j;
                y[(static_cast<std::size_t>(ch) * ho + i) * wo + j] =
                    (v[b] + v[b + 1] + v[b + static_cast<std::size_t>(w)] + v[b + static_cast<std::size_t>(w) + 1]) * T(0.25);
            }
    return make_result<T>({c, ho, wo}, std::move(y), {x}, [c, h, w, ho, wo](Node<T>& self) {
        T* g = parent_grad(self, 0);
        if (!g) return;
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < ho; ++i)
                for (int j = 0; j < wo; ++j) {
                    T d = self.grad[(static_cast<std::size_t>(ch) * ho + i) * wo + j] * T(0.25);
                    std::size_t b = (static_cast<std::size_t>(ch) * h + 2 * i) * w + 2 * j;
                    g[b] += d;
                    g[b + 1] += d;
                    g[b + static_cast<std::size_t>(w)] += d;
                    g[b + static_cast<std::size_t>(w) + 1] += d;
                }
    });
}

/// Nearest-neighbour 2x upsampling of [C, H, W].
template <class T>
Tensor<T> upsample2(const Tensor<T>& x) {
    if (x.rank() != 3) throw ShapeError("upsample2: expects [C, H, W]");
    int c = x.dim(0), h = x.dim(1), w = x.dim(2), ho = 2 * h, wo = 2 * w;
    std::vector<T> y(static_cast<std::size_t>(c) * ho * wo);
    auto v = x.values();
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < ho; ++i)
            for (int j = 0; j < wo; ++j)
                y[(static_cast<std::size_t>(ch) * ho + i) * wo + j] = v[(static_cast<std::size_t>(ch) * h + i / 2) * w + j / 2];
    return make_result<T>({c, ho, wo}, std::move(y), {x}, [c, h, w, ho, wo](Node<T>& self) {
        T* g = parent_grad(self, 0);
        if (!g) return;
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < ho; ++i)
                for (int j = 0; j < wo; ++j)
                    g[(static_cast<std::size_t>(ch) * h + i / 2) * w + j / 2] +=
                        self.grad[(static_cast<std::size_t>(ch) * ho + i) * wo + j];
    });
}

namespace detail {
/// Mirror index without edge repetition, periodic for offsets beyond one reflection.
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}
}  // namespace detail

/// Extends [C, H, W] to [C, hp, wp] by reflection past the bottom/right edges.
template <class T>
Tensor<T> pad_reflect(const Tensor<T>& x, int hp, int wp) {
    if (x.rank() != 3 || hp < x.dim(1) || wp < x.dim(2)) throw ShapeError("pad_reflect: bad target size");
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    std::vector<std::uint32_t> src(static_cast<std::size_t>(hp) * wp);
    for (int i = 0; i < hp; ++i)
        for (int j = 0; j < wp; ++j)
            src[static_cast<std::size_t>(i) * wp + j] =
                static_cast<std::uint32_t>(detail::reflect_index(i, h) * w + detail::reflect_index(j, w));
    std::vector<T> y(static_cast<std::size_t>(c) * hp * wp);
    auto v = x.values();
    std::size_t plane = static_cast<std::size_t>(h) * w, pplane = static_cast<std::size_t>(hp) * wp;
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < pplane; ++p) y[ch * pplane + p] = v[ch * plane + src[p]];
    return make_result<T>({c, hp, wp}, std::move(y), {x}, [src = std::move(src), c, plane, pplane](Node<T>& self) {
        T* g = parent_grad(self, 0);
        if (!g) return;
        for (int ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < pplane; ++p) g[ch * plane + src[p]] += self.grad[ch * pplane + p];
    });
}

/// Top-left [C, h, w] window of [C, H, W].
template <class T>
Tensor<T> crop(const Tensor<T>& x, int h, int w) {
    if (x.rank() != 3 || h > x.dim(1) || w > x.dim(2)) throw ShapeError("crop: bad size");
    int c = x.dim(0), hs = x.dim(1), ws = x.dim(2);
    std::vector<T> y(static_cast<std::size_t>(c) * h * w);
    auto v = x.values();
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h; ++i)
            std::copy_n(v.data() + (static_cast<std::size_t>(ch) * hs + i) * ws, w,
                        y.data() + (static_cast<std::size_t>(ch) * h + i) * w);
    return make_result<T>({c, h, w}, std::move(y), {x}, [c, h, w, hs, ws](Node<T>& self) {
        T* g = parent_grad(self, 0);
        if (!g) return;
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    g[(static_cast<std::size_t>(ch) * hs + i) * ws + j] += self.grad[(static_cast<std::size_t>(ch) * h + i) * w + j];
    });
}

/// Front-to-back compositing: out[p] = sum_i a[p,i] prod_{j<i} (1 - a[p,j]) v[p,i,:].
/// alpha is [P, K], values [P, K, C]; returns [P, C].
template <class T>
Tensor<T> alpha_composite(const Tensor<T>& alpha, const Tensor<T>& values) {
    if (alpha.rank() != 2 || values.rank() != 3 || values.dim(0) != alpha.dim(0) || values.dim(1) != alpha.dim(1))
        throw ShapeError("alpha_composite: expects alpha [P,K], values [P,K,C]");
    std::size_t P = static_cast<std::size_t>(alpha.dim(0)), K = static_cast<std::size_t>(alpha.dim(1)),
                C = static_cast<std::size_t>(values.dim(2));
    std::vector<T> y(P * C, T(0));
    auto a = alpha.values();
    auto v = values.values();
    for (std::size_t p = 0; p < P; ++p) {
        T trans = 1;
        for (std::size_t i = 0; i < K; ++i) {
            T w = a[p * K + i] * trans;
            for (std::size_t c = 0; c < C; ++c) y[p * C + c] += w * v[(p * K + i) * C + c];
            trans *= T(1) - a[p * K + i];
        }
    }
    return make_result<T>({static_cast<int>(P), static_cast<int>(C)}, std::move(y), {alpha, values},
                          [P, K, C](Node<T>& self) {
                              const T* a = parent_value(self, 0);
                              const T* v = parent_value(self, 1);
                              T* ga = parent_grad(self, 0);
                              T* gv = parent_grad(self, 1);
                              std::vector<T> trans(K), dot(K);
                              for (std::size_t p = 0; p < P; ++p) {
                                  const T* gy = self.grad.data() + p * C;
                                  T t = 1;
                                  for (std::size_t i = 0; i < K; ++i) {
                                      trans[i] = t;
                                      T d = 0;
                                      for (std::size_t c = 0; c < C; ++c) d += gy[c] * v[(p * K + i) * C + c];
                                      dot[i] = d;
                                      if (gv) {
                                          T w = a[p * K + i] * t;
                                          for (std::size_t c = 0; c < C; ++c) gv[(p * K + i) * C + c] += w * gy[c];
                                      }
                                      t *= T(1) - a[p * K + i];
                                  }
                                  if (!ga) continue;
                                  // d out / d a_i = T_i v_i - sum_{k>i} a_k T_k / (1 - a_i) v_k, using a suffix
                                  // sum that avoids dividing by (1 - a_i)
                                  T suffix = 0;  // sum_{k>i} a_k prod_{i<j<k}(1-a_j) <gy, v_k>
                                  for (std::size_t ii = K; ii-- > 0;) {
                                      ga[p * K + ii] += trans[ii] * (dot[ii] - suffix);
                                      suffix = a[p * K + ii] * dot[ii] + (T(1) - a[p * K + ii]) * suffix;
                                  }
                              }
                          });
}

}  // namespace kbuf::ad
