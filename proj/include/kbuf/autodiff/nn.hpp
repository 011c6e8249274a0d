#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "kbuf/autodiff/kernels.hpp"
#include "kbuf/autodiff/ops.hpp"
#include "kbuf/autodiff/tensor.hpp"

namespace kbuf::ad {

template <class T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
};

template <class T>
using ParamList = std::vector<NamedParam<T>>;

template <class T>
std::size_t count_params(const ParamList<T>& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.tensor.numel();
    return n;
}

/// Affine map over the last axis: x [*, in], weight [in, out], bias [out].
template <class T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (x.rank() < 1 || weight.rank() != 2 || bias.rank() != 1)
        throw ShapeError("dense: expects x [*, in], weight [in, out], bias [out]");
    std::size_t in = static_cast<std::size_t>(weight.dim(0)), out = static_cast<std::size_t>(weight.dim(1));
    if (static_cast<std::size_t>(x.shape().back()) != in || static_cast<std::size_t>(bias.dim(0)) != out)
        throw ShapeError("dense: " + shape_str(x.shape()) + " x " + shape_str(weight.shape()) + " + " +
                         shape_str(bias.shape()));
    std::size_t n = x.numel() / in;
    Shape s = x.shape();
    s.back() = static_cast<int>(out);
    std::vector<T> y(n * out);
    kernels::dense_forward(x.values().data(), weight.values().data(), bias.values().data(), y.data(), n, in, out,
                           worker_count());
    return make_result<T>(std::move(s), std::move(y), {x, weight, bias}, [n, in, out](Node<T>& self) {
        using namespace kernels;
        CMapRow<T> gy(self.grad.data(), n, out);
        CMapRow<T> xm(parent_value(self, 0), n, in);
        CMapRow<T> wm(parent_value(self, 1), in, out);
        if (T* g = parent_grad(self, 0)) MapRow<T>(g, n, in).noalias() += gy * wm.transpose();
        if (T* g = parent_grad(self, 1)) MapRow<T>(g, in, out).noalias() += xm.transpose() * gy;
        // fixed summation order: Eigen reductions may peel by address alignment
        if (T* g = parent_grad(self, 2))
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < out; ++j) g[j] += self.grad[r * out + j];
    });
}

/// Cross-correlation with zero padding keeping H x W.
/// x [cin, H, W], kernels [cout, cin, kh, kw] with odd kh, kw, bias [cout].
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
    if (x.rank() != 3 || kernel.rank() != 4 || bias.rank() != 1)
        throw ShapeError("conv2d: expects x [C,H,W], kernels [Co,Ci,kh,kw], bias [Co]");
    int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    int cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kernel.dim(1) != cin || bias.dim(0) != cout)
        throw ShapeError("conv2d: " + shape_str(x.shape()) + " with kernels " + shape_str(kernel.shape()) + " bias " +
                         shape_str(bias.shape()));
    if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel extent must be odd");
    std::size_t hw = static_cast<std::size_t>(h) * w;
    std::size_t kk = static_cast<std::size_t>(cin) * kh * kw;
    auto cols = std::make_shared<std::vector<T>>(kk * hw);
    kernels::im2col(x.values().data(), cin, h, w, kh, kw, cols->data());
    std::vector<T> y(static_cast<std::size_t>(cout) * hw);
    {
        using namespace kernels;
        MapRow<T> ym(y.data(), cout, hw);
        ym.noalias() = CMapRow<T>(kernel.values().data(), cout, kk) * CMapRow<T>(cols->data(), kk, hw);
        const T* b = bias.values().data();
        for (int c = 0; c < cout; ++c) ym.row(c).array() += b[c];
    }
    return make_result<T>({cout, h, w}, std::move(y), {x, kernel, bias},
                          [cols, cin, h, w, cout, kh, kw, hw, kk](Node<T>& self) {
                              using namespace kernels;
                              CMapRow<T> gy(self.grad.data(), cout, hw);
                              if (T* g = parent_grad(self, 1))
                                  MapRow<T>(g, cout, kk).noalias() += gy * CMapRow<T>(cols->data(), kk, hw).transpose();
                              if (T* g = parent_grad(self, 2))
                                  for (int c = 0; c < cout; ++c) {
                                      T acc = 0;
                                      for (std::size_t i = 0; i < hw; ++i) acc += self.grad[static_cast<std::size_t>(c) * hw + i];
                                      g[c] += acc;
                                  }
                              if (T* g = parent_grad(self, 0)) {
                                  RowMat<T> gcols = CMapRow<T>(parent_value(self, 1), cout, kk).transpose() * gy;
                                  col2im(gcols.data(), cin, h, w, kh, kw, g);
                              }
                          });
}

/// Per-channel standardization over H x W followed by an affine map.
template <class T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5)) {
    if (x.rank() != 3) throw ShapeError("instance_norm: expects [C, H, W]");
    int c = x.dim(0);
    std::size_t hw = static_cast<std::size_t>(x.dim(1)) * static_cast<std::size_t>(x.dim(2));
    if (hw < 2) throw ShapeError("instance_norm: spatial extent " + shape_str(x.shape()) + " is degenerate");
    if (gain.numel() != static_cast<std::size_t>(c) || bias.numel() != static_cast<std::size_t>(c))
        throw ShapeError("instance_norm: gain/bias must have C entries");
    std::vector<T> y(x.numel()), xhat(x.numel()), inv_std(static_cast<std::size_t>(c));
    auto v = x.values();
    auto gv = gain.values();
    auto bv = bias.values();
    for (int ch = 0; ch < c; ++ch) {
        const T* p = v.data() + ch * hw;
        double mean = 0;
        for (std::size_t i = 0; i < hw; ++i) mean += p[i];
        mean /= static_cast<double>(hw);
        double var = 0;
        for (std::size_t i = 0; i < hw; ++i) var += (p[i] - mean) * (p[i] - mean);
        var /= static_cast<double>(hw);
        T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        inv_std[static_cast<std::size_t>(ch)] = is;
        for (std::size_t i = 0; i < hw; ++i) {
            T xh = static_cast<T>(p[i] - mean) * is;
            xhat[ch * hw + i] = xh;
            y[ch * hw + i] = gv[static_cast<std::size_t>(ch)] * xh + bv[static_cast<std::size_t>(ch)];
        }
    }
    return make_result<T>(x.shape(), std::move(y), {x, gain, bias},
                          [xhat = std::move(xhat), inv_std = std::move(inv_std), c, hw](Node<T>& self) {
                              const T* gain = parent_value(self, 1);
                              T* gx = parent_grad(self, 0);
                              T* gg = parent_grad(self, 1);
                              T* gb = parent_grad(self, 2);
                              for (int ch = 0; ch < c; ++ch) {
                                  const T* gy = self.grad.data() + ch * hw;
                                  const T* xh = xhat.data() + ch * hw;
                                  T s1 = 0, s2 = 0;
                                  for (std::size_t i = 0; i < hw; ++i) {
                                      s1 += gy[i];
                                      s2 += gy[i] * xh[i];
                                  }
                                  if (gg) gg[ch] += s2;
                                  if (gb) gb[ch] += s1;
                                  if (!gx) continue;
                                  // with g = gain * gy: dx = inv_std (g - mean(g) - xhat mean(g xhat))
                                  T gm = gain[ch];
                                  T scale = gm * inv_std[static_cast<std::size_t>(ch)];
                                  T m1 = s1 / static_cast<T>(hw), m2 = s2 / static_cast<T>(hw);
                                  T* gxc = gx + ch * hw;
                                  for (std::size_t i = 0; i < hw; ++i) gxc[i] += scale * (gy[i] - m1 - xh[i] * m2);
                              }
                          });
}

template <class T>
struct DenseLayer {
    Tensor<T> weight;  // [in, out]
    Tensor<T> bias;    // [out]

    DenseLayer() = default;
    /// Glorot-uniform weights, zero bias.
    template <class Rng>
    DenseLayer(int in, int out, Rng& rng) {
        std::vector<T> w(static_cast<std::size_t>(in) * out);
        double bound = std::sqrt(6.0 / (in + out));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& v : w) v = static_cast<T>(u(rng));
        weight = Tensor<T>({in, out}, std::move(w), true);
        bias = Tensor<T>::zeros({out}, true);
    }

    int in() const { return weight.dim(0); }
    int out() const { return weight.dim(1); }
    Tensor<T> operator()(const Tensor<T>& x) const { return dense(x, weight, bias); }
    void collect(ParamList<T>& out, const std::string& prefix) const {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

template <class T>
struct ConvLayer {
    Tensor<T> kernel;  // [cout, cin, k, k]
    Tensor<T> bias;    // [cout]

    ConvLayer() = default;
    /// He-uniform kernels, zero bias.
    template <class Rng>
    ConvLayer(int cin, int cout, int k, Rng& rng) {
        std::vector<T> w(static_cast<std::size_t>(cout) * cin * k * k);
        double bound = std::sqrt(6.0 / (cin * k * k));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& v : w) v = static_cast<T>(u(rng));
        kernel = Tensor<T>({cout, cin, k, k}, std::move(w), true);
        bias = Tensor<T>::zeros({cout}, true);
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, kernel, bias); }
    void collect(ParamList<T>& out, const std::string& prefix) const {
        out.push_back({prefix + ".kernel", kernel});
        out.push_back({prefix + ".bias", bias});
    }
};

/// feature(x) * sigmoid(gate(x)) -> ReLU -> instance norm; both convs 3x3.
template <class T>
struct GatedBlock {
    ConvLayer<T> feature;
    ConvLayer<T> gate;
    Tensor<T> norm_gain;
    Tensor<T> norm_bias;

    GatedBlock() = default;
    template <class Rng>
    GatedBlock(int cin, int cout, Rng& rng) : feature(cin, cout, 3, rng), gate(cin, cout, 3, rng) {
        norm_gain = Tensor<T>::full({cout}, T(1), true);
        norm_bias = Tensor<T>::zeros({cout}, true);
    }

    int out_channels() const { return feature.kernel.dim(0); }

    Tensor<T> operator()(const Tensor<T>& x) const {
        Tensor<T> h = mul(feature(x), sigmoid(gate(x)));
        return instance_norm(relu(h), norm_gain, norm_bias);
    }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        feature.collect(out, prefix + ".feature");
        gate.collect(out, prefix + ".gate");
        out.push_back({prefix + ".norm.gain", norm_gain});
        out.push_back({prefix + ".norm.bias", norm_bias});
    }
};

}  // namespace kbuf::ad
