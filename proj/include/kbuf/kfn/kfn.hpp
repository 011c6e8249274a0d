#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "kbuf/autodiff/nn.hpp"
#include "kbuf/querygen/feature_stack.hpp"

namespace kbuf::kfn {

struct KfnConfig {
    int k = 8;
    int c = 8;
    int hidden = 64;
    /// One mask value per layer and channel instead of per layer.
    bool per_channel = false;
};

/// Two 3x3 convolutions with ReLU after each, then softmax over the K layers.
template <class T>
struct Kfn {
    KfnConfig cfg;
    ad::ConvLayer<T> conv1, conv2;

    Kfn() = default;
    template <class Rng>
    Kfn(const KfnConfig& c, Rng& rng)
        : cfg(c), conv1(c.k * c.c, c.hidden, 3, rng), conv2(c.hidden, c.per_channel ? c.k * c.c : c.k, 3, rng) {
        if (c.k < 1 || c.c < 1 || c.hidden < 1) throw std::invalid_argument("kfn: K, C and hidden must be >= 1");
    }

    void collect(ad::ParamList<T>& out, const std::string& prefix) const {
        conv1.collect(out, prefix + ".conv1");
        conv2.collect(out, prefix + ".conv2");
    }

    std::size_t param_count() const {
        ad::ParamList<T> p;
        collect(p, "");
        return ad::count_params(p);
    }
};

/// Per-pixel mask over layers: [K, H, W], or [K, C, H, W] in per-channel mode.
template <class T>
ad::Tensor<T> kfn_mask(const query::FeatureStack<T>& stack, const Kfn<T>& net) {
    if (stack.k != net.cfg.k || stack.c != net.cfg.c)
        throw std::invalid_argument("kfn_mask: stack has K=" + std::to_string(stack.k) + " C=" + std::to_string(stack.c) +
                                    ", network expects K=" + std::to_string(net.cfg.k) + " C=" + std::to_string(net.cfg.c));
    auto x = ad::reshape(stack.features, {stack.k * stack.c, stack.h, stack.w});
    auto logits = ad::relu(net.conv2(ad::relu(net.conv1(x))));
    if (net.cfg.per_channel) return ad::softmax(ad::reshape(logits, {stack.k, stack.c, stack.h, stack.w}), 0);
    return ad::softmax(logits, 0);
}

/// fused[c, y, x] = sum_k mask[k, (c,) y, x] * stack[k, c, y, x]; returns [C, H, W].
template <class T>
ad::Tensor<T> fuse(const ad::Tensor<T>& stack, const ad::Tensor<T>& mask) {
    if (stack.rank() != 4) throw ad::ShapeError("fuse: stack must be [K, C, H, W]");
    int K = stack.dim(0), C = stack.dim(1), H = stack.dim(2), W = stack.dim(3);
    bool per_channel = mask.rank() == 4;
    ad::Shape want = per_channel ? ad::Shape{K, C, H, W} : ad::Shape{K, H, W};
    if (mask.shape() != want)
        throw ad::ShapeError("fuse: mask " + ad::shape_str(mask.shape()) + " does not match stack " + ad::shape_str(stack.shape()));
    std::size_t hw = static_cast<std::size_t>(H) * W;
    std::size_t cs = per_channel ? hw : 0;  // mask stride per channel
    auto sv = stack.values();
    auto mv = mask.values();
    std::vector<T> y(static_cast<std::size_t>(C) * hw, T(0));
    auto mask_at = [=](std::size_t k, std::size_t c) { return (per_channel ? k * C * hw : k * hw) + c * cs; };
    for (int k = 0; k < K; ++k)
        for (int c = 0; c < C; ++c) {
            const T* s = sv.data() + (static_cast<std::size_t>(k) * C + c) * hw;
            const T* m = mv.data() + mask_at(static_cast<std::size_t>(k), static_cast<std::size_t>(c));
            T* out = y.data() + static_cast<std::size_t>(c) * hw;
            for (std::size_t i = 0; i < hw; ++i) out[i] += m[i] * s[i];
        }
    return ad::make_result<T>({C, H, W}, std::move(y), {stack, mask}, [K, C, hw, mask_at](ad::Node<T>& self) {
        const T* sv = ad::parent_value(self, 0);
        const T* mv = ad::parent_value(self, 1);
        T* gs = ad::parent_grad(self, 0);
        T* gm = ad::parent_grad(self, 1);
        for (int k = 0; k < K; ++k)
            for (int c = 0; c < C; ++c) {
                std::size_t so = (static_cast<std::size_t>(k) * C + c) * hw;
                std::size_t mo = mask_at(static_cast<std::size_t>(k), static_cast<std::size_t>(c));
                const T* g = self.grad.data() + static_cast<std::size_t>(c) * hw;
                if (gs)
                    for (std::size_t i = 0; i < hw; ++i) gs[so + i] += g[i] * mv[mo + i];
                if (gm)
                    for (std::size_t i = 0; i < hw; ++i) gm[mo + i] += g[i] * sv[so + i];
            }
    });
}

template <class T>
ad::Tensor<T> fuse(const query::FeatureStack<T>& stack, const ad::Tensor<T>& mask) {
    return fuse(stack.features, mask);
}

}  // namespace kbuf::kfn
