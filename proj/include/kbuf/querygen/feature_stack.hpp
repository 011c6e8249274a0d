#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbuf/autodiff/tensor.hpp"
#include "kbuf/querygen/queries.hpp"

namespace kbuf::query {

/// K pixel-wise feature maps. Stored channel-planar as [K, C, H, W] so
/// layers feed convolutions directly; mask is [K, H, W].
template <class T>
struct FeatureStack {
    int k = 0, c = 0, h = 0, w = 0;
    ad::Tensor<T> features;
    std::vector<std::uint8_t> mask;

    T at(int layer, int y, int x, int ch) const {
        return features[((static_cast<std::size_t>(layer) * c + ch) * h + y) * w + x];
    }
    bool occupied(int layer, int y, int x) const { return mask[(static_cast<std::size_t>(layer) * h + y) * w + x] != 0; }
};

/// Scatters per-slot features [M, C] into their (layer, pixel) cells.
/// Untouched cells stay zero with a false mask; gradients flow back to
/// the originating rows.
template <class T>
FeatureStack<T> reorganize(const QuerySet& q, const ad::Tensor<T>& features, int channels) {
    if (features.rank() != 2 || features.dim(0) != static_cast<int>(q.slot_count()) || features.dim(1) != channels)
        throw ad::ShapeError("reorganize: expected [" + std::to_string(q.slot_count()) + "," + std::to_string(channels) +
                             "] slot features, got " + ad::shape_str(features.shape()));
    FeatureStack<T> st;
    st.k = q.k;
    st.c = channels;
    st.h = q.height;
    st.w = q.width;
    std::size_t hw = static_cast<std::size_t>(q.height) * q.width;
    std::size_t C = static_cast<std::size_t>(channels);
    st.mask.assign(static_cast<std::size_t>(q.k) * hw, 0);
    std::vector<std::size_t> base(q.slot_count());  // offset of (layer, channel 0, pixel)
    for (std::size_t s = 0; s < q.slot_count(); ++s) {
        const Slot& sl = q.slots[s];
        if (sl.layer < 0 || sl.layer >= q.k || sl.pixel >= hw) throw std::out_of_range("reorganize: slot outside the stack");
        auto& m = st.mask[static_cast<std::size_t>(sl.layer) * hw + sl.pixel];
        if (m) throw std::invalid_argument("reorganize: two slots target layer " + std::to_string(sl.layer) + " pixel " +
                                           std::to_string(sl.pixel));
        m = 1;
        base[s] = static_cast<std::size_t>(sl.layer) * C * hw + sl.pixel;
    }
    std::vector<T> out(static_cast<std::size_t>(q.k) * C * hw, T(0));
    auto f = features.values();
    for (std::size_t s = 0; s < base.size(); ++s)
        for (std::size_t ch = 0; ch < C; ++ch) out[base[s] + ch * hw] = f[s * C + ch];
    st.features = ad::make_result<T>({q.k, channels, q.height, q.width}, std::move(out), {features},
                                     [base = std::move(base), C, hw](ad::Node<T>& self) {
                                         T* g = ad::parent_grad(self, 0);
                                         if (!g) return;
                                         for (std::size_t s = 0; s < base.size(); ++s)
                                             for (std::size_t ch = 0; ch < C; ++ch) g[s * C + ch] += self.grad[base[s] + ch * hw];
                                     });
    return st;
}

}  // namespace kbuf::query
