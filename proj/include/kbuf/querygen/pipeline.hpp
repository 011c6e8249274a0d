#pragma once

#include "kbuf/querygen/feature_stack.hpp"
#include "kbuf/querygen/queries.hpp"
#include "kbuf/radiance/field.hpp"
#include "kbuf/radiance/rectifier.hpp"

namespace kbuf::query {

/// F_Theta on every query, shared across its slots, plus T_Psi once per
/// occupied pixel when a rectifier is given, then scattered to the stack.
template <class T>
FeatureStack<T> build_feature_stack(const QuerySet& q, const radiance::RadianceMLP<T>& field,
                                    const radiance::Rectifier<T>* rect) {
    auto feats = radiance::radiance_features<T>(q.x, q.d, field);
    auto slot_queries = q.slot_queries();
    auto slot_dirs = q.slot_dirs();
    auto per_slot = radiance::rectified_features<T>(feats, q.origin, q.pixel_dirs, slot_queries, slot_dirs, rect);
    return reorganize(q, per_slot, field.channels());
}

}  // namespace kbuf::query
