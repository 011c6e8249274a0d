#pragma once

// Finite-difference check of the whole trainable pipeline on an 8x8 view:
// F_Theta, T_Psi and its hash tables, KFN and the U-Net under one MSE loss.

#include <random>
#include <span>
#include <vector>

#include "kbuf/autodiff/grad_check.hpp"
#include "kbuf/trainer/trainer.hpp"

namespace kbuf::test {

inline double pipeline_grad_error(bool naive = false) {
    static const SyntheticScene scene = make_synthetic_scene(SceneKind::textured_sphere, 400, 2, 8, 17);
    train::TrainConfig cfg;
    cfg.k = 2;
    cfg.c = 4;
    cfg.kfn_hidden = 4;
    cfg.unet_downsamples = 2;
    cfg.unet_widths = {16, 32, 64};
    cfg.unet_width_multiplier = 0.125;
    cfg.naive_baseline = naive;
    cfg.seed = 3;
    train::Trainer<double> tr(cfg, scene);
    auto target = train::image_to_chw<double>(scene.views[0].image);
    const auto& in = tr.inputs(0);
    auto fn = [&] { return ad::mse_loss(tr.model().forward(in), std::span<const double>(target)); };
    // zero biases on empty pixels sit exactly on activation kinks; nudge
    // every parameter so the check runs at a differentiable point
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> nudge(-0.02, 0.02);
    std::vector<ad::Tensor<double>> params;
    for (const auto& p : tr.model().named_params()) {
        params.push_back(p.tensor);
        for (auto& v : params.back().mutable_values()) v += nudge(rng);
    }
    ad::GradCheckOptions opt;
    opt.max_coords = 64;
    opt.projections = 8;
    return ad::grad_check(fn, params, opt).max_rel_error;
}

}  // namespace kbuf::test
