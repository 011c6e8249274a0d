#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <string>
#include <vector>

#include "kbuf/scene/image.hpp"
#include "kbuf/trainer/trainer.hpp"

namespace kbuf::train {

struct AblationRow {
    std::string label;
    int k = 0;
    double psnr = 0;  // mean over test views
    double ssim = 0;
    std::size_t params = 0;
    double queries_per_view = 0;
    double seconds = 0;
};

using AblationProgress = std::function<void(const std::string& label, int step, double loss)>;

/// Trains one configuration for cfg.steps and scores the test split.
inline AblationRow run_config(const std::string& label, const TrainConfig& cfg, const SyntheticScene& scene,
                              FragmentCache* cache = nullptr, const AblationProgress& progress = {}) {
    auto t0 = std::chrono::steady_clock::now();
    Trainer<float> tr(cfg, scene, cache);
    tr.train(cfg.steps, [&](int step, double loss) {
        if (progress) progress(label, step, loss);
    });
    auto rows = tr.evaluate(Split::test);
    AblationRow r;
    r.label = label;
    r.k = cfg.k;
    r.psnr = mean_psnr(rows);
    r.ssim = mean_ssim(rows);
    r.params = tr.model().param_count();
    r.queries_per_view = tr.queries_per_view();
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

/// One run per K with everything else fixed.
inline std::vector<AblationRow> ablate_k(const SyntheticScene& scene, const std::vector<int>& ks, const TrainConfig& base,
                                         const AblationProgress& progress = {}) {
    std::vector<AblationRow> out;
    FragmentCache cache;
    for (int k : ks) {
        TrainConfig c = base;
        c.k = k;
        out.push_back(run_config("K=" + std::to_string(k), c, scene, &cache, progress));
    }
    return out;
}

/// The four module rows: baseline (K=1, no KFN, no pruning, no T_Psi),
/// +KFN (unpruned K-buffer), +KFN+prune, +KFN+prune+rect. Rows after the
/// baseline use base.k.
inline std::vector<TrainConfig> module_configs(const TrainConfig& base) {
    TrainConfig b = base;
    b.k = 1;
    b.kfn = false;
    b.prune = false;
    b.rect = false;
    TrainConfig kfn = base;
    kfn.kfn = true;
    kfn.prune = false;
    kfn.rect = false;
    TrainConfig pruned = kfn;
    pruned.prune = true;
    TrainConfig full = pruned;
    full.rect = true;
    return {b, kfn, pruned, full};
}

inline const std::vector<std::string>& module_labels() {
    static const std::vector<std::string> labels{"baseline", "+KFN", "+KFN+prune", "+KFN+prune+rect"};
    return labels;
}

inline std::vector<AblationRow> ablate_modules(const SyntheticScene& scene, const TrainConfig& base,
                                               const AblationProgress& progress = {}) {
    std::vector<AblationRow> out;
    FragmentCache cache;
    auto cfgs = module_configs(base);
    for (std::size_t i = 0; i < cfgs.size(); ++i) out.push_back(run_config(module_labels()[i], cfgs[i], scene, &cache, progress));
    return out;
}

/// One run per d_m policy.
inline std::vector<AblationRow> ablate_dm(const SyntheticScene& scene, const TrainConfig& base,
                                          const AblationProgress& progress = {}) {
    std::vector<AblationRow> out;
    FragmentCache cache;
    for (auto p : {query::DmPolicy::minimum, query::DmPolicy::random, query::DmPolicy::average}) {
        TrainConfig c = base;
        c.dm_policy = p;
        c.prune = true;
        out.push_back(run_config(query::to_string(p), c, scene, &cache, progress));
    }
    return out;
}

inline void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "label,k,psnr,ssim,params,queries_per_view,seconds\n" << std::setprecision(17);
    for (const auto& r : rows)
        out << r.label << ',' << r.k << ',' << r.psnr << ',' << r.ssim << ',' << r.params << ',' << r.queries_per_view << ','
            << std::setprecision(6) << r.seconds << std::setprecision(17) << '\n';
}

/// PSNR bar chart: one bar per row on a white canvas, heights scaled from
/// 1 dB below the smallest value to the largest, with a baseline rule.
inline Image psnr_bar_plot(const std::vector<AblationRow>& rows, int bar_width = 40, int height = 200) {
    const int gap = bar_width / 2, margin = 10;
    int n = static_cast<int>(rows.size());
    int width = std::max(1, 2 * margin + n * bar_width + std::max(0, n - 1) * gap);
    Image img(width, height, 3, 1.0);
    if (rows.empty()) return img;
    double lo = rows[0].psnr, hi = rows[0].psnr;
    for (const auto& r : rows) {
        lo = std::min(lo, r.psnr);
        hi = std::max(hi, r.psnr);
    }
    lo -= 1.0;
    double span = std::max(hi - lo, 1e-9);
    static const double palette[4][3] = {{0.27, 0.51, 0.71}, {0.87, 0.52, 0.2}, {0.33, 0.66, 0.41}, {0.77, 0.31, 0.32}};
    int usable = height - 2 * margin;
    for (int i = 0; i < n; ++i) {
        int h = static_cast<int>(std::lround(usable * (rows[static_cast<std::size_t>(i)].psnr - lo) / span));
        int x0 = margin + i * (bar_width + gap);
        for (int y = height - margin - h; y < height - margin; ++y)
            for (int x = x0; x < x0 + bar_width; ++x)
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = palette[i % 4][c];
    }
    for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c) img.at(x, height - margin, c) = 0.0;
    return img;
}

}  // namespace kbuf::train
