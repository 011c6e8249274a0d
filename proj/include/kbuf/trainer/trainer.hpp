#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbuf/autodiff/adam.hpp"
#include "kbuf/scene/synthetic.hpp"
#include "kbuf/trainer/checkpoint.hpp"
#include "kbuf/trainer/fragments.hpp"
#include "kbuf/trainer/metrics.hpp"
#include "kbuf/trainer/model.hpp"

namespace kbuf::train {

class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "step,split,view,psnr,ssim\n" << std::setprecision(17);
    for (const auto& r : rows) out << r.step << ',' << r.split << ',' << r.view << ',' << r.psnr << ',' << r.ssim << '\n';
}

inline double mean_psnr(const std::vector<MetricRow>& rows) {
    if (rows.empty()) return 0;
    double s = 0;
    for (const auto& r : rows) s += r.psnr;
    return s / static_cast<double>(rows.size());
}

inline double mean_ssim(const std::vector<MetricRow>& rows) {
    if (rows.empty()) return 0;
    double s = 0;
    for (const auto& r : rows) s += r.ssim;
    return s / static_cast<double>(rows.size());
}

/// One optimization run over a fixed scene: fragments and queries are built
/// once per view, then each step renders one training view, takes the MSE
/// against its ground truth and steps the four Adam groups.
template <class T>
class Trainer {
public:
    using StepCallback = std::function<void(int step, double loss)>;

    /// `scene` must outlive the trainer.
    Trainer(const TrainConfig& cfg, const SyntheticScene& scene, FragmentCache* cache = nullptr)
        : cfg_(cfg), scene_(&scene), model_(cfg, box(scene).first, box(scene).second), order_rng_(cfg.seed ^ 0x9e3779b97f4a7c15ull) {
        cfg_.validate();
        if (scene.views.size() == 0) throw std::invalid_argument("trainer: scene has no views");
        double tau = cfg_.tau > 0 ? cfg_.tau : scene.tau;
        if (!(tau > 0)) throw std::invalid_argument("trainer: no splat radius in config or scene");
        FragmentCache local;
        FragmentCache& fc = cache ? *cache : local;
        const auto& frags = fc.get(scene.cloud, scene.views, tau, cfg_.k);
        auto bounds = bounding_sphere(scene.cloud);
        for (std::size_t i = 0; i < scene.views.size(); ++i) {
            inputs_.push_back(make_view_inputs(frags[i], scene.views[i].camera, cfg_, cfg_.seed + i, bounds));
            targets_.push_back(image_to_chw<T>(scene.views[i].image));
        }
        train_views_ = scene.views.indices(Split::train);
        if (train_views_.empty()) throw std::invalid_argument("trainer: scene has no training views");
        groups_ = model_.groups();
    }

    const TrainConfig& config() const { return cfg_; }
    const Model<T>& model() const { return model_; }
    int step() const { return step_; }
    const std::vector<MetricRow>& history() const { return history_; }
    const ViewInputs& inputs(std::size_t view) const { return inputs_.at(view); }

    /// Rate of group g at step n: lr0 * decay^n.
    double learning_rate(Group g, int n) const {
        const double lr0[4] = {cfg_.lr_field, cfg_.lr_rect, cfg_.lr_kfn, cfg_.lr_unet};
        return lr0[g] * std::pow(cfg_.decay, n);
    }

    /// One optimization step on `view`; returns the loss before the update.
    double train_step(std::size_t view) {
        const auto& tgt = targets_.at(view);
        auto img = model_.forward(inputs_.at(view));
        auto loss = ad::mse_loss(img, std::span<const T>(tgt));
        double l = static_cast<double>(loss.item());
        loss.backward();
        if (!std::isfinite(l)) {
            std::ostringstream msg;
            msg << "non-finite loss " << l << " at step " << step_ << ", view " << view << ", max |grad| " << max_abs_grad();
            throw NonFiniteLoss(msg.str());
        }
        if ((step_ + 1) % cfg_.log_every == 0) {
            auto pred = chw_to_image<T>(img.values(), inputs_[view].width, inputs_[view].height);
            const auto& gt = scene_->views[view].image;
            history_.push_back({step_ + 1, "train", static_cast<int>(view), psnr(pred, gt), ssim(pred, gt)});
        }
        for (std::size_t g = 0; g < 4; ++g) {
            if (groups_[g].empty()) continue;
            ad::adam_step(groups_[g], adam_[g], learning_rate(static_cast<Group>(g), step_));
            for (auto& p : groups_[g]) p.zero_grad();
        }
        ++step_;
        return l;
    }

    /// Next training view of the seeded per-epoch permutation.
    std::size_t next_view() {
        if (cursor_ == order_.size()) {
            order_ = train_views_;
            std::shuffle(order_.begin(), order_.end(), order_rng_);
            cursor_ = 0;
        }
        return order_[cursor_++];
    }

    /// Runs `steps` steps (the config's count by default).
    void train(int steps = -1, const StepCallback& cb = {}) {
        if (steps < 0) steps = cfg_.steps;
        for (int s = 0; s < steps; ++s) {
            double l = train_step(next_view());
            if (cb) cb(step_, l);
        }
    }

    Image render(std::size_t view) const {
        ad::NoGradGuard guard;
        const auto& v = inputs_.at(view);
        auto img = model_.forward(v);
        return chw_to_image<T>(img.values(), v.width, v.height);
    }

    std::vector<MetricRow> evaluate(Split split) const {
        std::vector<MetricRow> rows;
        for (std::size_t i : scene_->views.indices(split)) {
            auto pred = render(i);
            const auto& gt = scene_->views[i].image;
            rows.push_back({step_, to_string(split), static_cast<int>(i), psnr(pred, gt), ssim(pred, gt)});
        }
        return rows;
    }

    /// Mean F_Theta query count over all views.
    double queries_per_view() const {
        double s = 0;
        for (const auto& v : inputs_) s += static_cast<double>(v.queries.query_count());
        return s / static_cast<double>(inputs_.size());
    }

    CheckpointHeader header() const {
        CheckpointHeader h;
        h.config = cfg_;
        h.step = step_;
        h.history = history_;
        h.extra = {{"param_count", model_.param_count()},
                   {"loss", "mse"},
                   {"augmentation", "none"},
                   {"precision", sizeof(T) == 4 ? "f32" : "f64"}};
        return h;
    }

    void save(const std::filesystem::path& path) const { save_checkpoint<T>(path, header(), model_.named_params()); }

    /// Replaces the parameters with a checkpoint's. Shape-relevant config
    /// fields must agree; the error lists every differing field.
    void load(const Checkpoint<T>& ck) {
        auto diffs = shape_mismatches(cfg_, ck.header.config);
        if (!diffs.empty()) {
            std::string msg = "checkpoint does not match config:";
            for (const auto& d : diffs) msg += "\n  " + d;
            throw std::invalid_argument(msg);
        }
        model_.load_params(ck.tensors);
        step_ = ck.header.step;
        history_ = ck.header.history;
    }

private:
    static std::pair<Vec3, Vec3> box(const SyntheticScene& scene) {
        std::vector<Vec3> origins;
        for (const auto& v : scene.views) origins.push_back(v.camera.origin());
        if (origins.empty()) return {Vec3::Constant(-1), Vec3::Constant(1)};
        return enc::origin_box(origins);
    }

    double max_abs_grad() const {
        double m = 0;
        for (const auto& g : groups_)
            for (const auto& p : g)
                if (p.has_grad())
                    for (T v : p.grad()) {
                        double a = std::abs(static_cast<double>(v));
                        if (!std::isfinite(a)) return a;
                        m = std::max(m, a);
                    }
        return m;
    }

    TrainConfig cfg_;
    const SyntheticScene* scene_;
    Model<T> model_;
    std::vector<ViewInputs> inputs_;
    std::vector<std::vector<T>> targets_;
    std::vector<std::size_t> train_views_;
    std::array<std::vector<ad::Tensor<T>>, 4> groups_;
    std::array<ad::AdamState<T>, 4> adam_;
    std::mt19937_64 order_rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    int step_ = 0;
    std::vector<MetricRow> history_;
};

}  // namespace kbuf::train
