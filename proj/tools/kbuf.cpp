#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kbuf/raster/depth_image.hpp"
#include "kbuf/raster/kzb_io.hpp"
#include "kbuf/scene/scene_dir.hpp"
#include "kbuf/trainer/ablation.hpp"
#include "kbuf/trainer/trainer.hpp"
#include "kbuf/version.hpp"

namespace fs = std::filesystem;
using namespace kbuf;
using nlohmann::json;

namespace {

/// Raised when a run completed but produced non-finite numbers.
struct NonFiniteOutput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int exit_failure = 1;
constexpr int exit_non_finite = 3;

std::string view_name(const char* prefix, std::size_t i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%03zu%s", prefix, i, ext);
    return buf;
}

struct Manifest {
    json doc;
    std::vector<std::string> outputs;

    Manifest(const std::string& command, const std::vector<std::string>& argv) {
        doc["command"] = command;
        doc["argv"] = argv;
        doc["versions"] = {{"kbuf", kbuf::version}, {"eigen", eigen_version()}, {"compiler", __VERSION__}};
    }

    void write(const fs::path& out_dir) {
        doc["outputs"] = outputs;
        std::ofstream f(out_dir / "manifest.json");
        if (!f) throw std::runtime_error("cannot write " + (out_dir / "manifest.json").string());
        f << doc.dump(2) << '\n';
        if (!f) throw std::runtime_error("failed writing manifest");
    }
};

train::TrainConfig resolve_config(const std::string& path, int steps, long long seed) {
    train::TrainConfig cfg = path.empty() ? train::TrainConfig{} : train::load_config(path);
    if (steps >= 0) cfg.steps = steps;
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.validate();
    return cfg;
}

void check_finite(const std::vector<train::MetricRow>& rows) {
    for (const auto& r : rows)
        if (!std::isfinite(r.psnr) || !std::isfinite(r.ssim))
            throw NonFiniteOutput("non-finite metric for view " + std::to_string(r.view) + " at step " + std::to_string(r.step));
}

std::vector<std::size_t> views_of(const ViewSet& views, const std::string& split) {
    if (split == "train") return views.indices(Split::train);
    if (split == "test") return views.indices(Split::test);
    if (split == "all") {
        std::vector<std::size_t> all(views.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return all;
    }
    throw std::invalid_argument("unknown split '" + split + "' (train, test, all)");
}

/// Loads a checkpoint and its trainer; a given config must agree on shapes.
struct LoadedModel {
    train::Checkpoint<float> ck;
    std::unique_ptr<train::Trainer<float>> trainer;
};

LoadedModel load_model(const SyntheticScene& scene, const std::string& ckpt, const std::string& config_path) {
    LoadedModel m;
    m.ck = train::load_checkpoint<float>(ckpt);
    train::TrainConfig cfg = m.ck.header.config;
    if (!config_path.empty()) {
        auto given = train::load_config(config_path);
        auto diffs = train::shape_mismatches(given, cfg);
        if (!diffs.empty()) {
            std::string msg = "config does not match checkpoint:";
            for (const auto& d : diffs) msg += "\n  " + d;
            throw std::invalid_argument(msg);
        }
        cfg = given;
    }
    m.trainer = std::make_unique<train::Trainer<float>>(cfg, scene);
    m.trainer->load(m.ck);
    return m;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kbuf: K-buffer neural point rendering"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kbuf::version));
    std::vector<std::string> args(argv, argv + argc);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a procedural scene directory");
    std::string kind = "textured-sphere", out;
    int points = 5000, n_views = 8, res = 64;
    std::uint64_t seed = 0;
    double noise_sigma = 0, dropout = 0;
    synth->add_option("--kind", kind, "textured-sphere | checker-cube | two-plane")->capture_default_str();
    synth->add_option("--points", points)->capture_default_str()->check(CLI::Range(100, 10000000));
    synth->add_option("--views", n_views)->capture_default_str()->check(CLI::Range(2, 10000));
    synth->add_option("--res", res)->capture_default_str()->check(CLI::Range(1, 8192));
    synth->add_option("--seed", seed)->capture_default_str();
    synth->add_option("--noise-sigma", noise_sigma, "Gaussian position jitter applied after painting ground truth")
        ->capture_default_str();
    synth->add_option("--dropout", dropout, "fraction of points removed after painting ground truth")->capture_default_str();
    synth->add_option("--out", out)->required();

    // rasterize
    auto* rast = app.add_subcommand("rasterize", "dump one view's K-buffer and per-layer depth images");
    std::string scene_dir;
    int view = 0, k = 8;
    double tau = 0;
    rast->add_option("--scene", scene_dir)->required();
    rast->add_option("--view", view)->capture_default_str();
    rast->add_option("--k", k)->capture_default_str()->check(CLI::Range(1, 255));
    rast->add_option("--tau", tau, "splat radius; 0 uses the scene's")->capture_default_str();
    rast->add_option("--out", out)->required();

    // train
    auto* trn = app.add_subcommand("train", "optimize all modules on the training views");
    std::string config_path, ckpt;
    int steps = -1;
    long long seed_override = -1;
    trn->add_option("--scene", scene_dir)->required();
    trn->add_option("--config", config_path, "JSON config; defaults when omitted");
    trn->add_option("--steps", steps, "override the config's step count");
    trn->add_option("--seed", seed_override, "override the config's seed");
    trn->add_option("--out", out)->required();

    // render / eval
    auto* rnd = app.add_subcommand("render", "render views from a checkpoint");
    std::string split = "test";
    rnd->add_option("--scene", scene_dir)->required();
    rnd->add_option("--ckpt", ckpt)->required();
    rnd->add_option("--config", config_path);
    rnd->add_option("--split", split, "train | test | all")->capture_default_str();
    rnd->add_option("--out", out)->required();

    auto* evl = app.add_subcommand("eval", "score a checkpoint against ground truth");
    evl->add_option("--scene", scene_dir)->required();
    evl->add_option("--ckpt", ckpt)->required();
    evl->add_option("--config", config_path);
    evl->add_option("--split", split, "train | test | all")->capture_default_str();
    evl->add_option("--out", out)->required();

    // ablate
    auto* abl = app.add_subcommand("ablate", "run a K, module or d_m sweep");
    std::string sweep = "k";
    std::vector<int> ks{1, 2, 4, 8};
    abl->add_option("--scene", scene_dir)->required();
    abl->add_option("--config", config_path);
    abl->add_option("--steps", steps, "override the config's step count");
    abl->add_option("--seed", seed_override, "override the config's seed");
    abl->add_option("--sweep", sweep, "k | modules | dm")->capture_default_str()->check(CLI::IsMember({"k", "modules", "dm"}));
    abl->add_option("--ks", ks, "K values for the k sweep")->delimiter(',')->capture_default_str();
    abl->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    auto* cmd = app.get_subcommands().front();
    Manifest manifest(cmd->get_name(), args);
    try {
        fs::path out_dir(out);
        fs::create_directories(out_dir);

        if (cmd == synth) {
            auto scene = make_synthetic_scene(parse_scene_kind(kind), points, n_views, res, seed);
            if (noise_sigma > 0 || dropout > 0) scene.cloud = add_point_noise(scene.cloud, noise_sigma, dropout, seed + 1);
            save_scene_dir(out_dir, scene);
            manifest.doc["scene"] = {{"kind", kind}, {"points", points}, {"views", n_views}, {"res", res}, {"seed", seed},
                                     {"noise_sigma", noise_sigma}, {"dropout", dropout}, {"tau", scene.tau},
                                     {"points_written", scene.cloud.size()}};
            manifest.outputs = {"cloud.ply", "cameras.json"};
            for (const auto& v : scene.views) manifest.outputs.push_back(v.image_path);
        } else if (cmd == rast) {
            auto scene = load_scene_dir(scene_dir);
            if (view < 0 || static_cast<std::size_t>(view) >= scene.views.size())
                throw std::out_of_range("view " + std::to_string(view) + " out of range (scene has " +
                                        std::to_string(scene.views.size()) + " views)");
            double t = tau > 0 ? tau : scene.tau;
            auto r = rasterize_k(scene.cloud, scene.views[static_cast<std::size_t>(view)].camera, t, k);
            save_kzb(out_dir / "buffer.kzb", r.buffer);
            manifest.outputs.push_back("buffer.kzb");
            for (int l = 0; l < k; ++l) {
                auto name = view_name("depth_layer_", static_cast<std::size_t>(l), ".png");
                write_png(out_dir / name, depth_layer_image(r.buffer, l));
                manifest.outputs.push_back(name);
            }
            manifest.doc["raster"] = {{"view", view}, {"k", k}, {"tau", t}, {"fragments", r.buffer.total_fragments()}};
        } else if (cmd == trn) {
            auto scene = load_scene_dir(scene_dir);
            auto cfg = resolve_config(config_path, steps, seed_override);
            manifest.doc["config"] = cfg;
            train::FragmentCache cache(out_dir / "fragments");
            train::Trainer<float> tr(cfg, scene, &cache);
            tr.train(cfg.steps, [&](int s, double loss) {
                if (s % 100 == 0 || s == cfg.steps) std::cerr << "step " << s << " loss " << loss << '\n';
            });
            check_finite(tr.history());
            auto test_rows = tr.evaluate(Split::test);
            check_finite(test_rows);
            tr.save(out_dir / "model.kbck");
            train::write_metrics_csv(out_dir / "metrics.csv", tr.history());
            train::write_metrics_csv(out_dir / "eval.csv", test_rows);
            manifest.outputs = {"model.kbck", "metrics.csv", "eval.csv"};
            manifest.doc["test_psnr"] = train::mean_psnr(test_rows);
            manifest.doc["param_count"] = tr.model().param_count();
            std::cerr << "test PSNR " << train::mean_psnr(test_rows) << " dB\n";
        } else if (cmd == rnd || cmd == evl) {
            auto scene = load_scene_dir(scene_dir);
            auto m = load_model(scene, ckpt, config_path);
            manifest.doc["config"] = m.trainer->config();
            manifest.doc["checkpoint"] = ckpt;
            auto idx = views_of(scene.views, split);
            if (cmd == rnd) {
                fs::create_directories(out_dir / "render");
                for (std::size_t i : idx) {
                    auto img = m.trainer->render(i);
                    for (double v : img.data)
                        if (!std::isfinite(v)) throw NonFiniteOutput("non-finite pixel in view " + std::to_string(i));
                    auto name = "render/" + view_name("view_", i, ".png");
                    write_png(out_dir / name, img);
                    manifest.outputs.push_back(name);
                }
            } else {
                std::vector<train::MetricRow> rows;
                for (std::size_t i : idx) {
                    auto pred = m.trainer->render(i);
                    const auto& gt = scene.views[i].image;
                    rows.push_back({m.trainer->step(), to_string(scene.views[i].split), static_cast<int>(i), train::psnr(pred, gt),
                                    train::ssim(pred, gt)});
                }
                check_finite(rows);
                train::write_metrics_csv(out_dir / "eval.csv", rows);
                manifest.outputs.push_back("eval.csv");
                manifest.doc["mean_psnr"] = train::mean_psnr(rows);
            }
        } else if (cmd == abl) {
            auto scene = load_scene_dir(scene_dir);
            auto cfg = resolve_config(config_path, steps, seed_override);
            manifest.doc["config"] = cfg;
            manifest.doc["sweep"] = sweep;
            auto progress = [](const std::string& label, int s, double loss) {
                if (s % 250 == 0) std::cerr << label << " step " << s << " loss " << loss << '\n';
            };
            std::vector<train::AblationRow> rows;
            if (sweep == "k") {
                manifest.doc["ks"] = ks;
                rows = train::ablate_k(scene, ks, cfg, progress);
            } else if (sweep == "modules") {
                rows = train::ablate_modules(scene, cfg, progress);
            } else {
                rows = train::ablate_dm(scene, cfg, progress);
            }
            for (const auto& r : rows)
                if (!std::isfinite(r.psnr) || !std::isfinite(r.ssim)) throw NonFiniteOutput("non-finite metric in row " + r.label);
            train::write_ablation_csv(out_dir / "ablation.csv", rows);
            write_png(out_dir / "ablation.png", train::psnr_bar_plot(rows));
            manifest.outputs = {"ablation.csv", "ablation.png"};
        }
        manifest.write(out_dir);
    } catch (const NonFiniteOutput& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_non_finite;
    } catch (const train::NonFiniteLoss& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_non_finite;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_failure;
    }
    return 0;
}
