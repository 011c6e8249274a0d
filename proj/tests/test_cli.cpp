#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <string>

#include "kbuf/raster/kzb_io.hpp"
#include "kbuf/scene/scene_dir.hpp"
#include "raster_oracle.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace kbuf;

namespace {

struct RunResult {
    int code = -1;
    std::string output;
};

/// Runs the CLI with `args`, capturing stdout and stderr together.
RunResult kbuf_cli(const fs::path& scratch, const std::string& args) {
    auto log = scratch / "cli.log";
    std::string cmd = std::string("\"") + KBUF_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    r.output.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "manifest.json")); }

/// A small scene shared by the training-side tests.
class CliScene : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new test::TempDir;
        auto r = kbuf_cli(dir_->path(), "synth --points 1500 --views 4 --res 32 --seed 4 --out \"" + scene().string() + "\"");
        ASSERT_EQ(r.code, 0) << r.output;
        std::ofstream(config()) << R"({"k": 2, "unet_width_multiplier": 0.125, "kfn_hidden": 8, "seed": 2})";
    }
    static void TearDownTestSuite() {
        delete dir_;
        dir_ = nullptr;
    }
    static fs::path scene() { return dir_->path() / "scene"; }
    static fs::path config() { return dir_->path() / "config.json"; }
    static fs::path path(const std::string& name) { return dir_->path() / name; }
    static RunResult run(const std::string& args) { return kbuf_cli(dir_->path(), args); }

    static test::TempDir* dir_;
};
test::TempDir* CliScene::dir_ = nullptr;

}  // namespace

TEST(CliSynth, DefaultsWriteSceneAndRerunIsByteIdentical) {
    test::TempDir dir;
    auto a = dir.path() / "a", b = dir.path() / "b";
    ASSERT_EQ(kbuf_cli(dir.path(), "synth --out \"" + a.string() + "\"").code, 0);
    ASSERT_EQ(kbuf_cli(dir.path(), "synth --out \"" + b.string() + "\"").code, 0);
    EXPECT_TRUE(fs::exists(a / "cloud.ply"));
    EXPECT_TRUE(fs::exists(a / "cameras.json"));
    std::size_t pngs = 0;
    for (const auto& e : fs::directory_iterator(a / "gt")) pngs += e.path().extension() == ".png";
    EXPECT_EQ(pngs, 8u);
    for (const auto& e : fs::directory_iterator(a / "gt")) EXPECT_EQ(slurp(e.path()), slurp(b / "gt" / e.path().filename()));
    EXPECT_EQ(slurp(a / "cloud.ply"), slurp(b / "cloud.ply"));
    EXPECT_EQ(slurp(a / "cameras.json"), slurp(b / "cameras.json"));
    auto m = manifest(a);
    EXPECT_EQ(m["command"], "synth");
    EXPECT_EQ(m["scene"]["points_written"], 5000);
    EXPECT_EQ(load_scene_dir(a).cloud.size(), 5000u);
}

TEST(CliSynth, DropoutKeepsBinomialShare) {
    test::TempDir dir;
    auto out = dir.path() / "s";
    ASSERT_EQ(kbuf_cli(dir.path(), "synth --points 20000 --views 2 --res 16 --dropout 0.3 --out \"" + out.string() + "\"").code, 0);
    double n = 20000, kept = static_cast<double>(load_scene_dir(out).cloud.size());
    double sd = std::sqrt(n * 0.3 * 0.7);
    EXPECT_NEAR(kept, 0.7 * n, 5 * sd);
}

TEST(CliSynth, RejectsBadArguments) {
    test::TempDir dir;
    auto out = (dir.path() / "s").string();
    EXPECT_EQ(kbuf_cli(dir.path(), "synth --kind donut --out \"" + out + "\"").code, 1);
    EXPECT_NE(kbuf_cli(dir.path(), "synth --points 10 --out \"" + out + "\"").code, 0);
    EXPECT_NE(kbuf_cli(dir.path(), "synth --bogus 1 --out \"" + out + "\"").code, 0);
    EXPECT_NE(kbuf_cli(dir.path(), "").code, 0);
}

TEST_F(CliScene, RasterizeDepthImagesMatchOracle) {
    auto out = path("raster");
    auto r = run("rasterize --scene \"" + scene().string() + "\" --view 1 --k 3 --out \"" + out.string() + "\"");
    ASSERT_EQ(r.code, 0) << r.output;
    auto sc = load_scene_dir(scene());
    const auto& cam = sc.views[1].camera;
    auto buf = load_kzb(out / "buffer.kzb");
    EXPECT_TRUE(buf == test::brute_force_kbuffer(sc.cloud, cam, sc.tau, 3));

    // per-layer depth images: min-max over occupied pixels, near white, background black
    for (int l = 0; l < 3; ++l) {
        char name[32];
        std::snprintf(name, sizeof name, "depth_layer_%03d.png", l);
        auto img = read_png(out / name);
        ASSERT_EQ(img.width, cam.width());
        double lo = 1e300, hi = -1e300;
        for (std::uint32_t p = 0; p < buf.pixel_count(); ++p) {
            auto s = buf.slot(p);
            for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LE(s[i - 1].dist, s[i].dist);
            if (static_cast<int>(s.size()) > l) {
                lo = std::min<double>(lo, s[static_cast<std::size_t>(l)].dist);
                hi = std::max<double>(hi, s[static_cast<std::size_t>(l)].dist);
            }
        }
        for (std::uint32_t p = 0; p < buf.pixel_count(); ++p) {
            auto s = buf.slot(p);
            int x = static_cast<int>(p % static_cast<std::uint32_t>(cam.width())), y = static_cast<int>(p / static_cast<std::uint32_t>(cam.width()));
            double want = static_cast<int>(s.size()) > l ? 1 - (s[static_cast<std::size_t>(l)].dist - lo) / (hi - lo) : 0.0;
            EXPECT_NEAR(img.at(x, y, 0), want, 0.5 / 255 + 1e-9) << "layer " << l << " pixel " << p;
        }
    }
    EXPECT_EQ(manifest(out)["raster"]["k"], 3);

    auto bad = run("rasterize --scene \"" + scene().string() + "\" --view 9 --out \"" + path("bad").string() + "\"");
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.output.find("out of range"), std::string::npos) << bad.output;
}

TEST_F(CliScene, TrainRenderEvalRoundTrip) {
    auto run_dir = path("train");
    auto r = run("train --scene \"" + scene().string() + "\" --config \"" + config().string() + "\" --steps 200 --out \"" +
                 run_dir.string() + "\"");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(line_count(run_dir / "metrics.csv"), 201u);
    EXPECT_EQ(line_count(run_dir / "eval.csv"), 2u);  // one test view
    auto m = manifest(run_dir);
    EXPECT_EQ(m["command"], "train");
    EXPECT_EQ(m["config"]["steps"], 200);
    EXPECT_TRUE(m["versions"].contains("eigen"));

    auto ckpt = (run_dir / "model.kbck").string();
    auto ev = path("eval");
    ASSERT_EQ(run("eval --scene \"" + scene().string() + "\" --ckpt \"" + ckpt + "\" --out \"" + ev.string() + "\"").code, 0);
    EXPECT_EQ(slurp(ev / "eval.csv"), slurp(run_dir / "eval.csv"));

    auto r1 = path("render1"), r2 = path("render2");
    ASSERT_EQ(run("render --scene \"" + scene().string() + "\" --ckpt \"" + ckpt + "\" --split all --out \"" + r1.string() + "\"").code, 0);
    ASSERT_EQ(run("render --scene \"" + scene().string() + "\" --ckpt \"" + ckpt + "\" --config \"" + config().string() +
                  "\" --split all --out \"" + r2.string() + "\"")
                  .code,
              0);
    for (int v = 0; v < 4; ++v) {
        char name[32];
        std::snprintf(name, sizeof name, "render/view_%03d.png", v);
        ASSERT_TRUE(fs::exists(r1 / name));
        EXPECT_EQ(slurp(r1 / name), slurp(r2 / name));
    }

    std::ofstream(path("wrong.json")) << R"({"k": 4, "c": 4})";
    auto bad = run("render --scene \"" + scene().string() + "\" --ckpt \"" + ckpt + "\" --config \"" + path("wrong.json").string() +
                   "\" --out \"" + path("bad").string() + "\"");
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.output.find("k: 4 != 2"), std::string::npos) << bad.output;
    EXPECT_NE(bad.output.find("c: 4 != 8"), std::string::npos) << bad.output;
}

TEST_F(CliScene, TrainIsDeterministic) {
    auto a = path("det_a"), b = path("det_b");
    for (const auto& d : {a, b})
        ASSERT_EQ(run("train --scene \"" + scene().string() + "\" --config \"" + config().string() + "\" --steps 15 --out \"" +
                      d.string() + "\"")
                      .code,
                  0);
    EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
    EXPECT_EQ(slurp(a / "model.kbck"), slurp(b / "model.kbck"));
}

TEST_F(CliScene, AblateDmWritesThreeRows) {
    auto out = path("ablate");
    auto r = run("ablate --scene \"" + scene().string() + "\" --config \"" + config().string() + "\" --sweep dm --steps 2 --out \"" +
                 out.string() + "\"");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(line_count(out / "ablation.csv"), 4u);
    EXPECT_TRUE(fs::exists(out / "ablation.png"));
    EXPECT_EQ(manifest(out)["sweep"], "dm");
    EXPECT_NE(run("ablate --scene \"" + scene().string() + "\" --sweep depth --out \"" + out.string() + "\"").code, 0);
}
