#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "kbuf/scene/camera.hpp"
#include "kbuf/scene/ply.hpp"
#include "kbuf/scene/scene_dir.hpp"
#include "kbuf/scene/synthetic.hpp"
#include "kbuf/scene/views.hpp"
#include "test_util.hpp"

using namespace kbuf;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

Camera random_camera(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::Quaterniond q(u(rng), u(rng), u(rng), u(rng));
    q.normalize();
    Mat3 r = q.toRotationMatrix();
    Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    r = svd.matrixU() * svd.matrixV().transpose();
    return Camera(80, 60, 70.0, 41.3, 28.7, r, Vec3(u(rng), u(rng), u(rng)));
}

}  // namespace

TEST(Ply, ReadsAsciiVertices) {
    test::TempDir dir;
    auto path = dir.path() / "three.ply";
    write_text(path,
               "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
               "end_header\n0 0 0\n1 0 0\n0 1 0\n");
    auto cloud = load_ply(path);
    ASSERT_EQ(cloud.size(), 3u);
    EXPECT_EQ(cloud.position(1), Vec3(1, 0, 0));
    EXPECT_EQ(cloud.position(2), Vec3(0, 1, 0));
    EXPECT_FALSE(cloud.has_colors());
}

TEST(Ply, ColorsNormalizedBy255) {
    test::TempDir dir;
    auto path = dir.path() / "red.ply";
    write_text(path,
               "ply\nformat ascii 1.0\ncomment test\nelement vertex 1\nproperty float x\nproperty float y\n"
               "property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
               "0.5 0.25 2 255 0 0\n");
    auto cloud = load_ply(path);
    ASSERT_TRUE(cloud.has_colors());
    EXPECT_EQ(cloud.color(0), Vec3(1, 0, 0));
}

TEST(Ply, TruncatedBodyReportsElementCount) {
    test::TempDir dir;
    std::string header =
        "ply\nformat ascii 1.0\nelement vertex 10\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    std::string body;
    for (int i = 0; i < 9; ++i) body += "1 2 3\n";
    write_text(dir.path() / "short.ply", header + body);
    try {
        load_ply(dir.path() / "short.ply");
        FAIL() << "expected PlyError";
    } catch (const PlyError& e) {
        EXPECT_NE(std::string(e.what()).find("element count"), std::string::npos);
        EXPECT_EQ(e.offset(), header.size() + body.size());
    }

    // binary: 9 of 10 records present
    std::string bheader =
        "ply\nformat binary_little_endian 1.0\nelement vertex 10\nproperty float x\nproperty float y\n"
        "property float z\nend_header\n";
    std::string bbody(9 * 12, '\0');
    write_text(dir.path() / "short_bin.ply", bheader + bbody);
    try {
        load_ply(dir.path() / "short_bin.ply");
        FAIL() << "expected PlyError";
    } catch (const PlyError& e) {
        EXPECT_EQ(e.offset(), bheader.size() + bbody.size());
    }
}

TEST(Ply, UnsupportedPropertyTypeAndMalformedHeader) {
    test::TempDir dir;
    std::string prefix = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n";
    write_text(dir.path() / "bad_type.ply", prefix + "property float128 y\nproperty float z\nend_header\n0 0 0\n");
    try {
        load_ply(dir.path() / "bad_type.ply");
        FAIL();
    } catch (const PlyError& e) {
        EXPECT_EQ(e.offset(), prefix.size());
        EXPECT_NE(std::string(e.what()).find("unsupported property type"), std::string::npos);
    }
    write_text(dir.path() / "no_magic.ply", "plx\nformat ascii 1.0\nend_header\n");
    EXPECT_THROW(load_ply(dir.path() / "no_magic.ply"), PlyError);
    write_text(dir.path() / "big_endian.ply", "ply\nformat binary_big_endian 1.0\nend_header\n");
    EXPECT_THROW(load_ply(dir.path() / "big_endian.ply"), PlyError);
    write_text(dir.path() / "no_end.ply", "ply\nformat ascii 1.0\nelement vertex 1\n");
    EXPECT_THROW(load_ply(dir.path() / "no_end.ply"), PlyError);
    write_text(dir.path() / "int_xyz.ply",
               "ply\nformat ascii 1.0\nelement vertex 1\nproperty int x\nproperty int y\nproperty int z\n"
               "end_header\n1 2 3\n");
    EXPECT_THROW(load_ply(dir.path() / "int_xyz.ply"), PlyError);
}

TEST(Ply, SkipsOtherElementsIncludingLists) {
    test::TempDir dir;
    std::string s =
        "ply\nformat ascii 1.0\nelement camera 1\nproperty float f\nelement vertex 2\nproperty double x\n"
        "property double y\nproperty double z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n"
        "element face 1\nproperty list uchar int vertex_indices\nend_header\n3.5\n0.1 0.2 0.3 0 128 255\n"
        "1 2 3 10 20 30\n3 0 1 0\n";
    write_text(dir.path() / "mixed.ply", s);
    auto cloud = load_ply(dir.path() / "mixed.ply");
    ASSERT_EQ(cloud.size(), 2u);
    EXPECT_EQ(cloud.position(0), Vec3(0.1, 0.2, 0.3));
    EXPECT_DOUBLE_EQ(cloud.color(0)[1], 128.0 / 255.0);
}

TEST(Ply, RoundTripProperty) {
    test::TempDir dir;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-5, 5);
    std::uniform_int_distribution<int> byte(0, 255);
    for (int trial = 0; trial < 8; ++trial) {
        bool with_colors = trial % 2 == 0;
        bool float_exact = trial % 4 < 2;
        std::vector<Vec3> pos, col;
        int n = 1 + trial * 37;
        for (int i = 0; i < n; ++i) {
            Vec3 p(u(rng), u(rng), u(rng));
            if (float_exact) p = p.cast<float>().cast<double>();
            pos.push_back(p);
            col.emplace_back(byte(rng) / 255.0, byte(rng) / 255.0, byte(rng) / 255.0);
        }
        PointCloud cloud(pos, with_colors ? col : std::vector<Vec3>{});
        for (auto fmt : {PlyFormat::ascii, PlyFormat::binary_little_endian}) {
            auto path = dir.path() / ("rt" + std::to_string(trial) + ".ply");
            save_ply(path, cloud, fmt);
            EXPECT_EQ(load_ply(path), cloud) << "trial " << trial;
        }
    }
}

TEST(PointCloudType, RejectsInvalid) {
    EXPECT_THROW(PointCloud(std::vector<Vec3>{}), std::invalid_argument);
    EXPECT_THROW(PointCloud({Vec3(0, std::nan(""), 0)}), std::invalid_argument);
    EXPECT_THROW(PointCloud({Vec3(0, 0, 0)}, {Vec3(0, 0, 0), Vec3(1, 1, 1)}), std::invalid_argument);
    EXPECT_THROW(PointCloud({Vec3(0, 0, 0)}, {Vec3(1.5, 0, 0)}), std::invalid_argument);
}

TEST(CameraType, ValidatesPose) {
    Mat3 skew = Mat3::Identity();
    skew(0, 1) = 1e-6;
    EXPECT_THROW(Camera(4, 4, 1, 2, 2, skew, Vec3::Zero()), std::invalid_argument);
    Mat3 reflect = Mat3::Identity();
    reflect(2, 2) = -1;
    EXPECT_THROW(Camera(4, 4, 1, 2, 2, reflect, Vec3::Zero()), std::invalid_argument);
    EXPECT_THROW(Camera(0, 4, 1, 2, 2, Mat3::Identity(), Vec3::Zero()), std::invalid_argument);
    EXPECT_THROW(Camera(4, 4, 0, 2, 2, Mat3::Identity(), Vec3::Zero()), std::invalid_argument);

    std::mt19937_64 rng(3);
    Camera cam = random_camera(rng);
    // the origin maps to the camera-space zero point
    Vec3 pc = cam.rotation() * cam.origin() + cam.translation();
    EXPECT_LT(pc.norm(), 1e-12);
}

TEST(RayDirection, AxisAndCenterPixel) {
    Camera cam(100, 100, 100, 50.5, 50.5, Mat3::Identity(), Vec3::Zero());
    Vec3 d = ray_direction(cam, 50, 50);
    EXPECT_NEAR((d - Vec3(0, 0, 1)).norm(), 0.0, 1e-15);

    Camera unit(1, 1, 1, 0.5, 0.5, Mat3::Identity(), Vec3::Zero());
    EXPECT_NEAR((ray_direction(unit, 0, 0) - Vec3(0, 0, 1)).norm(), 0.0, 1e-15);

    EXPECT_THROW(ray_direction(cam, -1, 0), std::out_of_range);
    EXPECT_THROW(ray_direction(cam, 0, 100), std::out_of_range);
}

TEST(RayDirection, RoundTripThroughProject) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Camera cam = random_camera(rng);
        for (int py = 0; py < cam.height(); py += 7)
            for (int px = 0; px < cam.width(); px += 9) {
                Vec3 d = ray_direction(cam, px, py);
                EXPECT_NEAR(d.norm(), 1.0, 1e-12);
                Projection pr = project(cam, cam.origin() + 5.0 * d);
                ASSERT_TRUE(pr.visible);
                EXPECT_NEAR(pr.u, px + 0.5, 1e-6);
                EXPECT_NEAR(pr.v, py + 0.5, 1e-6);
                EXPECT_NEAR(pr.dist, 5.0, 1e-12);
            }
    }
}

TEST(Project, OnAxisAndDegenerate) {
    Camera cam(100, 100, 100, 50, 50, Mat3::Identity(), Vec3::Zero());
    Projection pr = project(cam, Vec3(0, 0, 2));
    EXPECT_TRUE(pr.visible);
    EXPECT_DOUBLE_EQ(pr.u, 50);
    EXPECT_DOUBLE_EQ(pr.v, 50);
    EXPECT_DOUBLE_EQ(pr.dist, 2);
    EXPECT_FALSE(project(cam, cam.origin()).visible);
    EXPECT_FALSE(project(cam, Vec3(0, 0, -1)).visible);
}

TEST(Project, RandomFrustumRoundTrip) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u01(0, 1);
    for (int trial = 0; trial < 10; ++trial) {
        Camera cam = random_camera(rng);
        for (int i = 0; i < 200; ++i) {
            double u = u01(rng) * cam.width(), v = u01(rng) * cam.height(), t = 0.1 + 10 * u01(rng);
            Vec3 p = cam.origin() + t * cam.ray_through(u, v);
            Projection pr = project(cam, p);
            ASSERT_TRUE(pr.visible);
            EXPECT_NEAR(pr.u, u, 1e-6);
            EXPECT_NEAR(pr.v, v, 1e-6);
            double cosang = cam.ray_through(pr.u, pr.v).dot((p - cam.origin()).normalized());
            EXPECT_NEAR(cosang, 1.0, 1e-9);
        }
    }
}

TEST(Synthetic, Deterministic) {
    auto a = make_synthetic_scene(SceneKind::textured_sphere, 10000, 8, 64, 7);
    auto b = make_synthetic_scene(SceneKind::textured_sphere, 10000, 8, 64, 7);
    EXPECT_EQ(a.cloud, b.cloud);
    ASSERT_EQ(a.views.size(), 8u);
    for (std::size_t i = 0; i < a.views.size(); ++i) {
        EXPECT_EQ(a.views[i].image, b.views[i].image);
        EXPECT_EQ(a.views[i].camera.rotation(), b.views[i].camera.rotation());
    }
    auto c = make_synthetic_scene(SceneKind::textured_sphere, 10000, 8, 64, 8);
    EXPECT_FALSE(a.cloud == c.cloud);
}

TEST(Synthetic, GroundTruthMatchesBruteForcePainter) {
    for (auto kind : {SceneKind::textured_sphere, SceneKind::checker_cube, SceneKind::two_plane}) {
        auto scene = make_synthetic_scene(kind, 1500, 2, 24, 3);
        for (const auto& view : scene.views) {
            const auto& cam = view.camera;
            for (int y = 0; y < cam.height(); ++y)
                for (int x = 0; x < cam.width(); ++x) {
                    // brute force: nearest (dist, id) point whose disk covers the pixel center
                    double best = std::numeric_limits<double>::infinity();
                    long best_id = -1;
                    for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
                        Projection pr = project(cam, scene.cloud.position(i));
                        if (!pr.visible) continue;
                        double r = std::max(scene.tau * cam.focal() / pr.dist, 0.5);
                        double dx = x + 0.5 - pr.u, dy = y + 0.5 - pr.v;
                        if (dx * dx + dy * dy > r * r) continue;
                        float d = static_cast<float>(pr.dist);
                        if (d < best) {
                            best = d;
                            best_id = static_cast<long>(i);
                        }
                    }
                    Vec3 expect = best_id < 0 ? Vec3::Zero() : scene.cloud.color(static_cast<std::size_t>(best_id));
                    for (int c = 0; c < 3; ++c) ASSERT_EQ(view.image.at(x, y, c), expect[c]) << to_string(kind);
                }
        }
    }
}

TEST(Synthetic, TwoPlaneFrontOccludesBack) {
    auto scene = make_synthetic_scene(SceneKind::two_plane, 4000, 4, 48, 1);
    const auto& cam = scene.views[0].camera;
    EXPECT_NEAR(cam.origin().x(), 0.0, 1e-12);
    EXPECT_NEAR(cam.origin().y(), 0.0, 1e-12);
    auto painted = paint_reference(scene.cloud, cam, scene.tau);
    std::size_t back_pixels = 0, front_pixels = 0;
    for (auto id : painted.point_ids) {
        if (id < 0) continue;
        if (scene.cloud.position(static_cast<std::size_t>(id)).z() < 0)
            ++back_pixels;
        else
            ++front_pixels;
    }
    EXPECT_EQ(back_pixels, 0u);
    EXPECT_GT(front_pixels, 100u);
    // the back plane is reachable from a side-on view
    auto side = paint_reference(scene.cloud, scene.views[2].camera, scene.tau);
    bool any_back = false;
    for (auto id : side.point_ids)
        if (id >= 0 && scene.cloud.position(static_cast<std::size_t>(id)).z() < 0) any_back = true;
    EXPECT_TRUE(any_back);
}

TEST(PointNoise, IdentityDropoutAndSigma) {
    auto scene = make_synthetic_scene(SceneKind::textured_sphere, 10000, 2, 8, 1);
    EXPECT_EQ(add_point_noise(scene.cloud, 0, 0, 9), scene.cloud);

    auto dropped = add_point_noise(scene.cloud, 0, 0.5, 9);
    // binomial(10000, 0.5): sd = 50, accept 4 sd
    EXPECT_NEAR(static_cast<double>(dropped.size()), 5000.0, 200.0);
    EXPECT_EQ(add_point_noise(scene.cloud, 0, 0.5, 9), dropped);

    std::vector<Vec3> zeros(100000, Vec3::Zero());
    PointCloud origin_cloud(zeros);
    auto jittered = add_point_noise(origin_cloud, 0.01, 0, 4);
    for (int axis = 0; axis < 3; ++axis) {
        double m = 0, s2 = 0;
        for (const auto& p : jittered.positions()) m += p[axis];
        m /= jittered.size();
        for (const auto& p : jittered.positions()) s2 += (p[axis] - m) * (p[axis] - m);
        double sd = std::sqrt(s2 / (jittered.size() - 1));
        EXPECT_GE(sd, 0.009);
        EXPECT_LE(sd, 0.011);
    }
    EXPECT_THROW(add_point_noise(scene.cloud, -1, 0, 0), std::invalid_argument);
    EXPECT_THROW(add_point_noise(scene.cloud, 0, 1.0, 0), std::invalid_argument);
}

TEST(Views, CameraJsonAndPngRoundTrip) {
    test::TempDir dir;
    auto scene = make_synthetic_scene(SceneKind::checker_cube, 2000, 4, 16, 2);
    std::filesystem::create_directories(dir.path() / "gt");
    for (const auto& v : scene.views) write_png(dir.path() / v.image_path, v.image);
    save_cameras_json(dir.path() / "cameras.json", scene.views, scene.tau);
    double tau = 0;
    auto loaded = load_cameras_json(dir.path() / "cameras.json", &tau);
    EXPECT_EQ(tau, scene.tau);
    ASSERT_EQ(loaded.size(), scene.views.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        EXPECT_EQ(loaded[i].camera.rotation(), scene.views[i].camera.rotation());
        EXPECT_EQ(loaded[i].camera.translation(), scene.views[i].camera.translation());
        EXPECT_EQ(loaded[i].image, scene.views[i].image);
        EXPECT_EQ(loaded[i].split, scene.views[i].split);
    }
    EXPECT_EQ(loaded.indices(Split::test), (std::vector<std::size_t>{3}));
}

TEST(SceneDir, RoundTripKeepsCloudCamerasAndImages) {
    test::TempDir dir;
    auto scene = make_synthetic_scene(SceneKind::checker_cube, 800, 4, 12, 6);
    save_scene_dir(dir.path() / "s", scene);
    auto back = load_scene_dir(dir.path() / "s");
    ASSERT_EQ(back.cloud.size(), scene.cloud.size());
    for (std::size_t i = 0; i < scene.cloud.size(); ++i)
        EXPECT_LT((back.cloud.position(i) - scene.cloud.position(i)).norm(), 1e-6);
    EXPECT_DOUBLE_EQ(back.tau, scene.tau);
    ASSERT_EQ(back.views.size(), 4u);
    for (std::size_t v = 0; v < 4; ++v) {
        EXPECT_EQ(back.views[v].split, scene.views[v].split);
        EXPECT_TRUE(back.views[v].camera.origin().isApprox(scene.views[v].camera.origin(), 1e-12));
        const auto& a = back.views[v].image;
        const auto& b = scene.views[v].image;
        ASSERT_EQ(a.data.size(), b.data.size());
        for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], 0.5 / 255 + 1e-12);
    }
    EXPECT_THROW(load_scene_dir(dir.path() / "missing"), std::runtime_error);
}
