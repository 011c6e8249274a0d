#include <gtest/gtest.h>

#include <random>
#include <set>

#include "kbuf/autodiff/grad_check.hpp"
#include "kbuf/querygen/pipeline.hpp"
#include "kbuf/raster/kraster.hpp"
#include "kbuf/scene/synthetic.hpp"
#include "query_oracle.hpp"

using namespace kbuf;
using namespace kbuf::query;

namespace {

Camera small_camera(int w, int h) { return Camera(w, h, w, w * 0.5, h * 0.5, Mat3::Identity(), Vec3::Zero()); }

KZBuffer hand_buffer() {
    // 3x2 image; point 5 covers pixels {1, 2}, point 9 only pixel 4 (behind point 5 there too)
    KZBuffer b(3, 2, 2);
    b.insert(1, {5, 2.0f});
    b.insert(2, {5, 2.0f});
    b.insert(4, {9, 3.0f});
    b.insert(4, {5, 2.0f});
    return b;
}

}  // namespace

TEST(BuildQueries, MinimumPixelDirection) {
    auto buf = hand_buffer();
    auto occ = OccupancyMap::from_buffer(buf);
    auto cam = small_camera(3, 2);
    auto q = build_queries(buf, occ, cam, true);
    ASSERT_EQ(q.query_count(), 2u);
    EXPECT_EQ(q.point_ids, (std::vector<std::uint32_t>{5, 9}));
    EXPECT_EQ(q.d[0], ray_direction(cam, 1, 0));  // A = {1, 2, 4}, min 1
    EXPECT_EQ(q.d[1], ray_direction(cam, 1, 1));
    EXPECT_DOUBLE_EQ((q.x[0] - cam.origin()).norm(), 2.0);
    EXPECT_EQ(q.slot_count(), buf.total_fragments());
    EXPECT_EQ(q.pixel_dirs.size(), 3u);
}

TEST(BuildQueries, SinglePixelPointCoincidesAcrossModes) {
    auto buf = hand_buffer();
    auto occ = OccupancyMap::from_buffer(buf);
    auto cam = small_camera(3, 2);
    auto pruned = build_queries(buf, occ, cam, true);
    auto full = build_queries(buf, occ, cam, false);
    EXPECT_EQ(full.query_count(), 4u);
    // point 9 lives only in pixel 4
    std::size_t s9 = 0;
    for (std::size_t s = 0; s < full.slot_count(); ++s)
        if (full.point_ids[full.slots[s].query] == 9) s9 = full.slots[s].query;
    EXPECT_EQ(full.x[s9], pruned.x[1]);
    EXPECT_EQ(full.d[s9], pruned.d[1]);
}

TEST(BuildQueries, PolicyChoices) {
    auto buf = hand_buffer();
    auto occ = OccupancyMap::from_buffer(buf);
    auto cam = small_camera(3, 2);
    auto avg = build_queries(buf, occ, cam, true, DmPolicy::average);
    Vec3 mean = (ray_direction(cam, 1, 0) + ray_direction(cam, 2, 0) + ray_direction(cam, 1, 1)).normalized();
    EXPECT_LT((avg.d[0] - mean).norm(), 1e-15);
    std::set<std::tuple<double, double, double>> seen;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto r = build_queries(buf, occ, cam, true, DmPolicy::random, seed);
        seen.insert({r.d[0].x(), r.d[0].y(), r.d[0].z()});
        auto again = build_queries(buf, occ, cam, true, DmPolicy::random, seed);
        EXPECT_EQ(r.d[0], again.d[0]);
    }
    EXPECT_EQ(seen.size(), 3u);
    EXPECT_EQ(parse_dm_policy("average"), DmPolicy::average);
    EXPECT_THROW(parse_dm_policy("median"), std::invalid_argument);
}

TEST(BuildQueries, RejectsInconsistentOccupancy) {
    auto buf = hand_buffer();
    KZBuffer other(3, 2, 2);
    other.insert(0, {1, 1.0f});
    EXPECT_THROW(build_queries(buf, OccupancyMap::from_buffer(other), small_camera(3, 2), true), std::invalid_argument);
    EXPECT_THROW(build_queries(buf, OccupancyMap::from_buffer(buf), small_camera(4, 2), true), std::invalid_argument);
}

TEST(BuildQueries, CountLawsOnDenseSphere) {
    // fewer points than covered pixels, each splat spanning well over K pixels
    auto scene = make_synthetic_scene(SceneKind::textured_sphere, 2000, 2, 64, 3);
    const auto& cam = scene.views[0].camera;
    double tau = scene.tau;
    auto r8 = rasterize_k(scene.cloud, cam, tau, 8);
    auto r1 = rasterize_k(scene.cloud, cam, tau, 1);
    auto pruned = build_queries(r8.buffer, r8.occupancy, cam, true);
    auto full = build_queries(r8.buffer, r8.occupancy, cam, false);
    EXPECT_EQ(pruned.query_count(), r8.occupancy.size());
    EXPECT_EQ(full.query_count(), r8.buffer.total_fragments());
    EXPECT_LT(pruned.query_count(), r1.buffer.total_fragments());
    EXPECT_LT(r1.buffer.total_fragments(), full.query_count());
    EXPECT_EQ(pruned.slot_count(), full.slot_count());
    // every slot appears exactly once
    std::set<std::pair<int, std::uint32_t>> cells;
    for (const auto& s : pruned.slots) cells.insert({s.layer, s.pixel});
    EXPECT_EQ(cells.size(), pruned.slot_count());
}

TEST(BuildQueries, PolicyLeavesSlotsAndMaskUnchanged) {
    auto scene = make_synthetic_scene(SceneKind::checker_cube, 4000, 2, 32, 4);
    const auto& cam = scene.views[1].camera;
    auto r = rasterize_k(scene.cloud, cam, scene.tau * 2, 4);
    auto a = build_queries(r.buffer, r.occupancy, cam, true, DmPolicy::minimum);
    for (auto pol : {DmPolicy::random, DmPolicy::average}) {
        auto b = build_queries(r.buffer, r.occupancy, cam, true, pol, 9);
        ASSERT_EQ(a.slot_count(), b.slot_count());
        for (std::size_t s = 0; s < a.slot_count(); ++s) {
            EXPECT_EQ(a.slots[s].layer, b.slots[s].layer);
            EXPECT_EQ(a.slots[s].pixel, b.slots[s].pixel);
            EXPECT_EQ(a.slots[s].query, b.slots[s].query);
        }
        EXPECT_EQ(a.z, b.z);
    }
}

TEST(ReconstructX, Examples) {
    EXPECT_EQ(reconstruct_x(Vec3::Zero(), 2, Vec3(0, 0, 1)), Vec3(0, 0, 2));
    auto scene = make_synthetic_scene(SceneKind::textured_sphere, 3000, 2, 48, 5);
    const auto& cam = scene.views[0].camera;
    auto r = rasterize_k(scene.cloud, cam, scene.tau, 4);
    auto q = build_queries(r.buffer, r.occupancy, cam, true);
    for (std::size_t i = 0; i < q.query_count(); ++i) EXPECT_NEAR((q.x[i] - cam.origin()).norm(), q.z[i], 1e-12);

    // a point placed on its own pixel-center ray comes back to itself
    Camera c2 = small_camera(16, 16);
    std::vector<Vec3> pts;
    for (int i = 0; i < 10; ++i) pts.push_back(ray_direction(c2, i, 15 - i) * (1.5 + 0.1 * i));
    PointCloud cloud(pts);
    auto r2 = rasterize_k(cloud, c2, 0.001, 1);
    auto q2 = build_queries(r2.buffer, r2.occupancy, c2, true);
    ASSERT_EQ(q2.query_count(), 10u);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_LT((q2.x[i] - pts[q2.point_ids[i]]).norm(), 1e-6);
}

TEST(Reorganize, EmptyAndSingleSlot) {
    KZBuffer empty(4, 3, 2);
    auto cam = small_camera(4, 3);
    auto q = build_queries(empty, OccupancyMap::from_buffer(empty), cam, true);
    auto st = reorganize(q, ad::Tensor<double>::zeros({0, 5}), 5);
    EXPECT_EQ(st.features.shape(), (ad::Shape{2, 5, 3, 4}));
    for (double v : st.features.values()) EXPECT_EQ(v, 0.0);
    for (auto m : st.mask) EXPECT_EQ(m, 0);

    KZBuffer one(4, 5, 3);
    one.insert(pixel_id(4, 3, 4), {7, 1.0f});
    one.insert(pixel_id(4, 3, 4), {8, 2.0f});
    one.insert(pixel_id(4, 3, 4), {9, 3.0f});
    auto q1 = build_queries(one, OccupancyMap::from_buffer(one), small_camera(4, 5), true);
    std::vector<double> f(3 * 2, 0.0);
    f[2 * 2 + 0] = 1.5;
    f[2 * 2 + 1] = -2.5;
    auto s1 = reorganize(q1, ad::Tensor<double>({3, 2}, f), 2);
    EXPECT_EQ(s1.at(2, 4, 3, 0), 1.5);
    EXPECT_EQ(s1.at(2, 4, 3, 1), -2.5);
    EXPECT_TRUE(s1.occupied(2, 4, 3));
    double total = 0;
    for (double v : s1.features.values()) total += std::abs(v);
    EXPECT_EQ(total, 4.0);
    EXPECT_THROW(reorganize(q1, ad::Tensor<double>::zeros({2, 2}), 2), ad::ShapeError);
    q1.slots[1] = q1.slots[0];
    EXPECT_THROW(reorganize(q1, ad::Tensor<double>({3, 2}, f), 2), std::invalid_argument);
}

TEST(Reorganize, GatherOfScatterIsIdentityAndGradients) {
    auto scene = make_synthetic_scene(SceneKind::two_plane, 3000, 2, 24, 6);
    const auto& cam = scene.views[0].camera;
    auto r = rasterize_k(scene.cloud, cam, scene.tau * 2, 3);
    auto q = build_queries(r.buffer, r.occupancy, cam, false);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    int C = 3;
    std::vector<double> f(q.slot_count() * C);
    for (auto& v : f) v = u(rng);
    ad::Tensor<double> feats({static_cast<int>(q.slot_count()), C}, f, true);
    auto st = reorganize(q, feats, C);
    std::size_t occupied = 0;
    for (auto m : st.mask) occupied += m;
    EXPECT_EQ(occupied, q.slot_count());
    for (std::size_t s = 0; s < q.slot_count(); ++s) {
        int y = static_cast<int>(q.slots[s].pixel / 24), x = static_cast<int>(q.slots[s].pixel % 24);
        for (int c = 0; c < C; ++c) ASSERT_EQ(st.at(q.slots[s].layer, y, x, c), f[s * C + static_cast<std::size_t>(c)]);
    }
    std::vector<double> w(st.features.numel());
    for (auto& v : w) v = u(rng);
    auto fn = [&] { return ad::dot_const(reorganize(q, feats, C).features, w); };
    ad::GradCheckOptions opt;
    opt.h = 1e-2;  // linear in the features: any step is exact
    EXPECT_LT(ad::grad_check(fn, {feats}, opt).max_rel_error, 1e-9);
}

TEST(PruneEquivalence, SharedStackEqualsUnsharedBitwise) {
    for (int trial = 0; trial < 3; ++trial) {
        auto scene = make_synthetic_scene(trial == 1 ? SceneKind::two_plane : SceneKind::textured_sphere, 1500, 2, 20, 20 + trial);
        std::mt19937_64 rng(trial);
        radiance::RadianceMLP<double> field(8, rng);
        auto [lo, hi] = enc::origin_box(std::vector<Vec3>{scene.views[0].camera.origin(), scene.views[1].camera.origin()});
        radiance::Rectifier<double> rect(enc::HashGridConfig{}, lo, hi, 8, rng);
        for (const auto& view : scene.views) {
            auto r = rasterize_k(scene.cloud, view.camera, scene.tau * 2, 4);
            auto q = build_queries(r.buffer, r.occupancy, view.camera, true);
            using RectPtr = const radiance::Rectifier<double>*;
            for (RectPtr rp : std::vector<RectPtr>{&rect, nullptr}) {
                auto st = build_feature_stack(q, field, rp);
                auto expect = test::unshared_stack(r.buffer, view.camera, field, rp);
                ASSERT_EQ(st.features.numel(), expect.size());
                for (std::size_t i = 0; i < expect.size(); ++i) ASSERT_EQ(st.features[i], expect[i]) << "entry " << i;
            }
        }
    }
}
