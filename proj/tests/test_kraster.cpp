#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "kbuf/raster/depth_image.hpp"
#include "kbuf/raster/kraster.hpp"
#include "kbuf/raster/kzb_io.hpp"
#include "kbuf/scene/synthetic.hpp"
#include "raster_oracle.hpp"

using namespace kbuf;

TEST(PixelId, RowMajorIds) {
    EXPECT_EQ(pixel_id(800, 0, 1), 800u);
    for (int px = 0; px < 5; ++px) EXPECT_EQ(pixel_id(5, px, 0), static_cast<std::uint32_t>(px));
    std::set<std::uint32_t> ids;
    for (int py = 0; py < 3; ++py)
        for (int px = 0; px < 7; ++px) ids.insert(pixel_id(7, px, py));
    EXPECT_EQ(ids.size(), 21u);
    EXPECT_EQ(*ids.rbegin(), 20u);
    EXPECT_THROW(pixel_id(5, 5, 0), std::out_of_range);
    EXPECT_THROW(pixel_id(5, -1, 0), std::out_of_range);
}

TEST(ScreenRadius, PerspectiveAndFloor) {
    EXPECT_DOUBLE_EQ(screen_radius(5e-3, 400, 2), 1.0);
    EXPECT_DOUBLE_EQ(screen_radius(0, 400, 2), 0.5);
    EXPECT_NEAR(screen_radius(1.5e-2, 600, 3), 3.0, 1e-12);
    EXPECT_THROW(screen_radius(1, 1, 0), std::invalid_argument);
}

TEST(DepthInsert, Examples) {
    std::vector<Fragment> slot;
    depth_insert(slot, {0, 1.0f}, 3);
    ASSERT_EQ(slot.size(), 1u);
    EXPECT_EQ(slot[0].dist, 1.0f);

    slot = {{1, 1.0f}, {2, 2.0f}, {3, 3.0f}};
    depth_insert(slot, {4, 0.5f}, 3);
    ASSERT_EQ(slot.size(), 3u);
    EXPECT_EQ(slot[0].dist, 0.5f);
    EXPECT_EQ(slot[1].dist, 1.0f);
    EXPECT_EQ(slot[2].dist, 2.0f);

    // farther than everything in a full slot: no change
    depth_insert(slot, {5, 9.0f}, 3);
    EXPECT_EQ(slot[2].point_id, 2u);

    // ties resolved by point id
    slot.clear();
    depth_insert(slot, {7, 1.0f}, 2);
    depth_insert(slot, {3, 1.0f}, 2);
    EXPECT_EQ(slot[0].point_id, 3u);
    EXPECT_EQ(slot[1].point_id, 7u);
}

TEST(DepthInsert, MatchesSortTruncateOracle) {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> kdist(1, 9);
    std::uniform_int_distribution<int> ndist(0, 40);
    std::uniform_int_distribution<int> ddist(1, 12);  // coarse values force ties
    for (int trial = 0; trial < 500; ++trial) {
        int k = kdist(rng);
        int n = ndist(rng);
        std::vector<Fragment> all, slot;
        for (int i = 0; i < n; ++i) {
            Fragment f{static_cast<std::uint32_t>(i), static_cast<float>(ddist(rng)) * 0.25f};
            all.push_back(f);
            depth_insert(slot, f, k);
        }
        std::sort(all.begin(), all.end(), nearer);
        all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(k)));
        ASSERT_EQ(slot, all) << "trial " << trial;
    }
}

TEST(RasterizeK, SinglePointAtCenter) {
    Camera cam(32, 32, 32, 16, 16, Mat3::Identity(), Vec3::Zero());
    PointCloud cloud({Vec3(0, 0, 2)});
    auto r = rasterize_k(cloud, cam, 0.2, 4);  // 3.2 px radius
    std::vector<std::uint32_t> covered;
    for (std::uint32_t p = 0; p < r.buffer.pixel_count(); ++p) {
        auto s = r.buffer.slot(p);
        ASSERT_LE(s.size(), 1u);
        if (!s.empty()) {
            EXPECT_EQ(s[0].point_id, 0u);
            EXPECT_FLOAT_EQ(s[0].dist, 2.0f);
            covered.push_back(p);
        }
    }
    EXPECT_FALSE(covered.empty());
    ASSERT_EQ(r.occupancy.size(), 1u);
    auto px = r.occupancy.pixels_of(0);
    EXPECT_EQ(std::vector<std::uint32_t>(px.begin(), px.end()), covered);
    // disk of radius 3.2 centred on a pixel corner covers 32 pixel centers
    EXPECT_EQ(covered.size(), 32u);
}

TEST(RasterizeK, EmptyForOutOfFrustum) {
    Camera cam(16, 16, 16, 8, 8, Mat3::Identity(), Vec3::Zero());
    PointCloud behind({Vec3(0, 0, -3), Vec3(100, 0, 1)});
    auto r = rasterize_k(behind, cam, 0.1, 3);
    EXPECT_EQ(r.buffer.total_fragments(), 0u);
    EXPECT_EQ(r.occupancy.size(), 0u);
    EXPECT_THROW(rasterize_k(behind, cam, 0.1, 0), std::invalid_argument);
}

TEST(RasterizeK, MatchesBruteForceOracle) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 6; ++trial) {
        auto scene = make_synthetic_scene(trial % 2 ? SceneKind::checker_cube : SceneKind::textured_sphere,
                                          800 + 300 * trial, 2, 24 + 4 * trial, rng());
        for (int k : {1, 2, 4, 8}) {
            for (const auto& view : scene.views) {
                auto r = rasterize_k(scene.cloud, view.camera, scene.tau * 1.5, k);
                auto expect = test::brute_force_kbuffer(scene.cloud, view.camera, scene.tau * 1.5, k);
                ASSERT_TRUE(r.buffer == expect) << "trial " << trial << " K=" << k;
                test::expect_occupancy_consistent(r.buffer, r.occupancy);
            }
        }
    }
}

TEST(RasterizeK, LayerOneEqualsSingleBufferAndMonotone) {
    auto scene = make_synthetic_scene(SceneKind::textured_sphere, 5000, 3, 48, 4);
    for (const auto& view : scene.views) {
        auto single = rasterize_k(scene.cloud, view.camera, scene.tau * 2, 1);
        std::size_t prev_total = single.buffer.total_fragments();
        for (int k = 2; k <= 8; ++k) {
            auto r = rasterize_k(scene.cloud, view.camera, scene.tau * 2, k);
            for (std::uint32_t p = 0; p < r.buffer.pixel_count(); ++p) {
                auto s = r.buffer.slot(p);
                auto s1 = single.buffer.slot(p);
                ASSERT_EQ(s.empty(), s1.empty());
                if (!s.empty()) ASSERT_EQ(s[0], s1[0]);
                ASSERT_LE(s.size(), static_cast<std::size_t>(k));
                for (std::size_t i = 1; i < s.size(); ++i) ASSERT_TRUE(nearer(s[i - 1], s[i]));
            }
            std::size_t total = r.buffer.total_fragments();
            EXPECT_GE(total, prev_total);
            prev_total = total;
        }
    }
}

TEST(RasterizeK, DeterministicAcrossWorkerCounts) {
    auto scene = make_synthetic_scene(SceneKind::checker_cube, 6000, 2, 80, 12);
    auto ref = rasterize_k(scene.cloud, scene.views[1].camera, scene.tau * 2, 8, 1);
    for (std::size_t w : {2u, 3u, 7u}) {
        auto r = rasterize_k(scene.cloud, scene.views[1].camera, scene.tau * 2, 8, w);
        EXPECT_TRUE(r.buffer == ref.buffer);
        EXPECT_TRUE(r.occupancy == ref.occupancy);
    }
}

TEST(KzbFile, RoundTripAndRejectsCorruption) {
    auto scene = make_synthetic_scene(SceneKind::textured_sphere, 3000, 2, 32, 5);
    auto r = rasterize_k(scene.cloud, scene.views[0].camera, scene.tau * 2, 4);
    std::stringstream ss;
    write_kzb(ss, r.buffer);
    std::string bytes = ss.str();
    EXPECT_EQ(bytes.substr(0, 4), "KZB1");
    std::size_t expect_size = 16 + r.buffer.pixel_count() + 8 * r.buffer.total_fragments();
    EXPECT_EQ(bytes.size(), expect_size);
    std::stringstream in(bytes);
    auto back = read_kzb(in);
    EXPECT_TRUE(back == r.buffer);
    EXPECT_TRUE(OccupancyMap::from_buffer(back) == r.occupancy);

    std::stringstream bad(std::string("KZB2") + bytes.substr(4));
    EXPECT_THROW(read_kzb(bad), std::runtime_error);
    std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(read_kzb(truncated), std::runtime_error);
}

TEST(DepthLayerImage, MinMaxPerLayerWithBlackBackground) {
    KZBuffer b(2, 2, 2);
    b.insert(0, {1, 1.0f});
    b.insert(0, {2, 5.0f});
    b.insert(1, {3, 3.0f});
    b.insert(2, {4, 2.0f});
    auto near = depth_layer_image(b, 0);
    EXPECT_EQ(near.channels, 1);
    EXPECT_EQ(near.data, (std::vector<double>{1.0, 0.0, 0.5, 0.0}));
    // one occupied pixel on layer 1 renders white
    EXPECT_EQ(depth_layer_image(b, 1).data, (std::vector<double>{1.0, 0.0, 0.0, 0.0}));
    EXPECT_THROW(depth_layer_image(b, 2), std::out_of_range);
    EXPECT_THROW(depth_layer_image(b, -1), std::out_of_range);
}
