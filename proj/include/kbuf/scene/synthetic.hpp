#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kbuf/raster/kraster.hpp"
#include "kbuf/scene/image.hpp"
#include "kbuf/scene/point_cloud.hpp"
#include "kbuf/scene/views.hpp"

namespace kbuf {

enum class SceneKind { textured_sphere, checker_cube, two_plane };

inline SceneKind parse_scene_kind(std::string_view s) {
    if (s == "textured-sphere") return SceneKind::textured_sphere;
    if (s == "checker-cube") return SceneKind::checker_cube;
    if (s == "two-plane") return SceneKind::two_plane;
    throw std::invalid_argument("unknown scene kind '" + std::string(s) + "'");
}

inline const char* to_string(SceneKind k) {
    switch (k) {
        case SceneKind::textured_sphere: return "textured-sphere";
        case SceneKind::checker_cube: return "checker-cube";
        case SceneKind::two_plane: return "two-plane";
    }
    return "?";
}

struct SyntheticScene {
    PointCloud cloud;
    ViewSet views;
    double tau = 0;  // splat radius used by the reference painter
};

/// Reference painter output: color of the nearest splat per pixel (black
/// where nothing lands) and the id of that point (-1 for background).
struct PaintedView {
    Image image;
    std::vector<std::int64_t> point_ids;
};

inline PaintedView paint_reference(const PointCloud& cloud, const Camera& cam, double tau) {
    auto ras = rasterize_k(cloud, cam, tau, 1);
    PaintedView out{Image(cam.width(), cam.height(), 3), std::vector<std::int64_t>(ras.buffer.pixel_count(), -1)};
    for (int y = 0; y < cam.height(); ++y)
        for (int x = 0; x < cam.width(); ++x) {
            auto s = ras.buffer.slot(x, y);
            if (s.empty()) continue;
            auto id = s[0].point_id;
            out.point_ids[pixel_id(cam.width(), x, y)] = id;
            Vec3 c = cloud.has_colors() ? cloud.color(id) : Vec3(1, 1, 1);
            for (int k = 0; k < 3; ++k) out.image.at(x, y, k) = c[k];
        }
    return out;
}

namespace synth_detail {

inline double quantize_color(double c) { return std::round(std::clamp(c, 0.0, 1.0) * 255.0) / 255.0; }

inline Vec3 quantize(const Vec3& c) { return {quantize_color(c[0]), quantize_color(c[1]), quantize_color(c[2])}; }

inline Vec3 to_float_grid(const Vec3& p) {
    return {static_cast<float>(p[0]), static_cast<float>(p[1]), static_cast<float>(p[2])};
}

inline Vec3 sphere_color(const Vec3& p) {
    double theta = std::acos(std::clamp(p.y(), -1.0, 1.0));
    double phi = std::atan2(p.x(), p.z());
    bool check = (static_cast<int>(std::floor(4.0 * phi / std::numbers::pi)) +
                  static_cast<int>(std::floor(4.0 * theta / std::numbers::pi))) %
                     2 ==
                 0;
    return {0.5 + 0.45 * std::sin(3.0 * phi), 0.5 + 0.45 * std::cos(4.0 * theta), check ? 0.85 : 0.2};
}

inline Vec3 cube_color(const Vec3& p, int face) {
    static const Vec3 hues[6] = {{0.9, 0.2, 0.2}, {0.2, 0.8, 0.3}, {0.2, 0.3, 0.9},
                                 {0.9, 0.8, 0.2}, {0.8, 0.3, 0.8}, {0.2, 0.8, 0.8}};
    int cells = 0;
    for (int k = 0; k < 3; ++k) cells += static_cast<int>(std::floor((p[k] + 0.8) / 0.4));
    return (cells % 2 == 0) ? hues[face] : Vec3(hues[face] * 0.35);
}

}  // namespace synth_detail

/// Cameras on an orbit of radius 3 around the origin, looking at it.
/// View 0 sits on the +z axis; every fourth view (i % 4 == 3) is a test view.
inline std::vector<Camera> orbit_cameras(int n_views, int resolution, double radius = 3.0) {
    std::vector<Camera> cams;
    for (int i = 0; i < n_views; ++i) {
        double az = 2.0 * std::numbers::pi * i / n_views;
        double el = 0.35 * std::sin(4.0 * std::numbers::pi * i / n_views);
        Vec3 eye(radius * std::cos(el) * std::sin(az), radius * std::sin(el), radius * std::cos(el) * std::cos(az));
        cams.push_back(Camera::look_at(resolution, resolution, static_cast<double>(resolution), eye, Vec3::Zero()));
    }
    return cams;
}

/// Deterministic procedural scene plus ground-truth views rendered by the
/// reference painter.
inline SyntheticScene make_synthetic_scene(SceneKind kind, int n_points, int n_views, int resolution,
                                           std::uint64_t seed) {
    using namespace synth_detail;
    if (n_points < 100) throw std::invalid_argument("make_synthetic_scene: n_points must be >= 100");
    if (n_views < 2) throw std::invalid_argument("make_synthetic_scene: n_views must be >= 2");
    if (resolution < 1) throw std::invalid_argument("make_synthetic_scene: resolution must be >= 1");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vec3> pos, col;
    pos.reserve(static_cast<std::size_t>(n_points));
    col.reserve(static_cast<std::size_t>(n_points));
    double tau = 0;

    switch (kind) {
        case SceneKind::textured_sphere: {
            for (int i = 0; i < n_points; ++i) {
                Vec3 d;
                do {
                    d = Vec3(normal(rng), normal(rng), normal(rng));
                } while (d.norm() < 1e-9);
                Vec3 p = to_float_grid(d.normalized());
                pos.push_back(p);
                col.push_back(quantize(sphere_color(p.normalized())));
            }
            tau = 1.5 * std::sqrt(4.0 * std::numbers::pi / n_points);
            break;
        }
        case SceneKind::checker_cube: {
            const double half = 0.8;
            for (int i = 0; i < n_points; ++i) {
                int face = static_cast<int>(uni(rng) * 6.0) % 6;
                double a = (2.0 * uni(rng) - 1.0) * half, b = (2.0 * uni(rng) - 1.0) * half;
                int axis = face / 2;
                double sign = (face % 2 == 0) ? 1.0 : -1.0;
                Vec3 p;
                p[axis] = sign * half;
                p[(axis + 1) % 3] = a;
                p[(axis + 2) % 3] = b;
                p = to_float_grid(p);
                pos.push_back(p);
                col.push_back(quantize(cube_color(p, face)));
            }
            tau = 1.5 * std::sqrt(6.0 * 4.0 * half * half / n_points);
            break;
        }
        case SceneKind::two_plane: {
            // Front plane z = +0.4 (half-size 1.0) fully covers the back plane
            // z = -0.4 (half-size 0.6) from the +z axis. Jittered-grid sampling
            // bounds the gap between neighbouring samples by the cell diagonal.
            const double front_half = 1.0, back_half = 0.6;
            double front_area = 4 * front_half * front_half, back_area = 4 * back_half * back_half;
            double spacing = std::sqrt((front_area + back_area) / n_points);
            auto sample_plane = [&](double half, double z, bool front) {
                int cells = std::max(1, static_cast<int>(std::floor(2 * half / spacing)));
                double cell = 2 * half / cells;
                for (int iy = 0; iy < cells; ++iy)
                    for (int ix = 0; ix < cells; ++ix) {
                        double x = -half + (ix + uni(rng)) * cell;
                        double y = -half + (iy + uni(rng)) * cell;
                        Vec3 p = to_float_grid(Vec3(x, y, z));
                        pos.push_back(p);
                        Vec3 c;
                        if (front) {
                            bool check = (static_cast<int>(std::floor((x + half) / 0.25)) +
                                          static_cast<int>(std::floor((y + half) / 0.25))) % 2 == 0;
                            c = check ? Vec3(0.95, 0.85, 0.1) : Vec3(0.8, 0.15, 0.1);
                        } else {
                            c = Vec3(0.05, 0.3 + 0.25 * std::sin(8 * x), 0.9);
                        }
                        col.push_back(quantize(c));
                    }
            };
            sample_plane(front_half, 0.4, true);
            sample_plane(back_half, -0.4, false);
            tau = 1.6 * spacing;
            break;
        }
    }

    SyntheticScene scene{PointCloud(std::move(pos), std::move(col)), {}, tau};
    auto cams = orbit_cameras(n_views, resolution);
    for (int i = 0; i < n_views; ++i) {
        View v;
        v.camera = cams[static_cast<std::size_t>(i)];
        v.image = paint_reference(scene.cloud, v.camera, tau).image;
        v.split = (i % 4 == 3) ? Split::test : Split::train;
        char name[32];
        std::snprintf(name, sizeof name, "gt/view_%03d.png", i);
        v.image_path = name;
        scene.views.push_back(std::move(v));
    }
    return scene;
}

/// Gaussian position jitter plus random point removal, deterministic in seed.
inline PointCloud add_point_noise(const PointCloud& cloud, double sigma, double dropout, std::uint64_t seed) {
    if (!(sigma >= 0)) throw std::invalid_argument("add_point_noise: sigma must be >= 0");
    if (!(dropout >= 0 && dropout < 1)) throw std::invalid_argument("add_point_noise: dropout must be in [0, 1)");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vec3> pos, col;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        double keep = uni(rng);
        Vec3 jitter(normal(rng), normal(rng), normal(rng));
        if (keep < dropout) continue;
        pos.push_back(sigma > 0 ? Vec3(cloud.position(i) + sigma * jitter) : cloud.position(i));
        if (cloud.has_colors()) col.push_back(cloud.color(i));
    }
    if (pos.empty()) throw std::invalid_argument("add_point_noise: dropout removed every point");
    return PointCloud(std::move(pos), std::move(col));
}

}  // namespace kbuf
