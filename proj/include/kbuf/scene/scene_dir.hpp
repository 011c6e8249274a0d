#pragma once

#include <filesystem>
#include <stdexcept>

#include "kbuf/scene/ply.hpp"
#include "kbuf/scene/synthetic.hpp"
#include "kbuf/scene/views.hpp"

namespace kbuf {

/// Scene directory layout: cloud.ply, cameras.json, gt/*.png.
inline void save_scene_dir(const std::filesystem::path& dir, const SyntheticScene& scene) {
    std::filesystem::create_directories(dir / "gt");
    save_ply(dir / "cloud.ply", scene.cloud);
    save_cameras_json(dir / "cameras.json", scene.views, scene.tau);
    for (const auto& v : scene.views) write_png(dir / v.image_path, v.image);
}

inline SyntheticScene load_scene_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw std::runtime_error("scene directory not found: " + dir.string());
    SyntheticScene s;
    s.cloud = load_ply(dir / "cloud.ply");
    s.views = load_cameras_json(dir / "cameras.json", &s.tau);
    return s;
}

}  // namespace kbuf
