#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kbuf/scene/camera.hpp"
#include "kbuf/scene/image.hpp"

namespace kbuf {

enum class Split { train, test };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

struct View {
    Camera camera;
    Image image;  // ground truth, H x W x 3
    Split split = Split::train;
    std::string image_path;  // relative to the scene directory
};

/// Camera/ground-truth pairs; every image matches its camera's resolution.
class ViewSet {
public:
    ViewSet() = default;
    explicit ViewSet(std::vector<View> views) : views_(std::move(views)) {
        for (std::size_t i = 0; i < views_.size(); ++i) check(views_[i], i);
    }

    void push_back(View v) {
        check(v, views_.size());
        views_.push_back(std::move(v));
    }

    std::size_t size() const { return views_.size(); }
    const View& operator[](std::size_t i) const { return views_.at(i); }
    auto begin() const { return views_.begin(); }
    auto end() const { return views_.end(); }

    std::vector<std::size_t> indices(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < views_.size(); ++i)
            if (views_[i].split == s) out.push_back(i);
        return out;
    }

private:
    static void check(const View& v, std::size_t i) {
        const auto& c = v.camera;
        if (v.image.width != c.width() || v.image.height != c.height() || v.image.channels != 3)
            throw std::invalid_argument("view " + std::to_string(i) + ": image does not match camera resolution");
    }

    std::vector<View> views_;
};

inline nlohmann::json camera_to_json(const Camera& cam) {
    nlohmann::json j;
    j["width"] = cam.width();
    j["height"] = cam.height();
    j["focal"] = cam.focal();
    j["cx"] = cam.cx();
    j["cy"] = cam.cy();
    std::vector<double> rot(9), trans(3);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) rot[static_cast<std::size_t>(r * 3 + c)] = cam.rotation()(r, c);
        trans[static_cast<std::size_t>(r)] = cam.translation()[r];
    }
    j["rotation"] = rot;
    j["translation"] = trans;
    return j;
}

inline Camera camera_from_json(const nlohmann::json& j) {
    auto rot = j.at("rotation").get<std::vector<double>>();
    auto trans = j.at("translation").get<std::vector<double>>();
    if (rot.size() != 9 || trans.size() != 3) throw std::invalid_argument("camera json: rotation needs 9, translation 3");
    Mat3 r;
    for (int i = 0; i < 9; ++i) r(i / 3, i % 3) = rot[static_cast<std::size_t>(i)];
    return Camera(j.at("width").get<int>(), j.at("height").get<int>(), j.at("focal").get<double>(),
                  j.at("cx").get<double>(), j.at("cy").get<double>(), r, Vec3(trans[0], trans[1], trans[2]));
}

/// cameras.json: {"tau": r, "cameras": [{width, height, focal, cx, cy,
/// rotation[9] row-major, translation[3], image_path, split}, ...]}
inline void save_cameras_json(const std::filesystem::path& path, const ViewSet& views, double tau) {
    nlohmann::json doc;
    doc["tau"] = tau;
    doc["cameras"] = nlohmann::json::array();
    for (const auto& v : views) {
        auto j = camera_to_json(v.camera);
        j["image_path"] = v.image_path;
        j["split"] = to_string(v.split);
        doc["cameras"].push_back(j);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}


/// Reads cameras.json and the referenced PNGs relative to its directory.
inline ViewSet load_cameras_json(const std::filesystem::path& path, double* tau_out = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json doc = nlohmann::json::parse(in);
    if (tau_out) *tau_out = doc.value("tau", 0.0);
    ViewSet views;
    for (const auto& j : doc.at("cameras")) {
        View v;
        v.camera = camera_from_json(j);
        v.image_path = j.value("image_path", std::string());
        v.split = j.value("split", std::string("train")) == "test" ? Split::test : Split::train;
        if (!v.image_path.empty())
            v.image = read_png(path.parent_path() / v.image_path);
        else
            v.image = Image(v.camera.width(), v.camera.height(), 3);
        views.push_back(std::move(v));
    }
    return views;
}

}  // namespace kbuf
