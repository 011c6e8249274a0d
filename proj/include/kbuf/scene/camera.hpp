#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace kbuf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Result of projecting a world point. (u, v) are continuous image
/// coordinates; the center of pixel (px, py) sits at (px + 0.5, py + 0.5).
struct Projection {
    double u = 0;
    double v = 0;
    double dist = 0;  // Euclidean distance to the camera origin
    bool visible = false;
};

/// Pinhole camera. The pose maps world to camera coordinates:
/// p_cam = rotation * p_world + translation, camera looks down +z,
/// x to the right and y down.
class Camera {
public:
    Camera() = default;

    Camera(int width, int height, double focal, double cx, double cy, const Mat3& rotation,
           const Vec3& translation)
        : width_(width),
          height_(height),
          focal_(focal),
          cx_(cx),
          cy_(cy),
          rotation_(rotation),
          translation_(translation) {
        if (width < 1 || height < 1) throw std::invalid_argument("camera: width and height must be >= 1");
        if (!(focal > 0) || !std::isfinite(focal)) throw std::invalid_argument("camera: focal must be > 0");
        if (!rotation.allFinite() || !translation.allFinite())
            throw std::invalid_argument("camera: pose must be finite");
        double ortho = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
        if (ortho > 1e-9 || std::abs(rotation.determinant() - 1.0) > 1e-9)
            throw std::invalid_argument("camera: rotation must be orthonormal with det +1");
        origin_ = -rotation.transpose() * translation;
    }

    /// Camera at `eye` looking at `target`; `up` is the approximate world up.
    static Camera look_at(int width, int height, double focal, const Vec3& eye, const Vec3& target,
                          const Vec3& up = Vec3(0, 1, 0)) {
        Vec3 forward = (target - eye).normalized();
        Vec3 right = forward.cross(up);
        if (right.norm() < 1e-12) right = forward.cross(Vec3(1, 0, 0));
        right.normalize();
        Vec3 down = forward.cross(right);
        Mat3 rot;
        rot.row(0) = right.transpose();
        rot.row(1) = down.transpose();
        rot.row(2) = forward.transpose();
        // re-orthonormalize so the 1e-9 check holds after accumulated rounding
        Eigen::JacobiSVD<Mat3> svd(rot, Eigen::ComputeFullU | Eigen::ComputeFullV);
        rot = svd.matrixU() * svd.matrixV().transpose();
        return Camera(width, height, focal, width * 0.5, height * 0.5, rot, -rot * eye);
    }

    int width() const { return width_; }
    int height() const { return height_; }
    double focal() const { return focal_; }
    double cx() const { return cx_; }
    double cy() const { return cy_; }
    const Mat3& rotation() const { return rotation_; }
    const Vec3& translation() const { return translation_; }
    const Vec3& origin() const { return origin_; }

    /// Unit world-space ray through continuous image coordinates (u, v).
    Vec3 ray_through(double u, double v) const {
        Vec3 d_cam((u - cx_) / focal_, (v - cy_) / focal_, 1.0);
        return (rotation_.transpose() * d_cam).normalized();
    }

    Projection project(const Vec3& p) const {
        Projection out;
        Vec3 pc = rotation_ * p + translation_;
        out.dist = (p - origin_).norm();
        if (!(pc.z() > 0)) return out;
        out.u = focal_ * pc.x() / pc.z() + cx_;
        out.v = focal_ * pc.y() / pc.z() + cy_;
        out.visible = std::isfinite(out.u) && std::isfinite(out.v);
        return out;
    }

private:
    int width_ = 1;
    int height_ = 1;
    double focal_ = 1;
    double cx_ = 0.5;
    double cy_ = 0.5;
    Mat3 rotation_ = Mat3::Identity();
    Vec3 translation_ = Vec3::Zero();
    Vec3 origin_ = Vec3::Zero();
};

/// Unit world-space direction through the center of pixel (px, py).
inline Vec3 ray_direction(const Camera& cam, int px, int py) {
    if (px < 0 || py < 0 || px >= cam.width() || py >= cam.height())
        throw std::out_of_range("ray_direction: pixel (" + std::to_string(px) + ", " + std::to_string(py) +
                                ") outside " + std::to_string(cam.width()) + "x" + std::to_string(cam.height()));
    return cam.ray_through(px + 0.5, py + 0.5);
}

inline Projection project(const Camera& cam, const Vec3& p) { return cam.project(p); }

}  // namespace kbuf
