#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace kbuf::enc {

namespace sh_const {
inline const double c00 = 0.5 / std::sqrt(std::numbers::pi);
inline const double c1 = std::sqrt(3.0 / (4 * std::numbers::pi));
inline const double c2a = 0.5 * std::sqrt(15.0 / std::numbers::pi);
inline const double c20 = 0.25 * std::sqrt(5.0 / std::numbers::pi);
inline const double c22 = 0.25 * std::sqrt(15.0 / std::numbers::pi);
inline const double c33 = 0.25 * std::sqrt(35.0 / (2 * std::numbers::pi));
inline const double c32n = 0.5 * std::sqrt(105.0 / std::numbers::pi);
inline const double c31 = 0.25 * std::sqrt(21.0 / (2 * std::numbers::pi));
inline const double c30 = 0.25 * std::sqrt(7.0 / std::numbers::pi);
inline const double c32 = 0.25 * std::sqrt(105.0 / std::numbers::pi);
}  // namespace sh_const

/// Real orthonormal spherical harmonics (no Condon-Shortley phase),
/// ordered l ascending, m from -l to l. Writes bands^2 values.
template <class T>
void sh_encode_into(const Eigen::Vector3d& d, int bands, T* out) {
    using namespace sh_const;
    if (bands < 1 || bands > 4) throw std::invalid_argument("sh_encode: bands must be in 1..4");
    double n = d.norm();
    if (!(std::abs(n - 1) <= 1e-6)) throw std::invalid_argument("sh_encode: direction norm " + std::to_string(n) + " is not 1");
    double x = d.x(), y = d.y(), z = d.z();
    out[0] = static_cast<T>(c00);
    if (bands < 2) return;
    out[1] = static_cast<T>(c1 * y);
    out[2] = static_cast<T>(c1 * z);
    out[3] = static_cast<T>(c1 * x);
    if (bands < 3) return;
    out[4] = static_cast<T>(c2a * x * y);
    out[5] = static_cast<T>(c2a * y * z);
    out[6] = static_cast<T>(c20 * (3 * z * z - 1));
    out[7] = static_cast<T>(c2a * x * z);
    out[8] = static_cast<T>(c22 * (x * x - y * y));
    if (bands < 4) return;
    out[9] = static_cast<T>(c33 * y * (3 * x * x - y * y));
    out[10] = static_cast<T>(c32n * x * y * z);
    out[11] = static_cast<T>(c31 * y * (5 * z * z - 1));
    out[12] = static_cast<T>(c30 * z * (5 * z * z - 3));
    out[13] = static_cast<T>(c31 * x * (5 * z * z - 1));
    out[14] = static_cast<T>(c32 * z * (x * x - y * y));
    out[15] = static_cast<T>(c33 * x * (x * x - 3 * y * y));
}

inline std::vector<double> sh_encode(const Eigen::Vector3d& d, int bands) {
    std::vector<double> out(static_cast<std::size_t>(bands > 0 ? bands * bands : 0));
    sh_encode_into<double>(d, bands, out.data());
    return out;
}

}  // namespace kbuf::enc
