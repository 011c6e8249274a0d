#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace kbuf::enc {

struct PosEncConfig {
    int L = 10;
};

inline std::size_t positional_width(std::size_t dim, int L) { return 2 * static_cast<std::size_t>(L) * dim; }

/// Writes gamma(p) into out: for octave k = 0..L-1, for each component,
/// (sin(2^k pi p), cos(2^k pi p)).
template <class T>
void positional_encode_into(std::span<const double> p, int L, T* out) {
    if (L < 1) throw std::invalid_argument("positional_encode: L must be >= 1");
    std::size_t o = 0;
    double freq = std::numbers::pi;
    for (int k = 0; k < L; ++k, freq *= 2) {
        for (double v : p) {
            out[o++] = static_cast<T>(std::sin(freq * v));
            out[o++] = static_cast<T>(std::cos(freq * v));
        }
    }
}

inline std::vector<double> positional_encode(std::span<const double> p, int L) {
    for (double v : p)
        if (!std::isfinite(v)) throw std::invalid_argument("positional_encode: non-finite input");
    std::vector<double> out(positional_width(p.size(), L));
    positional_encode_into<double>(p, L, out.data());
    return out;
}

}  // namespace kbuf::enc
