#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "kbuf/raster/kraster.hpp"

namespace kbuf {

// KZB1 layout, little-endian: "KZB1", u32 W, u32 H, u32 K, then per pixel
// (row-major) u8 count followed by count x (u32 point_id, f32 dist).

namespace kzb_detail {

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("kzb: truncated stream");
    return v;
}

}  // namespace kzb_detail

inline void write_kzb(std::ostream& out, const KZBuffer& buf) {
    using namespace kzb_detail;
    out.write("KZB1", 4);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(buf.width()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(buf.height()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(buf.k()));
    for (std::uint32_t p = 0; p < buf.pixel_count(); ++p) {
        auto s = buf.slot(p);
        put<std::uint8_t>(out, static_cast<std::uint8_t>(s.size()));
        for (const auto& f : s) {
            put<std::uint32_t>(out, f.point_id);
            put<float>(out, f.dist);
        }
    }
}

inline KZBuffer read_kzb(std::istream& in) {
    using namespace kzb_detail;
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4) || std::memcmp(magic.data(), "KZB1", 4) != 0)
        throw std::runtime_error("kzb: bad magic");
    auto w = get<std::uint32_t>(in), h = get<std::uint32_t>(in), k = get<std::uint32_t>(in);
    if (w == 0 || h == 0 || k == 0 || k > 255 || static_cast<std::uint64_t>(w) * h > (1ull << 31))
        throw std::runtime_error("kzb: invalid dimensions");
    KZBuffer buf(static_cast<int>(w), static_cast<int>(h), static_cast<int>(k));
    std::vector<Fragment> frags;
    for (std::uint32_t p = 0; p < w * h; ++p) {
        auto n = get<std::uint8_t>(in);
        if (n > k) throw std::runtime_error("kzb: pixel list exceeds K");
        frags.resize(n);
        for (auto& f : frags) {
            f.point_id = get<std::uint32_t>(in);
            f.dist = get<float>(in);
        }
        for (std::size_t i = 1; i < frags.size(); ++i)
            if (!nearer(frags[i - 1], frags[i])) throw std::runtime_error("kzb: pixel list not sorted");
        buf.set_slot(p, frags);
    }
    return buf;
}

inline void save_kzb(const std::filesystem::path& path, const KZBuffer& buf) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("kzb: cannot write " + path.string());
    write_kzb(out, buf);
    if (!out) throw std::runtime_error("kzb: write failed for " + path.string());
}

inline KZBuffer load_kzb(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("kzb: cannot open " + path.string());
    return read_kzb(in);
}

}  // namespace kbuf
