#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kbuf/scene/point_cloud.hpp"

namespace kbuf {

/// Parse failure carrying the byte offset where reading went wrong.
class PlyError : public std::runtime_error {
public:
    PlyError(const std::string& what, std::size_t offset)
        : std::runtime_error("ply: " + what + " at byte " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

enum class PlyFormat { ascii, binary_little_endian };

namespace ply_detail {

enum class ScalarType { i8, u8, i16, u16, i32, u32, f32, f64 };

inline bool parse_scalar_type(std::string_view name, ScalarType& out) {
    struct Entry {
        std::string_view name;
        ScalarType type;
    };
    static constexpr Entry table[] = {
        {"char", ScalarType::i8},     {"int8", ScalarType::i8},     {"uchar", ScalarType::u8},
        {"uint8", ScalarType::u8},    {"short", ScalarType::i16},   {"int16", ScalarType::i16},
        {"ushort", ScalarType::u16},  {"uint16", ScalarType::u16},  {"int", ScalarType::i32},
        {"int32", ScalarType::i32},   {"uint", ScalarType::u32},    {"uint32", ScalarType::u32},
        {"float", ScalarType::f32},   {"float32", ScalarType::f32}, {"double", ScalarType::f64},
        {"float64", ScalarType::f64},
    };
    for (const auto& e : table)
        if (e.name == name) {
            out = e.type;
            return true;
        }
    return false;
}

inline std::size_t type_size(ScalarType t) {
    switch (t) {
        case ScalarType::i8:
        case ScalarType::u8: return 1;
        case ScalarType::i16:
        case ScalarType::u16: return 2;
        case ScalarType::i32:
        case ScalarType::u32:
        case ScalarType::f32: return 4;
        case ScalarType::f64: return 8;
    }
    return 0;
}

struct Property {
    std::string name;
    ScalarType type = ScalarType::f32;
    bool is_list = false;
    ScalarType count_type = ScalarType::u8;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> properties;
};

template <class T>
T load_le(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        auto* b = reinterpret_cast<unsigned char*>(&v);
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    return v;
}

inline double decode_binary(ScalarType t, const char* p) {
    switch (t) {
        case ScalarType::i8: return load_le<std::int8_t>(p);
        case ScalarType::u8: return load_le<std::uint8_t>(p);
        case ScalarType::i16: return load_le<std::int16_t>(p);
        case ScalarType::u16: return load_le<std::uint16_t>(p);
        case ScalarType::i32: return load_le<std::int32_t>(p);
        case ScalarType::u32: return load_le<std::uint32_t>(p);
        case ScalarType::f32: return load_le<float>(p);
        case ScalarType::f64: return load_le<double>(p);
    }
    return 0;
}

/// Sequential reader over the body bytes, for either encoding.
class BodyReader {
public:
    BodyReader(const std::string& data, std::size_t pos, bool binary) : data_(data), pos_(pos), binary_(binary) {}

    double read(ScalarType t) {
        if (binary_) {
            std::size_t n = type_size(t);
            if (pos_ + n > data_.size()) throw PlyError("unexpected end of data (element count mismatch)", pos_);
            double v = decode_binary(t, data_.data() + pos_);
            pos_ += n;
            return v;
        }
        while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
        if (pos_ >= data_.size()) throw PlyError("unexpected end of data (element count mismatch)", pos_);
        std::size_t start = pos_;
        while (pos_ < data_.size() && !std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
        std::string token = data_.substr(start, pos_ - start);
        char* end = nullptr;
        // float properties are rounded to float, matching the binary encoding
        double v = t == ScalarType::f32 ? static_cast<double>(std::strtof(token.c_str(), &end))
                                        : std::strtod(token.c_str(), &end);
        if (end != token.c_str() + token.size()) throw PlyError("malformed number '" + token + "'", start);
        return v;
    }

    std::size_t offset() const { return pos_; }

private:
    const std::string& data_;
    std::size_t pos_;
    bool binary_;
};

}  // namespace ply_detail

/// Reads the vertex element of an ASCII or binary little-endian PLY file.
/// Positions come from float/double x,y,z; red/green/blue are read as
/// uchar/255 (or as-is when stored as floating point).
inline PointCloud load_ply(const std::filesystem::path& path) {
    using namespace ply_detail;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("ply: cannot open " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    auto next_line = [&](std::size_t& line_start) -> std::string {
        line_start = pos;
        if (pos >= data.size()) throw PlyError("unterminated header", pos);
        std::size_t nl = data.find('\n', pos);
        if (nl == std::string::npos) throw PlyError("unterminated header", pos);
        std::string line = data.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        pos = nl + 1;
        return line;
    };

    std::size_t line_start = 0;
    if (next_line(line_start) != "ply") throw PlyError("missing 'ply' magic", 0);

    bool have_format = false;
    bool binary = false;
    std::vector<Element> elements;
    for (;;) {
        std::string line = next_line(line_start);
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword.empty() || keyword == "comment" || keyword == "obj_info") continue;
        if (keyword == "end_header") break;
        if (keyword == "format") {
            std::string fmt, version;
            ls >> fmt >> version;
            if (fmt == "ascii")
                binary = false;
            else if (fmt == "binary_little_endian")
                binary = true;
            else
                throw PlyError("unsupported format '" + fmt + "'", line_start);
            have_format = true;
        } else if (keyword == "element") {
            Element e;
            long long count = -1;
            ls >> e.name >> count;
            if (e.name.empty() || count < 0 || ls.fail()) throw PlyError("malformed element line", line_start);
            e.count = static_cast<std::size_t>(count);
            elements.push_back(std::move(e));
        } else if (keyword == "property") {
            if (elements.empty()) throw PlyError("property before any element", line_start);
            Property p;
            std::string type;
            ls >> type;
            if (type == "list") {
                std::string count_type, item_type;
                ls >> count_type >> item_type >> p.name;
                if (!parse_scalar_type(count_type, p.count_type) || !parse_scalar_type(item_type, p.type))
                    throw PlyError("unsupported property type in list '" + count_type + " " + item_type + "'",
                                   line_start);
                p.is_list = true;
            } else {
                ls >> p.name;
                if (!parse_scalar_type(type, p.type))
                    throw PlyError("unsupported property type '" + type + "'", line_start);
            }
            if (p.name.empty()) throw PlyError("malformed property line", line_start);
            elements.back().properties.push_back(std::move(p));
        } else {
            throw PlyError("unknown header keyword '" + keyword + "'", line_start);
        }
    }
    std::size_t header_end = pos;
    if (!have_format) throw PlyError("missing format line", header_end);

    const Element* vertex = nullptr;
    for (const auto& e : elements)
        if (e.name == "vertex") vertex = &e;
    if (!vertex) throw PlyError("no vertex element", header_end);

    int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
    for (std::size_t i = 0; i < vertex->properties.size(); ++i) {
        const auto& p = vertex->properties[i];
        int idx = static_cast<int>(i);
        if (p.name == "x") ix = idx;
        if (p.name == "y") iy = idx;
        if (p.name == "z") iz = idx;
        if (p.name == "red") ir = idx;
        if (p.name == "green") ig = idx;
        if (p.name == "blue") ib = idx;
    }
    if (ix < 0 || iy < 0 || iz < 0) throw PlyError("vertex element lacks x, y, z", header_end);
    for (int idx : {ix, iy, iz}) {
        const auto& p = vertex->properties[static_cast<std::size_t>(idx)];
        if (p.is_list || (p.type != ScalarType::f32 && p.type != ScalarType::f64))
            throw PlyError("coordinate '" + p.name + "' must be float or double", header_end);
    }
    bool has_color = ir >= 0 && ig >= 0 && ib >= 0;

    BodyReader reader(data, header_end, binary);
    std::vector<Vec3> positions;
    std::vector<Vec3> colors;
    std::vector<double> record;
    for (const auto& e : elements) {
        bool is_vertex = &e == vertex;
        if (is_vertex) {
            positions.reserve(e.count);
            if (has_color) colors.reserve(e.count);
        }
        for (std::size_t r = 0; r < e.count; ++r) {
            record.assign(e.properties.size(), 0.0);
            for (std::size_t pi = 0; pi < e.properties.size(); ++pi) {
                const auto& p = e.properties[pi];
                if (p.is_list) {
                    std::size_t at = reader.offset();
                    double n = reader.read(p.count_type);
                    if (n < 0 || n != std::floor(n)) throw PlyError("invalid list length", at);
                    for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) reader.read(p.type);
                } else {
                    record[pi] = reader.read(p.type);
                }
            }
            if (!is_vertex) continue;
            positions.emplace_back(record[static_cast<std::size_t>(ix)], record[static_cast<std::size_t>(iy)],
                                   record[static_cast<std::size_t>(iz)]);
            if (has_color) {
                Vec3 c;
                int channels[3] = {ir, ig, ib};
                for (int k = 0; k < 3; ++k) {
                    const auto& p = vertex->properties[static_cast<std::size_t>(channels[k])];
                    double v = record[static_cast<std::size_t>(channels[k])];
                    c[k] = (p.type == ScalarType::f32 || p.type == ScalarType::f64) ? v : v / 255.0;
                }
                colors.push_back(c);
            }
        }
        if (is_vertex) break;
    }
    try {
        return PointCloud(std::move(positions), std::move(colors));
    } catch (const std::invalid_argument& e) {
        throw PlyError(e.what(), header_end);
    }
}

/// Writes a vertex-only PLY. Coordinates are stored as float when every
/// value is exactly representable, double otherwise, so load_ply(save_ply(c))
/// reproduces c. Colors are written as uchar round(c * 255).
inline void save_ply(const std::filesystem::path& path, const PointCloud& cloud,
                     PlyFormat format = PlyFormat::binary_little_endian) {
    bool as_float = true;
    for (const auto& p : cloud.positions())
        for (int k = 0; k < 3; ++k)
            if (static_cast<double>(static_cast<float>(p[k])) != p[k]) as_float = false;
    const char* coord_type = as_float ? "float" : "double";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("ply: cannot write " + path.string());
    out << "ply\n"
        << "format " << (format == PlyFormat::ascii ? "ascii" : "binary_little_endian") << " 1.0\n"
        << "element vertex " << cloud.size() << "\n"
        << "property " << coord_type << " x\n"
        << "property " << coord_type << " y\n"
        << "property " << coord_type << " z\n";
    if (cloud.has_colors()) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "end_header\n";

    auto to_byte = [](double c) { return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)); };
    if (format == PlyFormat::ascii) {
        out << std::setprecision(as_float ? 9 : 17);
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const auto& p = cloud.position(i);
            out << p.x() << ' ' << p.y() << ' ' << p.z();
            if (cloud.has_colors())
                for (int k = 0; k < 3; ++k) out << ' ' << static_cast<int>(to_byte(cloud.color(i)[k]));
            out << '\n';
        }
    } else {
        static_assert(std::endian::native == std::endian::little, "binary PLY writer assumes little-endian host");
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const auto& p = cloud.position(i);
            for (int k = 0; k < 3; ++k) {
                if (as_float) {
                    float f = static_cast<float>(p[k]);
                    out.write(reinterpret_cast<const char*>(&f), sizeof f);
                } else {
                    double d = p[k];
                    out.write(reinterpret_cast<const char*>(&d), sizeof d);
                }
            }
            if (cloud.has_colors())
                for (int k = 0; k < 3; ++k) {
                    std::uint8_t b = to_byte(cloud.color(i)[k]);
                    out.write(reinterpret_cast<const char*>(&b), 1);
                }
        }
    }
    if (!out) throw std::runtime_error("ply: write failed for " + path.string());
}

}  // namespace kbuf
