#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "kbuf/autodiff/tensor.hpp"
#include "kbuf/trainer/config.hpp"

namespace kbuf::train {

struct MetricRow {
    int step = 0;
    std::string split;
    int view = 0;
    double psnr = 0;
    double ssim = 0;
    friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

inline void to_json(nlohmann::json& j, const MetricRow& r) {
    j = {{"step", r.step}, {"split", r.split}, {"view", r.view}, {"psnr", r.psnr}, {"ssim", r.ssim}};
}
inline void from_json(const nlohmann::json& j, MetricRow& r) {
    j.at("step").get_to(r.step);
    j.at("split").get_to(r.split);
    j.at("view").get_to(r.view);
    j.at("psnr").get_to(r.psnr);
    j.at("ssim").get_to(r.ssim);
}

/// Checkpoint container: "KBCK", u32 version, u64 header length, header
/// JSON (sorted keys), u32 tensor count, then per tensor: u32 name length,
/// name, u8 dtype (0 f32, 1 f64), u32 rank, i32 dims, little-endian values.
struct CheckpointHeader {
    TrainConfig config;
    int step = 0;
    std::vector<MetricRow> history;
    nlohmann::json extra = nlohmann::json::object();
};

template <class T>
struct Checkpoint {
    CheckpointHeader header;
    std::map<std::string, ad::Tensor<T>> tensors;
};

inline constexpr std::uint32_t checkpoint_version = 1;

namespace ckpt_detail {

template <class V>
void put(std::ostream& out, V v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class V>
V get(std::istream& in, const char* what) {
    V v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error(std::string("checkpoint: truncated ") + what);
    return v;
}

}  // namespace ckpt_detail

template <class T>
void save_checkpoint(const std::filesystem::path& path, const CheckpointHeader& h, const ad::ParamList<T>& params) {
    using namespace ckpt_detail;
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    nlohmann::json j{{"config", h.config}, {"step", h.step}, {"history", h.history}, {"extra", h.extra}};
    std::string text = j.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out.write("KBCK", 4);
    put<std::uint32_t>(out, checkpoint_version);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put<std::uint8_t>(out, std::is_same_v<T, float> ? 0 : 1);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
        for (int d : p.tensor.shape()) put<std::int32_t>(out, d);
        auto v = p.tensor.values();
        out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

/// Loads into precision T; stored values of the other precision are converted.
template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
    using namespace ckpt_detail;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "KBCK", 4) != 0) throw std::runtime_error("checkpoint: bad magic");
    auto version = get<std::uint32_t>(in, "version");
    if (version != checkpoint_version) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    auto len = get<std::uint64_t>(in, "header length");
    if (len > (1ull << 30)) throw std::runtime_error("checkpoint: header too large");
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw std::runtime_error("checkpoint: truncated header");
    auto j = nlohmann::json::parse(text);
    Checkpoint<T> ck;
    ck.header.config = j.at("config").get<TrainConfig>();
    ck.header.step = j.at("step").get<int>();
    ck.header.history = j.at("history").get<std::vector<MetricRow>>();
    ck.header.extra = j.value("extra", nlohmann::json::object());
    auto n = get<std::uint32_t>(in, "tensor count");
    for (std::uint32_t t = 0; t < n; ++t) {
        auto nl = get<std::uint32_t>(in, "name length");
        if (nl > 4096) throw std::runtime_error("checkpoint: tensor name too long");
        std::string name(nl, '\0');
        if (!in.read(name.data(), nl)) throw std::runtime_error("checkpoint: truncated tensor name");
        auto dtype = get<std::uint8_t>(in, "dtype");
        if (dtype > 1) throw std::runtime_error("checkpoint: unknown dtype for " + name);
        auto rank = get<std::uint32_t>(in, "rank");
        if (rank > 8) throw std::runtime_error("checkpoint: rank too large for " + name);
        ad::Shape shape;
        for (std::uint32_t r = 0; r < rank; ++r) {
            auto d = get<std::int32_t>(in, "dims");
            if (d < 0) throw std::runtime_error("checkpoint: negative dimension for " + name);
            shape.push_back(d);
        }
        std::size_t count = ad::numel(shape);
        std::vector<T> values(count);
        for (std::size_t i = 0; i < count; ++i)
            values[i] = dtype == 0 ? static_cast<T>(get<float>(in, "values")) : static_cast<T>(get<double>(in, "values"));
        if (!ck.tensors.emplace(name, ad::Tensor<T>(shape, std::move(values))).second)
            throw std::runtime_error("checkpoint: duplicate tensor " + name);
    }
    return ck;
}

}  // namespace kbuf::train
