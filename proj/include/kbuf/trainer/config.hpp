#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kbuf/decoder/unet.hpp"
#include "kbuf/querygen/queries.hpp"

namespace kbuf::train {

struct TrainConfig {
    int k = 8;
    int c = 8;
    double tau = 0;  // 0 uses the scene's splat radius
    double lr_field = 5e-4;
    double lr_rect = 1e-4;
    double lr_kfn = 1.5e-4;
    double lr_unet = 1.5e-4;
    double decay = 0.9999;
    int steps = 1000;
    std::uint64_t seed = 0;
    bool prune = true;
    bool rect = true;
    bool kfn = true;
    bool naive_baseline = false;
    query::DmPolicy dm_policy = query::DmPolicy::minimum;
    int kfn_hidden = 64;
    bool kfn_per_channel = false;
    std::vector<int> unet_widths{16, 32, 64, 128, 256};
    int unet_downsamples = 4;
    double unet_width_multiplier = 1.0;
    /// Train-split PSNR/SSIM is logged every this many steps; test metrics at the end.
    int log_every = 1;

    void validate() const {
        if (k < 1) throw std::invalid_argument("config: k must be >= 1");
        if (c < 1) throw std::invalid_argument("config: c must be >= 1");
        if (!(tau >= 0)) throw std::invalid_argument("config: tau must be >= 0");
        for (double lr : {lr_field, lr_rect, lr_kfn, lr_unet})
            if (!(lr >= 0)) throw std::invalid_argument("config: learning rates must be >= 0");
        if (!(decay > 0 && decay <= 1)) throw std::invalid_argument("config: decay must be in (0, 1]");
        if (steps < 0) throw std::invalid_argument("config: steps must be >= 0");
        if (!kfn && !naive_baseline && k != 1) throw std::invalid_argument("config: without the KFN only k = 1 is supported");
        if (kfn_hidden < 1) throw std::invalid_argument("config: kfn_hidden must be >= 1");
        if (log_every < 1) throw std::invalid_argument("config: log_every must be >= 1");
        unet().validate();
    }

    decoder::UNetConfig unet() const {
        decoder::UNetConfig u;
        u.widths = unet_widths;
        u.downsamples = unet_downsamples;
        u.width_multiplier = unet_width_multiplier;
        u.in_channels = c;
        u.out_channels = 3;
        return u;
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"k", c.k},
                       {"c", c.c},
                       {"tau", c.tau},
                       {"lr_field", c.lr_field},
                       {"lr_rect", c.lr_rect},
                       {"lr_kfn", c.lr_kfn},
                       {"lr_unet", c.lr_unet},
                       {"decay", c.decay},
                       {"steps", c.steps},
                       {"seed", c.seed},
                       {"prune", c.prune},
                       {"rect", c.rect},
                       {"kfn", c.kfn},
                       {"naive_baseline", c.naive_baseline},
                       {"dm_policy", query::to_string(c.dm_policy)},
                       {"kfn_hidden", c.kfn_hidden},
                       {"kfn_per_channel", c.kfn_per_channel},
                       {"unet_widths", c.unet_widths},
                       {"unet_downsamples", c.unet_downsamples},
                       {"unet_width_multiplier", c.unet_width_multiplier},
                       {"log_every", c.log_every}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
    nlohmann::json known;
    to_json(known, TrainConfig{});
    for (const auto& [key, _] : j.items())
        if (!known.contains(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("k", c.k);
    get("c", c.c);
    get("tau", c.tau);
    get("lr_field", c.lr_field);
    get("lr_rect", c.lr_rect);
    get("lr_kfn", c.lr_kfn);
    get("lr_unet", c.lr_unet);
    get("decay", c.decay);
    get("steps", c.steps);
    get("seed", c.seed);
    get("prune", c.prune);
    get("rect", c.rect);
    get("kfn", c.kfn);
    get("naive_baseline", c.naive_baseline);
    if (j.contains("dm_policy")) c.dm_policy = query::parse_dm_policy(j.at("dm_policy").get<std::string>());
    get("kfn_hidden", c.kfn_hidden);
    get("kfn_per_channel", c.kfn_per_channel);
    get("unet_widths", c.unet_widths);
    get("unet_downsamples", c.unet_downsamples);
    get("unet_width_multiplier", c.unet_width_multiplier);
    get("log_every", c.log_every);
    c.validate();
}

/// Sorted-key JSON text; nlohmann objects iterate in key order.
inline std::string canonical_json(const TrainConfig& c) { return nlohmann::json(c).dump(); }

inline TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    return nlohmann::json::parse(in).get<TrainConfig>();
}

/// Fields that change parameter shapes, listed as "key: a != b".
inline std::vector<std::string> shape_mismatches(const TrainConfig& a, const TrainConfig& b) {
    nlohmann::json ja = a, jb = b;
    std::vector<std::string> out;
    for (const char* key : {"k", "c", "rect", "kfn", "naive_baseline", "kfn_hidden", "kfn_per_channel", "unet_widths",
                            "unet_downsamples", "unet_width_multiplier"})
        if (ja.at(key) != jb.at(key)) out.push_back(std::string(key) + ": " + ja.at(key).dump() + " != " + jb.at(key).dump());
    return out;
}

}  // namespace kbuf::train
