#pragma once

// JSON binding for parameter structs shared by several config files.

#include "tomtalker/emotion.hpp"
#include "tomtalker/recommend.hpp"

#include <json.hpp>

namespace tomtalker::detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out)
{
    if (j.contains(key))
        out = j.at(key).get<T>();
}

inline void read_recommend(const nlohmann::json& j, RecommendParams& p)
{
    read_field(j, "sim_threshold", p.sim_threshold);
    read_field(j, "dist_threshold_km", p.dist_threshold_km);
    read_field(j, "alpha_net", p.alpha_net);
    read_field(j, "top_n", p.top_n);
    read_field(j, "stability_window", p.stability_window);
    read_field(j, "stability_rate", p.stability_rate);
}

inline nlohmann::json recommend_json(const RecommendParams& p)
{
    return {{"sim_threshold", p.sim_threshold},   {"dist_threshold_km", p.dist_threshold_km},
            {"alpha_net", p.alpha_net},           {"top_n", p.top_n},
            {"stability_window", p.stability_window}, {"stability_rate", p.stability_rate}};
}

inline void read_engine(const nlohmann::json& j, EngineConfig& c)
{
    read_field(j, "tick_seconds", c.tick_seconds);
    read_field(j, "transition_interval", c.transition_interval);
    read_field(j, "top_k", c.top_k);
    read_field(j, "decay_tc", c.decay_tc);
    read_field(j, "damping", c.damping);
    read_field(j, "natural_freq", c.natural_freq);
    read_field(j, "prune_below", c.prune_below);
    if (j.contains("personality")) {
        const auto& p = j.at("personality");
        read_field(p, "weights", c.personality.weights);
        read_field(p, "beta", c.personality.beta);
        if (p.contains("cap") && !p.at("cap").is_null())
            c.personality.cap = p.at("cap").get<double>();
    }
}

} // namespace tomtalker::detail
