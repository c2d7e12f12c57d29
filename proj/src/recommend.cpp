#include "tomtalker/recommend.hpp"

#include "tomtalker/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

namespace tomtalker {

void RecommendParams::validate() const
{
    if (!(sim_threshold >= 0.0 && sim_threshold <= 1.0))
        throw Error(ErrorCode::InvalidParams, "sim_threshold must lie in [0,1]");
    if (!(dist_threshold_km > 0.0))
        throw Error(ErrorCode::InvalidParams, "dist_threshold_km must be positive");
    if (!(alpha_net >= 0.0 && alpha_net <= 1.0))
        throw Error(ErrorCode::InvalidParams, "alpha_net must lie in [0,1]");
    if (top_n == 0)
        throw Error(ErrorCode::InvalidParams, "top_n must be positive");
    if (stability_window <= 0)
        throw Error(ErrorCode::InvalidParams, "stability_window must be positive");
    if (!(stability_rate >= 0.0))
        throw Error(ErrorCode::InvalidParams, "stability_rate must be non-negative");
}

std::string_view to_string(RecommendPhase phase)
{
    return phase == RecommendPhase::Similarity ? "similarity" : "network";
}

double similarity(const SocialGraph& graph, const UserId& u, const UserId& v)
{
    const auto& a = graph.user(u);
    const auto& b = graph.user(v);
    if (a.preferences.size() != b.preferences.size() || a.attributes.size() != b.attributes.size())
        throw Error(ErrorCode::DimensionMismatch, "profiles '" + u + "' and '" + v + "' differ in length");
    double dot = 0.0, na = 0.0, nb = 0.0;
    auto accumulate = [&](const std::vector<double>& x, const std::vector<double>& y) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            dot += x[i] * y[i];
            na += x[i] * x[i];
            nb += y[i] * y[i];
        }
    };
    accumulate(a.preferences, b.preferences);
    accumulate(a.attributes, b.attributes);
    if (na == 0.0 || nb == 0.0)
        return 0.0;
    const double cos = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(cos, 0.0, 1.0);
}

namespace {

template <typename Key>
void rank(std::vector<Recommendation>& recs, Key primary, std::size_t top_n)
{
    std::sort(recs.begin(), recs.end(), [&](const Recommendation& x, const Recommendation& y) {
        const double kx = primary(x), ky = primary(y);
        if (kx != ky)
            return kx > ky;
        if (x.distance_km != y.distance_km)
            return x.distance_km < y.distance_km;
        return x.candidate < y.candidate;
    });
    if (recs.size() > top_n)
        recs.resize(top_n);
}

std::vector<UserId> common_neighbors(const SocialGraph& graph, const UserId& u, const UserId& v)
{
    const auto& nu = graph.neighbors(u);
    const auto& nv = graph.neighbors(v);
    std::vector<UserId> out;
    std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(out));
    return out;
}

} // namespace

std::vector<Recommendation> similarity_candidates(const SocialGraph& graph, const UserId& u,
                                                  const RecommendParams& params)
{
    params.validate();
    const auto& friends = graph.neighbors(u);
    std::vector<Recommendation> out;
    for (const auto& [v, profile] : graph.users()) {
        if (v == u || friends.count(v))
            continue;
        const double d = graph.distance_km(u, v);
        if (d > params.dist_threshold_km)
            continue;
        const double s = similarity(graph, u, v);
        if (s < params.sim_threshold)
            continue;
        Recommendation r;
        r.candidate = v;
        r.score = s;
        r.phase = RecommendPhase::Similarity;
        r.similarity = s;
        r.distance_km = d;
        out.push_back(std::move(r));
    }
    rank(out, [](const Recommendation& r) { return r.score; }, params.top_n);
    return out;
}

std::vector<NeighborComponent> common_neighbor_decomposition(const SocialGraph& graph, const UserId& u,
                                                             const UserId& v)
{
    graph.user(u);
    graph.user(v);
    if (u == v)
        throw Error(ErrorCode::NotApplicable, "decomposition of '" + u + "' with itself");
    if (graph.adjacent(u, v))
        throw Error(ErrorCode::NotApplicable, "'" + u + "' and '" + v + "' are already friends");

    const auto common = common_neighbors(graph, u, v);
    const std::set<UserId> inside(common.begin(), common.end());
    std::set<UserId> visited;
    std::vector<NeighborComponent> out;
    // `common` is sorted, so components come out ordered by smallest member.
    for (const auto& start : common) {
        if (visited.count(start))
            continue;
        NeighborComponent comp;
        std::size_t degree_sum = 0;
        std::deque<UserId> queue{start};
        visited.insert(start);
        while (!queue.empty()) {
            auto x = queue.front();
            queue.pop_front();
            comp.members.push_back(x);
            for (const auto& y : graph.neighbors(x)) {
                if (!inside.count(y))
                    continue;
                ++degree_sum;
                if (visited.insert(y).second)
                    queue.push_back(y);
            }
        }
        std::sort(comp.members.begin(), comp.members.end());
        comp.vertex_count = comp.members.size();
        comp.edge_count = degree_sum / 2;
        out.push_back(std::move(comp));
    }
    return out;
}

Recommendation network_recommendation(const SocialGraph& graph, const UserId& u, const UserId& v,
                                      const RecommendParams& params)
{
    params.validate();
    auto components = common_neighbor_decomposition(graph, u, v);
    if (components.empty())
        throw Error(ErrorCode::NotApplicable, "'" + u + "' and '" + v + "' share no neighbours");

    double structure = 0.0;
    double neighbor_similarity = 0.0;
    for (const auto& c : components) {
        structure += static_cast<double>(c.vertex_count) * static_cast<double>(c.edge_count + 1);
        for (const auto& j : c.members)
            neighbor_similarity += 0.5 * (similarity(graph, j, u) + similarity(graph, j, v));
    }
    const double E = similarity(graph, u, v);

    Recommendation r;
    r.candidate = v;
    r.phase = RecommendPhase::Network;
    r.similarity = E;
    r.distance_km = graph.distance_km(u, v);
    r.structure_term = structure;
    r.similarity_term = neighbor_similarity + E;
    r.score = params.alpha_net * r.structure_term + (1.0 - params.alpha_net) * r.similarity_term;
    r.components = std::move(components);
    return r;
}

double network_score(const SocialGraph& graph, const UserId& u, const UserId& v, const RecommendParams& params)
{
    return network_recommendation(graph, u, v, params).score;
}

std::set<UserId> region_of(const SocialGraph& graph, const UserId& u, const RecommendParams& params)
{
    std::set<UserId> region{u};
    for (const auto& [v, profile] : graph.users())
        if (v != u && graph.distance_km(u, v) <= params.dist_threshold_km)
            region.insert(v);
    return region;
}

double new_edge_rate(const SocialGraph& graph, const std::set<UserId>& region, Timestamp now,
                     const RecommendParams& params)
{
    std::size_t fresh = 0;
    for (const auto& [key, e] : graph.edges()) {
        if (!region.count(e.a) && !region.count(e.b))
            continue;
        if (e.created_at > now - params.stability_window && e.created_at <= now)
            ++fresh;
    }
    return static_cast<double>(fresh) / static_cast<double>(params.stability_window);
}

RecommendPhase choose_phase(const SocialGraph& graph, const UserId& u, Timestamp now, const RecommendParams& params)
{
    params.validate();
    const auto region = region_of(graph, u, params);
    const bool region_has_edges = std::any_of(graph.edges().begin(), graph.edges().end(), [&](const auto& kv) {
        return region.count(kv.second.a) || region.count(kv.second.b);
    });
    if (!region_has_edges)
        return RecommendPhase::Similarity;
    return new_edge_rate(graph, region, now, params) < params.stability_rate ? RecommendPhase::Network
                                                                             : RecommendPhase::Similarity;
}

std::vector<Recommendation> network_candidates(const SocialGraph& graph, const UserId& u,
                                               const RecommendParams& params)
{
    params.validate();
    const auto& friends = graph.neighbors(u);
    std::set<UserId> two_hop;
    for (const auto& f : friends)
        for (const auto& v : graph.neighbors(f))
            if (v != u && !friends.count(v))
                two_hop.insert(v);

    std::vector<Recommendation> out;
    for (const auto& v : two_hop) {
        if (graph.distance_km(u, v) > params.dist_threshold_km)
            continue;
        out.push_back(network_recommendation(graph, u, v, params));
    }
    rank(out, [](const Recommendation& r) { return r.score; }, params.top_n);
    return out;
}

std::vector<Recommendation> recommend(const SocialGraph& graph, const UserId& u, Timestamp now,
                                      const RecommendParams& params)
{
    graph.user(u);
    return choose_phase(graph, u, now, params) == RecommendPhase::Network ? network_candidates(graph, u, params)
                                                                          : similarity_candidates(graph, u, params);
}

} // namespace tomtalker
