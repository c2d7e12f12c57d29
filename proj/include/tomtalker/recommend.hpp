#pragma once

#include "tomtalker/socialgraph.hpp"

#include <set>
#include <string>
#include <vector>

namespace tomtalker {

struct RecommendParams {
    double sim_threshold = 0.5;       // [0,1]
    double dist_threshold_km = 10.0;  // > 0
    double alpha_net = 0.5;           // [0,1], mixes structure and similarity in the network score
    std::size_t top_n = 10;           // > 0
    Timestamp stability_window = 4;   // > 0, same unit as edge timestamps
    double stability_rate = 0.05;     // new edges per unit time below which the region counts as stable

    void validate() const;
};

enum class RecommendPhase { Similarity, Network };

std::string_view to_string(RecommendPhase phase);

/// A connected component of the subgraph induced on N(u) and N(v).
struct NeighborComponent {
    std::size_t vertex_count = 0;  // n_i
    std::size_t edge_count = 0;    // m_i
    std::vector<UserId> members;   // sorted

    bool operator==(const NeighborComponent&) const = default;
};

struct Recommendation {
    UserId candidate;
    double score = 0.0;
    RecommendPhase phase = RecommendPhase::Similarity;

    // explanation
    double similarity = 0.0;
    double distance_km = 0.0;
    double structure_term = 0.0;   // sum n_i (m_i + 1), network phase only
    double similarity_term = 0.0;  // sum e_j + E, network phase only
    std::vector<NeighborComponent> components;
};

/// Cosine similarity of (preferences ++ attributes), clamped to [0,1].
/// Zero vectors give 0.
double similarity(const SocialGraph& graph, const UserId& u, const UserId& v);

/// Users passing both the similarity and distance gates, excluding `u` and
/// its friends, sorted by similarity desc, distance asc, id asc; at most top_n.
std::vector<Recommendation> similarity_candidates(const SocialGraph& graph, const UserId& u,
                                                  const RecommendParams& params);

/// Components of the common-neighbour subgraph, ordered by smallest member.
/// Throws NotApplicable when u == v or u and v are adjacent.
std::vector<NeighborComponent> common_neighbor_decomposition(const SocialGraph& graph, const UserId& u,
                                                             const UserId& v);

/// S = alpha * sum_i n_i (m_i + 1) + (1 - alpha) * (sum_j e_j + E)
/// with e_j the mean similarity of common neighbour j to u and v and
/// E = similarity(u, v). Throws NotApplicable without common neighbours.
double network_score(const SocialGraph& graph, const UserId& u, const UserId& v, const RecommendParams& params);

/// Same as network_score but returns the full explanation.
Recommendation network_recommendation(const SocialGraph& graph, const UserId& u, const UserId& v,
                                      const RecommendParams& params);

/// Users within dist_threshold_km of `u`, including `u`.
std::set<UserId> region_of(const SocialGraph& graph, const UserId& u, const RecommendParams& params);

/// Edges touching the region created in (now - window, now], per unit time.
double new_edge_rate(const SocialGraph& graph, const std::set<UserId>& region, Timestamp now,
                     const RecommendParams& params);

/// Network phase once the region has edges and its new-edge rate has fallen
/// below stability_rate; similarity phase otherwise.
RecommendPhase choose_phase(const SocialGraph& graph, const UserId& u, Timestamp now, const RecommendParams& params);

/// Network-phase ranking: non-adjacent users with a common neighbour inside
/// the distance gate, by score desc, distance asc, id asc; at most top_n.
std::vector<Recommendation> network_candidates(const SocialGraph& graph, const UserId& u,
                                               const RecommendParams& params);

std::vector<Recommendation> recommend(const SocialGraph& graph, const UserId& u, Timestamp now,
                                      const RecommendParams& params);

} // namespace tomtalker
