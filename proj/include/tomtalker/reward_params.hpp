#pragma once

#include <cstdint>

namespace tomtalker {

/// Parameters of the reward model.
///
/// Edge weights follow a logistic growth curve in the number of finished
/// offline tasks `m` between two users:
///
///     omega(m) = q1 / (1 + exp(-p1 * (m - c1)))
///
/// and a user's total reward mixes the sum of incident edge weights with the
/// count of collective activities `w`:
///
///     R = alpha * sum(omega) + (1 - alpha) * w
struct RewardParams {
    double alpha = 0.5;  // [0, 1]
    double q1 = 1.0;     // ceiling, > 0
    double p1 = 1.0;     // steepness, > 0
    double c1 = 5.0;     // inflection point in tasks, >= 0

    // Throws Error{InvalidParams}.
    void validate() const;

    bool operator==(const RewardParams&) const = default;
};

/// Logistic edge weight for `m` finished tasks. Throws on invalid q1/p1/c1.
double edge_weight(std::int64_t m, const RewardParams& params);

} // namespace tomtalker
