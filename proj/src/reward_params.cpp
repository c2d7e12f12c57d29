#include "tomtalker/reward_params.hpp"

#include "tomtalker/error.hpp"

#include <cmath>
#include <string>

namespace tomtalker {

void RewardParams::validate() const
{
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw Error(ErrorCode::InvalidParams, "alpha must lie in [0,1], got " + std::to_string(alpha));
    if (!(q1 > 0.0) || !std::isfinite(q1))
        throw Error(ErrorCode::InvalidParams, "q1 must be positive, got " + std::to_string(q1));
    if (!(p1 > 0.0) || !std::isfinite(p1))
        throw Error(ErrorCode::InvalidParams, "p1 must be positive, got " + std::to_string(p1));
    if (!(c1 >= 0.0) || !std::isfinite(c1))
        throw Error(ErrorCode::InvalidParams, "c1 must be non-negative, got " + std::to_string(c1));
}

double edge_weight(std::int64_t m, const RewardParams& params)
{
    params.validate();
    if (m < 0)
        throw Error(ErrorCode::InvalidParams, "task count must be non-negative");
    const double x = params.p1 * (static_cast<double>(m) - params.c1);
    return params.q1 / (1.0 + std::exp(-x));
}

} // namespace tomtalker
