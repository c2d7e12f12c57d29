#pragma once

#include "tomtalker/random.hpp"
#include "tomtalker/reward_params.hpp"
#include "tomtalker/socialgraph.hpp"

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace tomtalker {

enum class RewardCategory { CompleteMission, SurpriseCollective, AchievementBased, Offline };

std::string_view to_string(RewardCategory category);
RewardCategory parse_reward_category(std::string_view s);

enum class RewardKind { VirtualProp, Physical, Badge };

std::string_view to_string(RewardKind kind);

struct RewardPayload {
    RewardKind kind = RewardKind::VirtualProp;
    std::string item;    // prop id, physical item name, or badge name
    std::string source;  // task id, event id, or empty
};

struct RewardEvent {
    std::uint64_t sequence = 0;  // global, strictly increasing
    UserId user;
    RewardCategory category = RewardCategory::CompleteMission;
    RewardPayload payload;
    Timestamp at = 0;
};

struct Achievement {
    std::string badge;
    Timestamp earned_at = 0;
};

struct UserLedger {
    std::multiset<std::string> virtual_props;
    std::vector<std::string> physical_rewards;
    std::vector<Achievement> achievements;
    std::vector<RewardEvent> history;  // append-only
    std::int64_t completed_tasks = 0;
    std::int64_t pet_age_days = 0;

    bool has_badge(const std::string& badge) const;
};

struct SurpriseEntry {
    std::string item;
    RewardKind kind = RewardKind::VirtualProp;
    double probability = 0.0;
};

struct Milestone {
    std::int64_t threshold = 0;
    std::string badge;
};

/// Declarative reward configuration, loaded from JSON:
///
///     {
///       "alpha": 0.5, "q1": 1.0, "p1": 1.0, "c1": 5.0,
///       "mission_prop": "ration",
///       "surprise": [{"item": "bone", "kind": "prop", "probability": 0.3}],
///       "task_milestones": [{"count": 10, "badge": "10-tasks"}],
///       "pet_age_milestones": [{"days": 30, "badge": "1-month"}]
///     }
///
/// Surprise probabilities must sum to at most 1; the remainder is "nothing".
struct RewardConfig {
    RewardParams params;
    std::string mission_prop = "ration";
    std::vector<SurpriseEntry> surprise;
    std::vector<Milestone> task_milestones;
    std::vector<Milestone> pet_age_milestones;

    void validate() const;

    static RewardConfig defaults();
    static RewardConfig from_json_text(const std::string& text);
    static RewardConfig load_file(const std::string& path);
    std::string to_json_text() const;
};

/// R = alpha * sum(weights) + (1 - alpha) * activity_count.
double total_reward(std::span<const double> edge_weights, std::int64_t activity_count, double alpha);

/// Total reward of `u`, with edge weights evaluated under `params`.
double total_reward(const SocialGraph& graph, const UserId& u, const RewardParams& params);

/// Per-user reward bookkeeping. All mutations go through one mutex, so the
/// history of every user is serialized; readers get copies.
class RewardEngine {
public:
    explicit RewardEngine(RewardConfig config = RewardConfig::defaults());

    RewardConfig config() const;
    void reload(RewardConfig config);
    void set_alpha(double alpha);

    void register_user(const UserId& u);
    bool has_user(const UserId& u) const;

    RewardEvent grant(const UserId& u, RewardCategory category, RewardPayload payload, Timestamp at);

    /// Mission props for platform tasks plus any task-count badges, for both
    /// participants. Self-initiated meetings count toward badges only.
    std::vector<RewardEvent> on_task_completed(const TaskCompleted& event);

    /// One draw from the surprise table for a user who is outdoors.
    std::optional<RewardEvent> outdoor_tick(const UserId& u, Rng& rng, Timestamp at);

    /// Advances the pet age and awards any age badges crossed.
    std::vector<RewardEvent> set_pet_age(const UserId& u, std::int64_t days, Timestamp at);

    UserLedger ledger(const UserId& u) const;

    /// Every prop in every multiset is backed by a history event.
    bool consistent() const;

private:
    RewardEvent append(const UserId& u, RewardCategory category, RewardPayload payload, Timestamp at);
    UserLedger& mutable_ledger(const UserId& u);

    mutable std::mutex mutex_;
    RewardConfig config_;
    std::map<UserId, UserLedger> ledgers_;
    std::uint64_t sequence_ = 0;
};

} // namespace tomtalker
