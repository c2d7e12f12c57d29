#pragma once

#include "tomtalker/reward_params.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

namespace tomtalker {

using UserId = std::string;
using TaskId = std::string;
using StoreId = std::string;

/// Simulated time in seconds. The simulator uses one unit per week.
using Timestamp = std::int64_t;

struct GeoPoint {
    double latitude = 0.0;   // degrees, [-90, 90]
    double longitude = 0.0;  // degrees, [-180, 180]

    bool operator==(const GeoPoint&) const = default;
};

/// Platform-wide feature dimensions. Every profile carries exactly this many
/// attribute and preference entries.
struct CatalogManifest {
    std::size_t attribute_dim = 0;
    std::size_t preference_dim = 0;

    bool operator==(const CatalogManifest&) const = default;
};

struct UserProfile {
    UserId user_id;
    GeoPoint location;
    std::vector<double> attributes;   // basic information, each in [0,1]
    std::vector<double> preferences;  // item preference scores, each in [0,1]
    std::int64_t collective_activity_count = 0;

    bool operator==(const UserProfile&) const = default;
};

struct SocialEdge {
    UserId a;  // a < b lexicographically
    UserId b;
    std::int64_t finished_task_count = 0;
    double weight = 0.0;  // cached edge_weight(finished_task_count)
    Timestamp created_at = 0;

    const UserId& other(const UserId& u) const { return u == a ? b : a; }

    bool operator==(const SocialEdge&) const = default;
};

struct EventListing {
    std::string event_id;
    std::int64_t capacity = 1;
    Timestamp starts_at = 0;
    Timestamp ends_at = 0;

    bool operator==(const EventListing&) const = default;
};

struct Store {
    StoreId store_id;
    GeoPoint location;
    std::vector<EventListing> events;
    std::vector<std::string> venues;

    bool operator==(const Store&) const = default;
};

enum class TaskStatus { Issued, Completed, Expired };

std::string_view to_string(TaskStatus status);

struct OfflineTask {
    TaskId task_id;
    UserId a;
    UserId b;
    TaskStatus status = TaskStatus::Issued;
    Timestamp issued_at = 0;
    std::optional<Timestamp> expires_at;
    std::optional<Timestamp> completed_at;
    bool self_initiated = false;

    bool operator==(const OfflineTask&) const = default;
};

/// Emitted whenever a task completes; the rewards module subscribes to these.
struct TaskCompleted {
    OfflineTask task;
    SocialEdge edge;
};

double haversine_km(const GeoPoint& p, const GeoPoint& q);

/// Simple undirected weighted graph of users plus the stores and tasks that
/// feed it. Edges exist only between users that finished at least one task
/// together and are created on the first completion.
class SocialGraph {
public:
    using TaskListener = std::function<void(const TaskCompleted&)>;

    SocialGraph() = default;
    explicit SocialGraph(CatalogManifest catalog, RewardParams params = {});

    const CatalogManifest& catalog() const { return catalog_; }
    const RewardParams& reward_params() const { return params_; }

    /// Replaces the parameters and recomputes every cached edge weight.
    void set_reward_params(const RewardParams& params);

    // users
    const UserId& add_user(UserProfile profile);
    bool has_user(const UserId& u) const { return users_.count(u) != 0; }
    const UserProfile& user(const UserId& u) const;
    void record_collective_activity(const UserId& u, std::int64_t count = 1);
    const std::map<UserId, UserProfile>& users() const { return users_; }

    // edges
    /// Creates the edge {u, v} with `finished_tasks` already on it. Throws
    /// SelfEdge, UnknownUser, or DuplicateId when the pair is already linked.
    const SocialEdge& add_edge(const UserId& u, const UserId& v, std::int64_t finished_tasks = 1,
                               Timestamp at = 0);
    const std::set<UserId>& neighbors(const UserId& u) const;
    bool adjacent(const UserId& u, const UserId& v) const;
    const SocialEdge* find_edge(const UserId& u, const UserId& v) const;
    std::vector<const SocialEdge*> incident_edges(const UserId& u) const;
    const std::map<std::pair<UserId, UserId>, SocialEdge>& edges() const { return edges_; }
    std::size_t edge_count() const { return edges_.size(); }

    // stores
    void add_store(Store store);
    const std::map<StoreId, Store>& stores() const { return stores_; }

    // tasks
    const OfflineTask& issue_task(const UserId& u, const UserId& v, Timestamp issued_at,
                                  std::optional<Timestamp> expires_at = std::nullopt);
    /// Completes an issued task. Throws AlreadyCompleted or TaskExpired.
    TaskCompleted complete_task(const TaskId& id, Timestamp at);
    /// Records a user-initiated offline meeting; it counts as a finished task.
    TaskCompleted record_self_initiated(const UserId& u, const UserId& v, Timestamp at);
    /// Marks every issued task whose deadline is before `now` as expired.
    std::size_t expire_tasks(Timestamp now);
    const OfflineTask& task(const TaskId& id) const;
    const std::map<TaskId, OfflineTask>& tasks() const { return tasks_; }

    double distance_km(const UserId& u, const UserId& v) const;

    void subscribe(TaskListener listener) { listeners_.push_back(std::move(listener)); }

    /// Compares the persistent content (not listeners or id counters).
    bool same_content(const SocialGraph& other) const;

    /// Line-delimited text format, one record per line:
    ///
    ///     catalog attributes=<n> preferences=<n>
    ///     params alpha=<x> q1=<x> p1=<x> c1=<x>
    ///     user id=<id> lat=<deg> lon=<deg> w=<n> attributes=<x,...> preferences=<x,...>
    ///     edge a=<id> b=<id> m=<n> created_at=<t> [omega=<x>]
    ///     store id=<id> lat=<deg> lon=<deg> events=<id:cap:start:end;...> venues=<v;...>
    ///     task id=<id> a=<id> b=<id> status=<s> issued_at=<t> [expires_at=<t>] [completed_at=<t>] [self=1]
    ///
    /// Keys appear in exactly this order. Blank lines and lines starting with
    /// '#' are skipped. `omega` is informational; it is recomputed on load.
    void save(std::ostream& out) const;
    static SocialGraph load(std::istream& in);
    void save_file(const std::string& path) const;
    static SocialGraph load_file(const std::string& path);

private:
    UserProfile& mutable_user(const UserId& u);
    SocialEdge& bump_edge(const UserId& u, const UserId& v, Timestamp at);
    TaskCompleted finish(OfflineTask& task, Timestamp at);
    void validate_profile(const UserProfile& p) const;
    std::string next_task_id();

    CatalogManifest catalog_;
    RewardParams params_;
    std::map<UserId, UserProfile> users_;
    std::map<UserId, std::set<UserId>> adjacency_;
    std::map<std::pair<UserId, UserId>, SocialEdge> edges_;
    std::map<StoreId, Store> stores_;
    std::map<TaskId, OfflineTask> tasks_;
    std::uint64_t task_counter_ = 0;
    std::vector<TaskListener> listeners_;
};

/// Single-writer, many-reader holder. Readers take an immutable snapshot;
/// writers are serialized and publish a new snapshot on completion.
class GraphStore {
public:
    explicit GraphStore(SocialGraph graph);

    std::shared_ptr<const SocialGraph> snapshot() const;

    /// Runs `fn` on a private copy and publishes it if `fn` returns normally.
    template <typename Fn>
    auto mutate(Fn&& fn)
    {
        std::lock_guard writer(write_mutex_);
        auto next = std::make_shared<SocialGraph>(*snapshot());
        if constexpr (std::is_void_v<decltype(fn(*next))>) {
            fn(*next);
            publish(std::move(next));
        } else {
            auto result = fn(*next);
            publish(std::move(next));
            return result;
        }
    }

private:
    void publish(std::shared_ptr<const SocialGraph> next);

    mutable std::mutex read_mutex_;
    std::mutex write_mutex_;
    std::shared_ptr<const SocialGraph> current_;
};

} // namespace tomtalker
