#include "tomtalker/rewards.hpp"

#include "tomtalker/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace tomtalker {

using nlohmann::json;

std::string_view to_string(RewardCategory category)
{
    switch (category) {
    case RewardCategory::CompleteMission: return "complete_mission";
    case RewardCategory::SurpriseCollective: return "surprise_collective";
    case RewardCategory::AchievementBased: return "achievement_based";
    case RewardCategory::Offline: return "offline";
    }
    return "complete_mission";
}

RewardCategory parse_reward_category(std::string_view s)
{
    if (s == "complete_mission") return RewardCategory::CompleteMission;
    if (s == "surprise_collective") return RewardCategory::SurpriseCollective;
    if (s == "achievement_based") return RewardCategory::AchievementBased;
    if (s == "offline") return RewardCategory::Offline;
    throw Error(ErrorCode::InvalidParams, "unknown reward category '" + std::string(s) + "'");
}

std::string_view to_string(RewardKind kind)
{
    switch (kind) {
    case RewardKind::VirtualProp: return "prop";
    case RewardKind::Physical: return "physical";
    case RewardKind::Badge: return "badge";
    }
    return "prop";
}

namespace {

RewardKind parse_kind(const std::string& s)
{
    if (s == "prop") return RewardKind::VirtualProp;
    if (s == "physical") return RewardKind::Physical;
    if (s == "badge") return RewardKind::Badge;
    throw Error(ErrorCode::InvalidParams, "unknown reward kind '" + s + "'");
}

void validate_milestones(const std::vector<Milestone>& ms, const char* what)
{
    std::set<std::int64_t> seen;
    for (const auto& m : ms) {
        if (m.threshold <= 0)
            throw Error(ErrorCode::InvalidParams, std::string(what) + " thresholds must be positive");
        if (m.badge.empty())
            throw Error(ErrorCode::InvalidParams, std::string(what) + " badge names must be non-empty");
        if (!seen.insert(m.threshold).second)
            throw Error(ErrorCode::InvalidParams, std::string(what) + " thresholds must be distinct");
    }
}

} // namespace

bool UserLedger::has_badge(const std::string& badge) const
{
    return std::any_of(achievements.begin(), achievements.end(),
                       [&](const Achievement& a) { return a.badge == badge; });
}

void RewardConfig::validate() const
{
    params.validate();
    if (mission_prop.empty())
        throw Error(ErrorCode::InvalidParams, "mission_prop must be non-empty");
    double total = 0.0;
    for (const auto& e : surprise) {
        if (!(e.probability >= 0.0 && e.probability <= 1.0))
            throw Error(ErrorCode::InvalidParams, "surprise probability out of [0,1] for '" + e.item + "'");
        if (e.item.empty() || e.kind == RewardKind::Badge)
            throw Error(ErrorCode::InvalidParams, "surprise entries must name a prop or physical item");
        total += e.probability;
    }
    if (total > 1.0 + 1e-12)
        throw Error(ErrorCode::InvalidParams, "surprise probabilities sum above 1");
    validate_milestones(task_milestones, "task milestone");
    validate_milestones(pet_age_milestones, "pet age milestone");
}

RewardConfig RewardConfig::defaults()
{
    RewardConfig c;
    c.params = RewardParams{0.5, 1.0, 1.0, 5.0};
    c.mission_prop = "ration";
    c.surprise = {{"bone", RewardKind::VirtualProp, 0.2}, {"toy-ball", RewardKind::Physical, 0.05}};
    c.task_milestones = {{1, "first-task"}, {10, "10-tasks"}, {50, "50-tasks"}};
    c.pet_age_milestones = {{30, "1-month"}, {365, "1-year"}};
    return c;
}

RewardConfig RewardConfig::from_json_text(const std::string& text)
{
    RewardConfig c = defaults();
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Malformed, std::string("reward config: ") + e.what());
    }
    try {
        if (j.contains("alpha")) c.params.alpha = j.at("alpha").get<double>();
        if (j.contains("q1")) c.params.q1 = j.at("q1").get<double>();
        if (j.contains("p1")) c.params.p1 = j.at("p1").get<double>();
        if (j.contains("c1")) c.params.c1 = j.at("c1").get<double>();
        if (j.contains("mission_prop")) c.mission_prop = j.at("mission_prop").get<std::string>();
        if (j.contains("surprise")) {
            c.surprise.clear();
            for (const auto& e : j.at("surprise"))
                c.surprise.push_back({e.at("item").get<std::string>(), parse_kind(e.value("kind", "prop")),
                                      e.at("probability").get<double>()});
        }
        if (j.contains("task_milestones")) {
            c.task_milestones.clear();
            for (const auto& e : j.at("task_milestones"))
                c.task_milestones.push_back({e.at("count").get<std::int64_t>(), e.at("badge").get<std::string>()});
        }
        if (j.contains("pet_age_milestones")) {
            c.pet_age_milestones.clear();
            for (const auto& e : j.at("pet_age_milestones"))
                c.pet_age_milestones.push_back({e.at("days").get<std::int64_t>(), e.at("badge").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Malformed, std::string("reward config: ") + e.what());
    }
    c.validate();
    return c;
}

RewardConfig RewardConfig::load_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open reward config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string RewardConfig::to_json_text() const
{
    json j;
    j["alpha"] = params.alpha;
    j["q1"] = params.q1;
    j["p1"] = params.p1;
    j["c1"] = params.c1;
    j["mission_prop"] = mission_prop;
    j["surprise"] = json::array();
    for (const auto& e : surprise)
        j["surprise"].push_back({{"item", e.item}, {"kind", to_string(e.kind)}, {"probability", e.probability}});
    j["task_milestones"] = json::array();
    for (const auto& m : task_milestones)
        j["task_milestones"].push_back({{"count", m.threshold}, {"badge", m.badge}});
    j["pet_age_milestones"] = json::array();
    for (const auto& m : pet_age_milestones)
        j["pet_age_milestones"].push_back({{"days", m.threshold}, {"badge", m.badge}});
    return j.dump(2);
}

double total_reward(std::span<const double> edge_weights, std::int64_t activity_count, double alpha)
{
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw Error(ErrorCode::InvalidParams, "alpha must lie in [0,1]");
    double sum = 0.0;
    for (double w : edge_weights)
        sum += w;
    return alpha * sum + (1.0 - alpha) * static_cast<double>(activity_count);
}

double total_reward(const SocialGraph& graph, const UserId& u, const RewardParams& params)
{
    params.validate();
    const auto& profile = graph.user(u);
    std::vector<double> weights;
    for (const auto* e : graph.incident_edges(u))
        weights.push_back(edge_weight(e->finished_task_count, params));
    return total_reward(weights, profile.collective_activity_count, params.alpha);
}

RewardEngine::RewardEngine(RewardConfig config) : config_(std::move(config))
{
    config_.validate();
}

RewardConfig RewardEngine::config() const
{
    std::lock_guard lock(mutex_);
    return config_;
}

void RewardEngine::reload(RewardConfig config)
{
    config.validate();
    std::lock_guard lock(mutex_);
    config_ = std::move(config);
}

void RewardEngine::set_alpha(double alpha)
{
    std::lock_guard lock(mutex_);
    auto next = config_;
    next.params.alpha = alpha;
    next.validate();
    config_ = std::move(next);
}

void RewardEngine::register_user(const UserId& u)
{
    std::lock_guard lock(mutex_);
    ledgers_[u];
}

bool RewardEngine::has_user(const UserId& u) const
{
    std::lock_guard lock(mutex_);
    return ledgers_.count(u) != 0;
}

UserLedger& RewardEngine::mutable_ledger(const UserId& u)
{
    auto it = ledgers_.find(u);
    if (it == ledgers_.end())
        throw Error(ErrorCode::UnknownUser, "'" + u + "' has no reward ledger");
    return it->second;
}

RewardEvent RewardEngine::append(const UserId& u, RewardCategory category, RewardPayload payload, Timestamp at)
{
    auto& ledger = mutable_ledger(u);
    RewardEvent ev{++sequence_, u, category, std::move(payload), at};
    switch (ev.payload.kind) {
    case RewardKind::VirtualProp: ledger.virtual_props.insert(ev.payload.item); break;
    case RewardKind::Physical: ledger.physical_rewards.push_back(ev.payload.item); break;
    case RewardKind::Badge: ledger.achievements.push_back({ev.payload.item, at}); break;
    }
    ledger.history.push_back(ev);
    return ev;
}

RewardEvent RewardEngine::grant(const UserId& u, RewardCategory category, RewardPayload payload, Timestamp at)
{
    if (payload.item.empty())
        throw Error(ErrorCode::InvalidParams, "reward payload needs an item");
    std::lock_guard lock(mutex_);
    return append(u, category, std::move(payload), at);
}

std::vector<RewardEvent> RewardEngine::on_task_completed(const TaskCompleted& event)
{
    std::lock_guard lock(mutex_);
    mutable_ledger(event.task.a);
    mutable_ledger(event.task.b);
    const Timestamp at = event.task.completed_at.value_or(event.task.issued_at);
    std::vector<RewardEvent> out;
    for (const auto& u : {event.task.a, event.task.b}) {
        auto& ledger = mutable_ledger(u);
        ledger.completed_tasks += 1;
        if (!event.task.self_initiated)
            out.push_back(append(u, RewardCategory::CompleteMission,
                                 {RewardKind::VirtualProp, config_.mission_prop, event.task.task_id}, at));
        for (const auto& m : config_.task_milestones) {
            if (ledger.completed_tasks >= m.threshold && !ledger.has_badge(m.badge))
                out.push_back(append(u, RewardCategory::AchievementBased,
                                     {RewardKind::Badge, m.badge, event.task.task_id}, at));
        }
    }
    return out;
}

std::optional<RewardEvent> RewardEngine::outdoor_tick(const UserId& u, Rng& rng, Timestamp at)
{
    std::lock_guard lock(mutex_);
    mutable_ledger(u);
    const double r = rng.uniform();
    double acc = 0.0;
    for (const auto& e : config_.surprise) {
        acc += e.probability;
        if (r < acc)
            return append(u, RewardCategory::SurpriseCollective, {e.kind, e.item, "outdoor"}, at);
    }
    return std::nullopt;
}

std::vector<RewardEvent> RewardEngine::set_pet_age(const UserId& u, std::int64_t days, Timestamp at)
{
    std::lock_guard lock(mutex_);
    auto& ledger = mutable_ledger(u);
    ledger.pet_age_days = std::max(ledger.pet_age_days, days);
    std::vector<RewardEvent> out;
    for (const auto& m : config_.pet_age_milestones) {
        if (ledger.pet_age_days >= m.threshold && !ledger.has_badge(m.badge))
            out.push_back(append(u, RewardCategory::AchievementBased, {RewardKind::Badge, m.badge, "pet-age"}, at));
    }
    return out;
}

UserLedger RewardEngine::ledger(const UserId& u) const
{
    std::lock_guard lock(mutex_);
    auto it = ledgers_.find(u);
    if (it == ledgers_.end())
        throw Error(ErrorCode::UnknownUser, "'" + u + "' has no reward ledger");
    return it->second;
}

bool RewardEngine::consistent() const
{
    std::lock_guard lock(mutex_);
    for (const auto& [u, ledger] : ledgers_) {
        std::multiset<std::string> from_history;
        std::uint64_t last = 0;
        for (const auto& ev : ledger.history) {
            if (ev.sequence <= last)
                return false;
            last = ev.sequence;
            if (ev.payload.kind == RewardKind::VirtualProp)
                from_history.insert(ev.payload.item);
        }
        if (from_history != ledger.virtual_props)
            return false;
    }
    return true;
}

} // namespace tomtalker
