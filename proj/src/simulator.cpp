#include "tomtalker/simulator.hpp"

#include "tomtalker/error.hpp"

#include "json_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

namespace tomtalker::sim {

using nlohmann::json;

std::string_view to_string(LonelinessBand band)
{
    switch (band) {
    case LonelinessBand::Low: return "low";
    case LonelinessBand::Moderate: return "moderate";
    case LonelinessBand::ModeratelyHigh: return "moderately-high";
    case LonelinessBand::High: return "high";
    }
    return "high";
}

void LonelinessMapping::validate() const
{
    if (!(time_ref_hours > 0.0) || !(circle_ref > 0.0))
        throw Error(ErrorCode::InvalidParams, "loneliness reference values must be positive");
    if (!(thresholds[0] < thresholds[1] && thresholds[1] < thresholds[2]))
        throw Error(ErrorCode::InvalidParams, "loneliness thresholds must be strictly ascending");
}

double loneliness_score(const AgentTraits& agent, const LonelinessMapping& mapping)
{
    const double time = std::min(std::max(agent.weekly_social_time, 0.0) / mapping.time_ref_hours, 1.0);
    const double circle = std::min(static_cast<double>(agent.circle_size) / mapping.circle_ref, 1.0);
    return 1.0 - (0.5 * time + 0.5 * circle);
}

LonelinessBand loneliness_proxy(const AgentTraits& agent, const LonelinessMapping& mapping)
{
    mapping.validate();
    const double score = loneliness_score(agent, mapping);
    if (score <= mapping.thresholds[0])
        return LonelinessBand::Low;
    if (score <= mapping.thresholds[1])
        return LonelinessBand::Moderate;
    if (score <= mapping.thresholds[2])
        return LonelinessBand::ModeratelyHigh;
    return LonelinessBand::High;
}

void SimConfig::validate() const
{
    if (treatment_size + control_size != population)
        throw Error(ErrorCode::InvalidParams, "group sizes must sum to the population");
    if (treatment_size != control_size)
        throw Error(ErrorCode::InvalidParams, "the paired design needs equal group sizes");
    if (treatment_size < 2)
        throw Error(ErrorCode::InvalidParams, "each group needs at least two agents");
    if (!(area_radius_km > 0.0))
        throw Error(ErrorCode::InvalidParams, "area radius must be positive");
    if (attribute_dim + preference_dim == 0)
        throw Error(ErrorCode::InvalidParams, "profiles need at least one feature");
    for (double x : {initial_friends_mean, base_hours, organic_hours, hours_per_friend, task_hours, reward_sensitivity})
        if (!(x >= 0.0) || !std::isfinite(x))
            throw Error(ErrorCode::InvalidParams, "behaviour parameters must be non-negative");
    if (!(organic_rate >= 0.0 && organic_rate <= 1.0))
        throw Error(ErrorCode::InvalidParams, "organic_rate must lie in [0,1]");
    reward.validate();
    recommend.validate();
    loneliness.validate();
}

SimConfig SimConfig::defaults()
{
    SimConfig c;
    c.recommend.sim_threshold = 0.7;
    c.recommend.dist_threshold_km = 5.0;
    c.recommend.alpha_net = 0.5;
    c.recommend.top_n = 5;
    c.recommend.stability_window = 4;
    c.recommend.stability_rate = 0.5;
    return c;
}

using detail::read_field;

SimConfig SimConfig::from_json_text(const std::string& text)
{
    SimConfig c = defaults();
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Malformed, std::string("sim config: ") + e.what());
    }
    try {
        read_field(j, "population", c.population);
        if (j.contains("population") && !j.contains("treatment_size") && !j.contains("control_size")) {
            c.treatment_size = c.population / 2;
            c.control_size = c.population - c.treatment_size;
        }
        read_field(j, "treatment_size", c.treatment_size);
        read_field(j, "control_size", c.control_size);
        read_field(j, "weeks", c.weeks);
        read_field(j, "tasks_per_week", c.tasks_per_week);
        read_field(j, "seed", c.seed);
        read_field(j, "center_latitude", c.center_latitude);
        read_field(j, "center_longitude", c.center_longitude);
        read_field(j, "area_radius_km", c.area_radius_km);
        read_field(j, "attribute_dim", c.attribute_dim);
        read_field(j, "preference_dim", c.preference_dim);
        read_field(j, "initial_friends_mean", c.initial_friends_mean);
        read_field(j, "base_hours", c.base_hours);
        read_field(j, "organic_rate", c.organic_rate);
        read_field(j, "organic_hours", c.organic_hours);
        read_field(j, "hours_per_friend", c.hours_per_friend);
        read_field(j, "task_hours", c.task_hours);
        read_field(j, "reward_sensitivity", c.reward_sensitivity);
        if (j.contains("reward"))
            c.reward = RewardConfig::from_json_text(j.at("reward").dump());
        if (j.contains("recommend"))
            detail::read_recommend(j.at("recommend"), c.recommend);
        if (j.contains("loneliness")) {
            const auto& l = j.at("loneliness");
            read_field(l, "time_ref_hours", c.loneliness.time_ref_hours);
            read_field(l, "circle_ref", c.loneliness.circle_ref);
            read_field(l, "thresholds", c.loneliness.thresholds);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Malformed, std::string("sim config: ") + e.what());
    }
    c.validate();
    return c;
}

SimConfig SimConfig::load_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open sim config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string SimConfig::to_json_text() const
{
    json j;
    j["population"] = population;
    j["treatment_size"] = treatment_size;
    j["control_size"] = control_size;
    j["weeks"] = weeks;
    j["tasks_per_week"] = tasks_per_week;
    j["seed"] = seed;
    j["center_latitude"] = center_latitude;
    j["center_longitude"] = center_longitude;
    j["area_radius_km"] = area_radius_km;
    j["attribute_dim"] = attribute_dim;
    j["preference_dim"] = preference_dim;
    j["initial_friends_mean"] = initial_friends_mean;
    j["base_hours"] = base_hours;
    j["organic_rate"] = organic_rate;
    j["organic_hours"] = organic_hours;
    j["hours_per_friend"] = hours_per_friend;
    j["task_hours"] = task_hours;
    j["reward_sensitivity"] = reward_sensitivity;
    j["reward"] = json::parse(reward.to_json_text());
    j["recommend"] = detail::recommend_json(recommend);
    j["loneliness"] = {{"time_ref_hours", loneliness.time_ref_hours},
                       {"circle_ref", loneliness.circle_ref},
                       {"thresholds", loneliness.thresholds}};
    return j.dump(2);
}

namespace {

// Stream tags keep the random draws of different purposes independent.
enum StreamTag : std::uint64_t { kProfile = 1, kInitialEdges = 2, kWeekly = 3, kTasks = 4 };

constexpr std::size_t kInterestClusters = 4;

struct PairProfile {
    GeoPoint location;
    std::vector<double> attributes;
    std::vector<double> preferences;
    double sociability = 0.0;
    double responsiveness = 0.0;
};

PairProfile draw_profile(const SimConfig& c, std::size_t pair)
{
    auto rng = Rng::stream(c.seed, {kProfile, pair});
    PairProfile p;
    const double r = c.area_radius_km * std::sqrt(rng.uniform());
    const double theta = 2.0 * std::numbers::pi * rng.uniform();
    constexpr double km_per_degree = 111.32;
    p.location.latitude = c.center_latitude + r * std::cos(theta) / km_per_degree;
    p.location.longitude = c.center_longitude + r * std::sin(theta) /
                                                    (km_per_degree * std::cos(c.center_latitude * std::numbers::pi / 180.0));
    p.location.latitude = std::clamp(p.location.latitude, -90.0, 90.0);
    p.location.longitude = std::clamp(p.location.longitude, -180.0, 180.0);

    // Preferences cluster around one of a few interest prototypes.
    const auto cluster = rng.below(kInterestClusters);
    p.preferences.resize(c.preference_dim);
    for (std::size_t i = 0; i < c.preference_dim; ++i) {
        const double proto = (i % kInterestClusters == cluster) ? 0.9 : 0.15;
        p.preferences[i] = std::clamp(proto + 0.1 * rng.normal(), 0.0, 1.0);
    }
    p.attributes.resize(c.attribute_dim);
    for (auto& a : p.attributes)
        a = rng.uniform();
    p.sociability = rng.uniform();
    p.responsiveness = rng.uniform();
    return p;
}

std::string arm_id(char arm, std::size_t pair)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%c%04zu", arm, pair);
    return buf;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Arm {
    char prefix;
    SocialGraph graph;
    std::vector<UserId> ids;
    std::map<UserId, std::size_t> pair_of;
    std::vector<double> hours;
    std::vector<double> weekly_time;
    ArmMetrics metrics;

    Arm(char p, const SimConfig& c, const std::vector<PairProfile>& profiles)
        : prefix(p), graph(CatalogManifest{c.attribute_dim, c.preference_dim}, c.reward.params)
    {
        for (std::size_t i = 0; i < profiles.size(); ++i) {
            UserProfile u;
            u.user_id = arm_id(prefix, i);
            u.location = profiles[i].location;
            u.attributes = profiles[i].attributes;
            u.preferences = profiles[i].preferences;
            graph.add_user(u);
            ids.push_back(u.user_id);
            pair_of[u.user_id] = i;
        }
        hours.assign(profiles.size(), 0.0);
        weekly_time.assign(profiles.size(), 0.0);
    }

    std::size_t circle(std::size_t i) const { return graph.neighbors(ids[i]).size(); }

    double mean_circle() const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < ids.size(); ++i)
            s += static_cast<double>(circle(i));
        return s / static_cast<double>(ids.size());
    }

    double mean_time() const
    {
        double s = 0.0;
        for (double t : weekly_time)
            s += t;
        return s / static_cast<double>(weekly_time.size());
    }

    void close_week(const SimConfig& c)
    {
        for (std::size_t i = 0; i < ids.size(); ++i)
            weekly_time[i] = hours[i] + c.hours_per_friend * static_cast<double>(circle(i));
        metrics.mean_weekly_social_time.push_back(mean_time());
        metrics.mean_circle_size.push_back(mean_circle());
    }

    void tally_loneliness(const SimConfig& c, const std::vector<PairProfile>& profiles)
    {
        metrics.loneliness.fill(0);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            AgentTraits a{profiles[i].sociability, profiles[i].responsiveness, weekly_time[i], circle(i)};
            metrics.loneliness[static_cast<std::size_t>(loneliness_proxy(a, c.loneliness))] += 1;
        }
    }
};

std::size_t other_pair(Rng& rng, std::size_t self, std::size_t pairs)
{
    auto q = static_cast<std::size_t>(rng.below(pairs - 1));
    return q >= self ? q + 1 : q;
}

} // namespace

SimMetrics run(const SimConfig& config)
{
    config.validate();
    const std::size_t pairs = config.treatment_size;

    std::vector<PairProfile> profiles;
    profiles.reserve(pairs);
    for (std::size_t i = 0; i < pairs; ++i)
        profiles.push_back(draw_profile(config, i));

    Arm control('c', config, profiles);
    Arm treatment('t', config, profiles);
    Arm* arms[] = {&control, &treatment};

    RewardEngine rewards(config.reward);
    for (const auto& id : treatment.ids)
        rewards.register_user(id);
    treatment.graph.subscribe([&rewards](const TaskCompleted& ev) { rewards.on_task_completed(ev); });

    // Pre-existing friendships, identical in both arms.
    const auto max_initial = static_cast<std::uint64_t>(std::llround(2.0 * config.initial_friends_mean));
    for (std::size_t p = 0; p < pairs; ++p) {
        auto rng = Rng::stream(config.seed, {kInitialEdges, p});
        const auto n = rng.below(max_initial + 1);
        for (std::uint64_t k = 0; k < n; ++k) {
            const auto q = other_pair(rng, p, pairs);
            const auto m = static_cast<std::int64_t>(1 + rng.below(3));
            for (auto* arm : arms)
                if (!arm->graph.adjacent(arm->ids[p], arm->ids[q]))
                    arm->graph.add_edge(arm->ids[p], arm->ids[q], m, 0);
        }
    }

    for (auto* arm : arms) {
        for (std::size_t i = 0; i < pairs; ++i)
            arm->weekly_time[i] =
                config.base_hours * profiles[i].sociability + config.hours_per_friend * static_cast<double>(arm->circle(i));
        arm->metrics.initial_mean_circle_size = arm->mean_circle();
        arm->metrics.initial_mean_social_time = arm->mean_time();
    }

    const double alpha = config.reward.params.alpha;
    for (std::size_t week = 1; week <= config.weeks; ++week) {
        const auto now = static_cast<Timestamp>(week);
        for (auto* arm : arms)
            std::fill(arm->hours.begin(), arm->hours.end(), 0.0);

        // Base behaviour: same draws, same order, both arms.
        for (std::size_t p = 0; p < pairs; ++p) {
            auto rng = Rng::stream(config.seed, {kWeekly, week, p});
            const double base = config.base_hours * profiles[p].sociability * (0.75 + 0.5 * rng.uniform());
            const bool meets = rng.uniform() < config.organic_rate * profiles[p].sociability;
            const auto q = other_pair(rng, p, pairs);
            for (auto* arm : arms) {
                arm->hours[p] += base;
                if (meets) {
                    arm->graph.record_self_initiated(arm->ids[p], arm->ids[q], now);
                    arm->hours[p] += config.organic_hours;
                    arm->hours[q] += config.organic_hours;
                }
            }
        }

        // Platform tasks, treatment arm only.
        if (config.tasks_per_week > 0) {
            for (std::size_t p = 0; p < pairs; ++p) {
                const auto& u = treatment.ids[p];
                const auto recs = recommend(treatment.graph, u, now, config.recommend);
                for (std::size_t t = 0; t < config.tasks_per_week; ++t) {
                    auto rng = Rng::stream(config.seed, {kTasks, week, p, t});
                    const double draw = rng.uniform();
                    if (t >= recs.size())
                        continue;
                    const auto& v = recs[t].candidate;
                    const auto* edge = treatment.graph.find_edge(u, v);
                    const std::int64_t m = edge ? edge->finished_task_count : 0;
                    const double before = edge ? edge->weight : 0.0;
                    const double gain = alpha * (edge_weight(m + 1, config.reward.params) - before);
                    const double accept = profiles[p].responsiveness * sigmoid(config.reward_sensitivity * gain);
                    if (draw >= accept)
                        continue;
                    const auto task_id = treatment.graph.issue_task(u, v, now, now).task_id;
                    treatment.graph.complete_task(task_id, now);
                    const auto q = treatment.pair_of.at(v);
                    treatment.hours[p] += config.task_hours;
                    treatment.hours[q] += config.task_hours;
                    treatment.metrics.tasks_accepted += 1;
                    rewards.outdoor_tick(u, rng, now);
                    rewards.outdoor_tick(v, rng, now);
                }
            }
        }

        for (auto* arm : arms)
            arm->close_week(config);
    }

    for (auto* arm : arms)
        arm->tally_loneliness(config, profiles);
    return SimMetrics{control.metrics, treatment.metrics};
}

void write_metrics_jsonl(std::ostream& out, const SimMetrics& metrics)
{
    const std::pair<const char*, const ArmMetrics*> arms[] = {{"control", &metrics.control},
                                                              {"treatment", &metrics.treatment}};
    for (const auto& [name, arm] : arms) {
        out << json{{"v", 1}, {"arm", name}, {"week", 0}, {"mean_weekly_social_time", arm->initial_mean_social_time},
                    {"mean_circle_size", arm->initial_mean_circle_size}}
                   .dump()
            << '\n';
        for (std::size_t w = 0; w < arm->mean_circle_size.size(); ++w)
            out << json{{"v", 1}, {"arm", name}, {"week", w + 1},
                        {"mean_weekly_social_time", arm->mean_weekly_social_time[w]},
                        {"mean_circle_size", arm->mean_circle_size[w]}}
                       .dump()
                << '\n';
    }
    for (const auto& [name, arm] : arms) {
        json bands;
        for (std::size_t b = 0; b < kBandCount; ++b)
            bands[std::string(to_string(static_cast<LonelinessBand>(b)))] = arm->loneliness[b];
        out << json{{"v", 1}, {"arm", name}, {"loneliness", bands}, {"tasks_accepted", arm->tasks_accepted}}.dump()
            << '\n';
    }
}

void write_metrics_csv(std::ostream& out, const SimMetrics& metrics)
{
    out << "week,control_social_time,treatment_social_time,control_circle_size,treatment_circle_size\n";
    out << 0 << ',' << metrics.control.initial_mean_social_time << ',' << metrics.treatment.initial_mean_social_time
        << ',' << metrics.control.initial_mean_circle_size << ',' << metrics.treatment.initial_mean_circle_size << '\n';
    for (std::size_t w = 0; w < metrics.control.mean_circle_size.size(); ++w)
        out << w + 1 << ',' << metrics.control.mean_weekly_social_time[w] << ','
            << metrics.treatment.mean_weekly_social_time[w] << ',' << metrics.control.mean_circle_size[w] << ','
            << metrics.treatment.mean_circle_size[w] << '\n';
}

void write_summary(std::ostream& out, const SimMetrics& metrics)
{
    char line[160];
    std::snprintf(line, sizeof(line), "%-28s %12s %12s\n", "", "control", "treatment");
    out << line;
    std::snprintf(line, sizeof(line), "%-28s %12.3f %12.3f\n", "initial weekly social time",
                  metrics.control.initial_mean_social_time, metrics.treatment.initial_mean_social_time);
    out << line;
    std::snprintf(line, sizeof(line), "%-28s %12.3f %12.3f\n", "final weekly social time",
                  metrics.final_time(metrics.control), metrics.final_time(metrics.treatment));
    out << line;
    std::snprintf(line, sizeof(line), "%-28s %12.3f %12.3f\n", "initial circle size",
                  metrics.control.initial_mean_circle_size, metrics.treatment.initial_mean_circle_size);
    out << line;
    std::snprintf(line, sizeof(line), "%-28s %12.3f %12.3f\n", "final circle size", metrics.final_circle(metrics.control),
                  metrics.final_circle(metrics.treatment));
    out << line;
    for (std::size_t b = 0; b < kBandCount; ++b) {
        const auto label = "loneliness " + std::string(to_string(static_cast<LonelinessBand>(b)));
        std::snprintf(line, sizeof(line), "%-28s %12zu %12zu\n", label.c_str(), metrics.control.loneliness[b],
                      metrics.treatment.loneliness[b]);
        out << line;
    }
    std::snprintf(line, sizeof(line), "%-28s %12zu %12zu\n", "tasks accepted", metrics.control.tasks_accepted,
                  metrics.treatment.tasks_accepted);
    out << line;
}

std::size_t satisfaction_level(double empathy_fraction)
{
    const double f = std::clamp(empathy_fraction, 0.0, 1.0);
    return std::min<std::size_t>(kSatisfactionLevels - 1, static_cast<std::size_t>(f * kSatisfactionLevels));
}

TrialResult run_emotion_trial(const TrialConfig& config)
{
    if (config.breeders == 0 || config.interactions == 0)
        throw Error(ErrorCode::EmptyTrial, "the trial needs at least one breeder and one interaction");
    if (!(config.stimulus_magnitude > 0.0))
        throw Error(ErrorCode::InvalidParams, "stimulus magnitude must be positive");
    config.engine.validate();
    config.stats.validate();

    TrialResult result;
    EmotionMatrix counts{};
    for (std::size_t b = 0; b < config.breeders; ++b) {
        auto rng = Rng::stream(config.seed, {6, b});
        EmotionEngine pet(config.engine, config.stats, Emotion::Neutral, Rng::stream(config.seed, {5, b}).next());
        std::size_t empathetic = 0;
        for (std::size_t i = 0; i < config.interactions; ++i) {
            const auto truth = kAllEmotions[rng.below(kEmotionCount)];
            const auto seen = perception::noisy_recognize(truth, config.confusion, rng);
            counts[index(seen)][index(truth)] += 1.0;
            Emotion response = seen;
            if (config.policy == TrialPolicy::Engine) {
                pet.feed(PropItem{"breeder-emotion", polarity(seen) == Polarity::Positive, config.stimulus_magnitude});
                std::shared_ptr<const EmotionSnapshot> snap;
                for (std::uint64_t t = 0; t < config.engine.transition_interval; ++t)
                    snap = pet.tick();
                response = snap->current;
            }
            if (polarity(response) == polarity(seen))
                ++empathetic;
        }
        const double rate = static_cast<double>(empathetic) / static_cast<double>(config.interactions);
        result.empathy_rate.push_back(rate);
        result.satisfaction[satisfaction_level(rate)] += 1;
    }
    result.recognitions = config.breeders * config.interactions;
    for (auto truth : kAllEmotions) {
        double col = 0.0;
        for (auto pred : kAllEmotions)
            col += counts[index(pred)][index(truth)];
        for (auto pred : kAllEmotions)
            result.confusion_estimate[index(pred)][index(truth)] = col > 0.0 ? counts[index(pred)][index(truth)] / col : 0.0;
    }
    return result;
}

} // namespace tomtalker::sim
