#pragma once

#include "tomtalker/emotion.hpp"
#include "tomtalker/perception.hpp"
#include "tomtalker/recommend.hpp"
#include "tomtalker/rewards.hpp"
#include "tomtalker/socialgraph.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace tomtalker::sim {

enum class LonelinessBand { Low, Moderate, ModeratelyHigh, High };

inline constexpr std::size_t kBandCount = 4;

std::string_view to_string(LonelinessBand band);

/// Loneliness score 1 - (0.5 min(time / time_ref, 1) + 0.5 min(circle / circle_ref, 1))
/// cut into four bands by ascending thresholds. A score equal to a threshold
/// falls into the lower-loneliness band.
struct LonelinessMapping {
    double time_ref_hours = 20.0;
    double circle_ref = 12.0;
    std::array<double, 3> thresholds{0.25, 0.5, 0.75};

    void validate() const;
};

struct AgentTraits {
    double sociability = 0.5;     // [0,1]
    double responsiveness = 0.5;  // [0,1]
    double weekly_social_time = 0.0;
    std::size_t circle_size = 0;
};

double loneliness_score(const AgentTraits& agent, const LonelinessMapping& mapping);
LonelinessBand loneliness_proxy(const AgentTraits& agent, const LonelinessMapping& mapping);

struct SimConfig {
    std::size_t population = 400;
    std::size_t treatment_size = 200;
    std::size_t control_size = 200;
    std::size_t weeks = 12;
    std::size_t tasks_per_week = 2;
    std::uint64_t seed = 42;

    // population
    double center_latitude = 43.88;
    double center_longitude = 125.32;
    double area_radius_km = 6.0;
    std::size_t attribute_dim = 4;
    std::size_t preference_dim = 8;
    double initial_friends_mean = 2.0;

    // base behaviour, shared by both arms
    double base_hours = 6.0;          // weekly hours at sociability 1
    double organic_rate = 0.3;        // weekly chance of a self-initiated meeting at sociability 1
    double organic_hours = 1.5;
    double hours_per_friend = 0.25;

    // platform behaviour, treatment arm only
    double task_hours = 2.0;
    double reward_sensitivity = 5.0;  // acceptance = responsiveness * sigmoid(sensitivity * marginal reward)

    RewardConfig reward = RewardConfig::defaults();
    RecommendParams recommend;
    LonelinessMapping loneliness;

    void validate() const;

    static SimConfig defaults();
    static SimConfig from_json_text(const std::string& text);
    static SimConfig load_file(const std::string& path);
    std::string to_json_text() const;
};

struct ArmMetrics {
    double initial_mean_social_time = 0.0;
    double initial_mean_circle_size = 0.0;
    std::vector<double> mean_weekly_social_time;  // one entry per week
    std::vector<double> mean_circle_size;         // one entry per week
    std::array<std::size_t, kBandCount> loneliness{};  // end-of-run band counts
    std::size_t tasks_accepted = 0;

    bool operator==(const ArmMetrics&) const = default;
};

struct SimMetrics {
    ArmMetrics control;
    ArmMetrics treatment;

    bool operator==(const SimMetrics&) const = default;

    double final_circle(const ArmMetrics& arm) const
    {
        return arm.mean_circle_size.empty() ? arm.initial_mean_circle_size : arm.mean_circle_size.back();
    }
    double final_time(const ArmMetrics& arm) const
    {
        return arm.mean_weekly_social_time.empty() ? arm.initial_mean_social_time : arm.mean_weekly_social_time.back();
    }
};

/// Weekly A/B experiment. The population is drawn as matched pairs, one
/// member per arm, and both arms consume the same random streams for their
/// shared base behaviour; the treatment arm additionally receives
/// recommended tasks. With tasks_per_week = 0 both arms evolve identically.
SimMetrics run(const SimConfig& config);

/// Line-delimited JSON records, one per arm and week, then one loneliness
/// record per arm.
void write_metrics_jsonl(std::ostream& out, const SimMetrics& metrics);
void write_metrics_csv(std::ostream& out, const SimMetrics& metrics);
void write_summary(std::ostream& out, const SimMetrics& metrics);

enum class TrialPolicy { Engine, PerfectEmpathy };

struct TrialConfig {
    std::size_t breeders = 20;
    std::size_t interactions = 50;  // per breeder
    std::uint64_t seed = 7;
    TrialPolicy policy = TrialPolicy::Engine;
    double stimulus_magnitude = 0.5;
    EngineConfig engine;
    TransitionStats stats = TransitionStats::uniform();
    perception::ConfusionMatrix confusion = perception::ConfusionMatrix::identity();
};

inline constexpr std::size_t kSatisfactionLevels = 5;

struct TrialResult {
    // very dissatisfied .. very satisfied
    std::array<std::size_t, kSatisfactionLevels> satisfaction{};
    std::vector<double> empathy_rate;  // per breeder
    EmotionMatrix confusion_estimate{};  // [predicted][true], column-normalized
    std::size_t recognitions = 0;
};

/// Satisfaction level 0..4 for a fraction of empathetic responses.
std::size_t satisfaction_level(double empathy_fraction);

/// Each interaction: the breeder shows a uniformly drawn emotion, the robot
/// recognizes it through the confusion channel, the recognized emotion is
/// fed back as a breeder stimulus, and the pet runs one transition interval.
/// A response is empathetic when the pet's new polarity matches the
/// recognized emotion's polarity. Throws EmptyTrial without interactions.
TrialResult run_emotion_trial(const TrialConfig& config);

} // namespace tomtalker::sim
