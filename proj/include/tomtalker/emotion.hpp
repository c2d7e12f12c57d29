#pragma once

#include "tomtalker/random.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tomtalker {

// Declaration order is the fixed tie-break order and the classifier's output order.
enum class Emotion : std::uint8_t { Anger, Disgust, Fear, Happy, Sad, Surprise, Neutral };

inline constexpr std::size_t kEmotionCount = 7;

inline constexpr std::array<Emotion, kEmotionCount> kAllEmotions{
    Emotion::Anger, Emotion::Disgust, Emotion::Fear,    Emotion::Happy,
    Emotion::Sad,   Emotion::Surprise, Emotion::Neutral,
};

std::string_view to_string(Emotion e);

/// Accepts the canonical labels plus "angry" and "calmness"/"calm".
Emotion parse_emotion(std::string_view label);

constexpr std::size_t index(Emotion e) { return static_cast<std::size_t>(e); }

enum class Polarity { Positive, Negative };

constexpr Polarity polarity(Emotion e)
{
    switch (e) {
    case Emotion::Happy:
    case Emotion::Surprise:
    case Emotion::Neutral: return Polarity::Positive;
    default: return Polarity::Negative;
    }
}

using EmotionVector = std::array<double, kEmotionCount>;
using EmotionMatrix = std::array<EmotionVector, kEmotionCount>;

/// Reads a 7x7 comma-separated matrix with a header row of column labels and
/// a label in the first column of every row. Rows and columns may come in any
/// order; the result is indexed [row emotion][column emotion].
EmotionMatrix read_emotion_matrix(std::istream& in, std::string_view what);
void write_emotion_matrix(std::ostream& out, const EmotionMatrix& m, std::string_view corner);

/// Survey-derived likelihood w[i][j] of moving from emotion i to j.
struct TransitionStats {
    EmotionMatrix w{};

    void validate() const;

    static TransitionStats uniform();
    static TransitionStats parse(std::istream& in);
    static TransitionStats load_file(const std::string& path);
};

enum class Channel : std::uint8_t { S1, S2, S3, S4 };

std::string_view to_string(Channel c);

/// S1 environment positive, S2 environment negative, S3 breeder positive,
/// S4 breeder negative.
using StimulusLevels = std::array<double, 4>;

/// Time course of one stimulus: a second-order step response
///
///     y'' + 2 xi wn y' + wn^2 y = wn^2 u,   y(0) = y'(0) = 0
///
/// until the peak, then exponential decay y = y_peak * exp(-t'/Tc) with t'
/// measured from the peak. For xi < 1 the peak is the first overshoot; for
/// xi >= 1 the response is monotone and the peak is where it comes within
/// 2% of u.
class StimulusTrace {
public:
    static constexpr double kSettleBand = 0.02;

    StimulusTrace(Channel channel, double magnitude, double onset, double decay_tc, double damping,
                  double natural_freq);

    Channel channel() const { return channel_; }
    double magnitude() const { return magnitude_; }
    double onset() const { return onset_; }
    double decay_tc() const { return decay_tc_; }
    double damping() const { return damping_; }
    double natural_freq() const { return natural_freq_; }
    double peak_time() const { return onset_ + peak_offset_; }
    double peak_value() const { return peak_value_; }

    /// Closed-form step response at `dt` seconds after onset.
    double rise(double dt) const;

    /// Throws InvalidParams when t precedes the onset.
    double value(double t) const;

private:
    Channel channel_;
    double magnitude_;
    double onset_;
    double decay_tc_;
    double damping_;
    double natural_freq_;
    double peak_offset_ = 0.0;
    double peak_value_ = 0.0;
};

struct SensorFrame {
    std::vector<double> readings;  // each in [0,1]
    std::vector<double> weights;   // non-negative, summing to 1
    double threshold = 0.5;        // comfort threshold C in [0,1]

    void validate() const;
};

/// E = sum a_i e_i.
double comfort(const SensorFrame& frame);

/// (S1, S2): (E - C, 0) above the threshold, (0, C - E) below it.
std::pair<double, double> env_stimuli(double comfort_value, double threshold);

struct PropItem {
    std::string prop_id;
    bool liked = true;
    double magnitude = 0.1;

    void validate() const;
};

/// (S3, S4): (magnitude, 0) for a liked prop, (0, magnitude) otherwise.
std::pair<double, double> breeder_stimuli(const PropItem& prop);

struct PersonalityVector {
    EmotionVector weights{1, 1, 1, 1, 1, 1, 1};
    double beta = 0.01;
    std::optional<double> cap;

    void validate() const;
};

/// W_j <- (1 + beta) W_j, clamped to the cap when one is set.
EmotionVector personality_update(const EmotionVector& w, Emotion j, double beta,
                                 std::optional<double> cap = std::nullopt);

/// M_ij = w_ij (a1 (S1 + S3) + a2 (S2 + S4)) + W_j with (a1, a2) = (+1, -1)
/// for positive targets and (-1, +1) for negative ones.
double transition_intensity(Emotion from, Emotion to, const StimulusLevels& s, const TransitionStats& stats,
                            const EmotionVector& personality);

inline constexpr double kIntensityFloor = 1e-6;

/// P_ij = M_ij / sum_k M_ik with every M clamped below at `floor`.
EmotionVector transition_probabilities(Emotion from, const StimulusLevels& s, const TransitionStats& stats,
                                       const EmotionVector& personality, double floor = kIntensityFloor);

/// Keeps the k largest entries (ties resolved by emotion order) and
/// renormalizes them; the rest become zero.
EmotionVector top_k_distribution(const EmotionVector& p, std::size_t k);

Emotion sample_top_k(const EmotionVector& p, std::size_t k, Rng& rng);

struct EmotionState {
    Emotion current = Emotion::Neutral;
    std::vector<StimulusTrace> traces;
    PersonalityVector personality;
    TransitionStats stats = TransitionStats::uniform();
    std::size_t top_k = 3;
    std::optional<EmotionVector> probabilities;

    void validate() const;

    /// Summed trace values per channel at time t.
    StimulusLevels levels(double t) const;
};

/// Computes and stores P for the state's current emotion at time t.
const EmotionVector& transition_probabilities(EmotionState& state, double t);

/// Top-k sample from the stored P, moves to the chosen emotion, and grows
/// its personality weight. Requires P to be populated.
Emotion step(EmotionState& state, Rng& rng);

struct EngineConfig {
    double tick_seconds = 1.0;
    std::uint64_t transition_interval = 10;  // ticks between transitions
    std::size_t top_k = 3;
    PersonalityVector personality;
    std::array<double, 4> decay_tc{10.0, 10.0, 10.0, 10.0};  // per channel
    double damping = 1.0;
    double natural_freq = 0.0;  // 0 selects 4 / Tc per channel
    double prune_below = 1e-6;

    void validate() const;
};

struct TraceView {
    Channel channel;
    double magnitude;
    double onset;
    double peak_time;
    double peak_value;
    double value;
};

struct EmotionSnapshot {
    std::uint64_t tick = 0;
    double time = 0.0;
    Emotion current = Emotion::Neutral;
    EmotionVector probabilities{};
    StimulusLevels stimuli{};
    EmotionVector personality{};
    std::vector<TraceView> traces;
    std::optional<Emotion> transitioned_from;  // set on ticks where a transition happened
    std::optional<double> comfort;             // last environment comfort, if any
};

/// One pet's emotion loop. Inputs are queued from any thread and applied at
/// the start of the next tick; `tick()` itself must be driven by one thread.
class EmotionEngine {
public:
    EmotionEngine(EngineConfig config, TransitionStats stats, Emotion initial, std::uint64_t seed);

    void feed(const PropItem& prop);
    void set_environment(const SensorFrame& frame);

    /// Advances one tick and returns the new snapshot.
    std::shared_ptr<const EmotionSnapshot> tick();

    std::shared_ptr<const EmotionSnapshot> snapshot() const;

    const EngineConfig& config() const { return config_; }
    const EmotionState& state() const { return state_; }

private:
    using Message = std::variant<PropItem, SensorFrame>;

    void apply(const Message& msg);
    StimulusTrace make_trace(Channel c, double magnitude) const;
    std::shared_ptr<const EmotionSnapshot> publish(std::optional<Emotion> from);

    EngineConfig config_;
    EmotionState state_;
    Rng rng_;
    std::uint64_t tick_ = 0;
    double time_ = 0.0;
    std::optional<double> comfort_;

    std::mutex queue_mutex_;
    std::deque<Message> queue_;

    mutable std::mutex snapshot_mutex_;
    std::shared_ptr<const EmotionSnapshot> snapshot_;
};

} // namespace tomtalker
