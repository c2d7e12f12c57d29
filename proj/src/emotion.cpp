#include "tomtalker/emotion.hpp"

#include "tomtalker/error.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>

namespace tomtalker {

std::string_view to_string(Emotion e)
{
    switch (e) {
    case Emotion::Anger: return "anger";
    case Emotion::Disgust: return "disgust";
    case Emotion::Fear: return "fear";
    case Emotion::Happy: return "happy";
    case Emotion::Sad: return "sad";
    case Emotion::Surprise: return "surprise";
    case Emotion::Neutral: return "neutral";
    }
    return "neutral";
}

Emotion parse_emotion(std::string_view label)
{
    label = detail::trim(label);
    for (auto e : kAllEmotions)
        if (label == to_string(e))
            return e;
    if (label == "angry")
        return Emotion::Anger;
    if (label == "calmness" || label == "calm")
        return Emotion::Neutral;
    throw Error(ErrorCode::Malformed, "unknown emotion label '" + std::string(label) + "'");
}

std::string_view to_string(Channel c)
{
    switch (c) {
    case Channel::S1: return "S1";
    case Channel::S2: return "S2";
    case Channel::S3: return "S3";
    case Channel::S4: return "S4";
    }
    return "S1";
}

EmotionMatrix read_emotion_matrix(std::istream& in, std::string_view what)
{
    const std::string name(what);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        auto view = detail::trim(line);
        if (view.empty() || view.front() == '#')
            continue;
        lines.emplace_back(view);
    }
    if (lines.empty())
        throw Error(ErrorCode::Malformed, name + ": empty file");

    const auto header = detail::split(lines[0], ',');
    if (header.size() != kEmotionCount + 1)
        throw Error(ErrorCode::DimensionMismatch,
                    name + ": header has " + std::to_string(header.size() - 1) + " columns, expected 7");
    std::array<std::size_t, kEmotionCount> column_of{};
    std::array<bool, kEmotionCount> seen_col{};
    for (std::size_t c = 1; c < header.size(); ++c) {
        const auto e = index(parse_emotion(header[c]));
        if (seen_col[e])
            throw Error(ErrorCode::Malformed, name + ": duplicate column label '" + std::string(header[c]) + "'");
        seen_col[e] = true;
        column_of[c - 1] = e;
    }

    if (lines.size() - 1 != kEmotionCount)
        throw Error(ErrorCode::DimensionMismatch,
                    name + ": " + std::to_string(lines.size() - 1) + " data rows, expected 7");

    EmotionMatrix m{};
    std::array<bool, kEmotionCount> seen_row{};
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = detail::split(lines[r], ',');
        if (cells.size() != kEmotionCount + 1)
            throw Error(ErrorCode::DimensionMismatch, name + ": row " + std::to_string(r) + " has " +
                                                          std::to_string(cells.size() - 1) + " values, expected 7");
        const auto row = index(parse_emotion(cells[0]));
        if (seen_row[row])
            throw Error(ErrorCode::Malformed, name + ": duplicate row label '" + std::string(cells[0]) + "'");
        seen_row[row] = true;
        for (std::size_t c = 1; c < cells.size(); ++c) {
            const double x = detail::parse_double(cells[c], name);
            if (!std::isfinite(x))
                throw Error(ErrorCode::Malformed, name + ": non-finite entry");
            if (x < 0.0)
                throw Error(ErrorCode::NegativeEntry, name + ": row '" + std::string(detail::trim(cells[0])) +
                                                          "' has entry " + std::string(detail::trim(cells[c])));
            m[row][column_of[c - 1]] = x;
        }
    }
    return m;
}

void write_emotion_matrix(std::ostream& out, const EmotionMatrix& m, std::string_view corner)
{
    out << corner;
    for (auto e : kAllEmotions)
        out << ',' << to_string(e);
    out << '\n';
    for (auto r : kAllEmotions) {
        out << to_string(r);
        for (auto c : kAllEmotions)
            out << ',' << detail::format_double(m[index(r)][index(c)]);
        out << '\n';
    }
}

void TransitionStats::validate() const
{
    for (auto i : kAllEmotions) {
        bool positive = false;
        for (double x : w[index(i)]) {
            if (!(x >= 0.0) || !std::isfinite(x))
                throw Error(ErrorCode::NegativeEntry, "transition stats must be finite and non-negative");
            positive = positive || x > 0.0;
        }
        if (!positive)
            throw Error(ErrorCode::ZeroRow, "transition stats row '" + std::string(to_string(i)) + "' is all zero");
    }
}

TransitionStats TransitionStats::uniform()
{
    TransitionStats s;
    for (auto& row : s.w)
        row.fill(1.0);
    return s;
}

TransitionStats TransitionStats::parse(std::istream& in)
{
    TransitionStats s;
    s.w = read_emotion_matrix(in, "transition stats");
    s.validate();
    return s;
}

TransitionStats TransitionStats::load_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open transition stats '" + path + "'");
    return parse(in);
}

StimulusTrace::StimulusTrace(Channel channel, double magnitude, double onset, double decay_tc, double damping,
                             double natural_freq)
    : channel_(channel), magnitude_(magnitude), onset_(onset), decay_tc_(decay_tc), damping_(damping),
      natural_freq_(natural_freq)
{
    if (!(magnitude >= 0.0) || !std::isfinite(magnitude))
        throw Error(ErrorCode::InvalidParams, "stimulus magnitude must be non-negative");
    if (!(decay_tc > 0.0))
        throw Error(ErrorCode::InvalidParams, "decay time constant must be positive");
    if (!(damping > 0.0))
        throw Error(ErrorCode::InvalidParams, "damping ratio must be positive");
    if (!(natural_freq > 0.0))
        throw Error(ErrorCode::InvalidParams, "natural frequency must be positive");

    if (magnitude_ == 0.0) {
        peak_offset_ = 0.0;
        peak_value_ = 0.0;
        return;
    }
    if (damping_ < 1.0) {
        peak_offset_ = std::numbers::pi / (natural_freq_ * std::sqrt(1.0 - damping_ * damping_));
    } else {
        // Monotone response: bisect for the 2% band.
        const double target = (1.0 - kSettleBand) * magnitude_;
        double lo = 0.0;
        double hi = 1.0 / natural_freq_;
        while (rise(hi) < target)
            hi *= 2.0;
        for (int i = 0; i < 200 && hi - lo > 1e-13 * hi; ++i) {
            const double mid = 0.5 * (lo + hi);
            (rise(mid) < target ? lo : hi) = mid;
        }
        peak_offset_ = hi;
    }
    peak_value_ = rise(peak_offset_);
}

double StimulusTrace::rise(double dt) const
{
    if (dt <= 0.0)
        return 0.0;
    const double wn = natural_freq_;
    const double z = damping_;
    const double u = magnitude_;
    if (std::abs(z - 1.0) < 1e-9)
        return u * (1.0 - (1.0 + wn * dt) * std::exp(-wn * dt));
    if (z < 1.0) {
        const double root = std::sqrt(1.0 - z * z);
        const double wd = wn * root;
        return u * (1.0 - std::exp(-z * wn * dt) * (std::cos(wd * dt) + (z / root) * std::sin(wd * dt)));
    }
    const double root = std::sqrt(z * z - 1.0);
    const double r1 = -wn * (z - root);
    const double r2 = -wn * (z + root);
    return u * (1.0 + (r2 * std::exp(r1 * dt) - r1 * std::exp(r2 * dt)) / (r1 - r2));
}

double StimulusTrace::value(double t) const
{
    if (t < onset_)
        throw Error(ErrorCode::InvalidParams, "stimulus queried before its onset");
    const double dt = t - onset_;
    if (dt <= peak_offset_)
        return rise(dt);
    return peak_value_ * std::exp(-(dt - peak_offset_) / decay_tc_);
}

void SensorFrame::validate() const
{
    if (readings.empty() || readings.size() != weights.size())
        throw Error(ErrorCode::DimensionMismatch, "sensor frame needs one weight per reading");
    double sum = 0.0;
    for (std::size_t i = 0; i < readings.size(); ++i) {
        if (!(readings[i] >= 0.0 && readings[i] <= 1.0))
            throw Error(ErrorCode::InvalidParams, "sensor readings must lie in [0,1]");
        if (!(weights[i] >= 0.0))
            throw Error(ErrorCode::InvalidParams, "sensor weights must be non-negative");
        sum += weights[i];
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw Error(ErrorCode::InvalidParams, "sensor weights must sum to 1");
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw Error(ErrorCode::InvalidParams, "comfort threshold must lie in [0,1]");
}

double comfort(const SensorFrame& frame)
{
    frame.validate();
    double e = 0.0;
    for (std::size_t i = 0; i < frame.readings.size(); ++i)
        e += frame.weights[i] * frame.readings[i];
    return std::clamp(e, 0.0, 1.0);
}

std::pair<double, double> env_stimuli(double comfort_value, double threshold)
{
    if (comfort_value > threshold)
        return {comfort_value - threshold, 0.0};
    if (comfort_value < threshold)
        return {0.0, threshold - comfort_value};
    return {0.0, 0.0};
}

void PropItem::validate() const
{
    if (prop_id.empty())
        throw Error(ErrorCode::InvalidParams, "prop id must be non-empty");
    if (!(magnitude > 0.0) || !std::isfinite(magnitude))
        throw Error(ErrorCode::InvalidParams, "prop '" + prop_id + "' needs a positive magnitude");
}

std::pair<double, double> breeder_stimuli(const PropItem& prop)
{
    prop.validate();
    return prop.liked ? std::pair{prop.magnitude, 0.0} : std::pair{0.0, prop.magnitude};
}

void PersonalityVector::validate() const
{
    for (double w : weights)
        if (!(w > 0.0) || !std::isfinite(w))
            throw Error(ErrorCode::InvalidParams, "personality weights must be positive");
    if (!(beta > 0.0))
        throw Error(ErrorCode::InvalidParams, "personality growth coefficient must be positive");
    if (cap) {
        if (!(*cap > 0.0))
            throw Error(ErrorCode::InvalidParams, "personality cap must be positive");
        for (double w : weights)
            if (w > *cap)
                throw Error(ErrorCode::InvalidParams, "personality weight above cap");
    }
}

EmotionVector personality_update(const EmotionVector& w, Emotion j, double beta, std::optional<double> cap)
{
    if (!(beta > 0.0))
        throw Error(ErrorCode::InvalidParams, "personality growth coefficient must be positive");
    auto out = w;
    out[index(j)] = (1.0 + beta) * w[index(j)];
    if (cap)
        out[index(j)] = std::min(out[index(j)], *cap);
    return out;
}

double transition_intensity(Emotion from, Emotion to, const StimulusLevels& s, const TransitionStats& stats,
                            const EmotionVector& personality)
{
    const bool positive = polarity(to) == Polarity::Positive;
    const double a1 = positive ? 1.0 : -1.0;
    const double a2 = -a1;
    const double drive = a1 * (s[0] + s[2]) + a2 * (s[1] + s[3]);
    return stats.w[index(from)][index(to)] * drive + personality[index(to)];
}

EmotionVector transition_probabilities(Emotion from, const StimulusLevels& s, const TransitionStats& stats,
                                       const EmotionVector& personality, double floor)
{
    EmotionVector m{};
    double total = 0.0;
    for (auto to : kAllEmotions) {
        m[index(to)] = std::max(transition_intensity(from, to, s, stats, personality), floor);
        total += m[index(to)];
    }
    for (auto& x : m)
        x /= total;
    return m;
}

EmotionVector top_k_distribution(const EmotionVector& p, std::size_t k)
{
    if (k < 1 || k > kEmotionCount)
        throw Error(ErrorCode::InvalidParams, "top-k gate must lie in 1..7");
    std::array<std::size_t, kEmotionCount> order{};
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    EmotionVector out{};
    double kept = 0.0;
    for (std::size_t r = 0; r < k; ++r)
        kept += p[order[r]];
    for (std::size_t r = 0; r < k; ++r)
        out[order[r]] = kept > 0.0 ? p[order[r]] / kept : 1.0 / static_cast<double>(k);
    return out;
}

Emotion sample_top_k(const EmotionVector& p, std::size_t k, Rng& rng)
{
    const auto dist = top_k_distribution(p, k);
    const auto i = rng.categorical(dist);
    return kAllEmotions.at(std::min(i, kEmotionCount - 1));
}

void EmotionState::validate() const
{
    stats.validate();
    personality.validate();
    if (top_k < 1 || top_k > kEmotionCount)
        throw Error(ErrorCode::InvalidParams, "top-k gate must lie in 1..7");
}

StimulusLevels EmotionState::levels(double t) const
{
    StimulusLevels s{};
    for (const auto& tr : traces)
        if (t >= tr.onset())
            s[static_cast<std::size_t>(tr.channel())] += tr.value(t);
    return s;
}

const EmotionVector& transition_probabilities(EmotionState& state, double t)
{
    state.probabilities =
        transition_probabilities(state.current, state.levels(t), state.stats, state.personality.weights);
    return *state.probabilities;
}

Emotion step(EmotionState& state, Rng& rng)
{
    if (!state.probabilities)
        throw Error(ErrorCode::InvalidParams, "transition probabilities not computed");
    const auto next = sample_top_k(*state.probabilities, state.top_k, rng);
    state.current = next;
    state.personality.weights =
        personality_update(state.personality.weights, next, state.personality.beta, state.personality.cap);
    return next;
}

void EngineConfig::validate() const
{
    if (!(tick_seconds > 0.0))
        throw Error(ErrorCode::InvalidParams, "tick length must be positive");
    if (transition_interval == 0)
        throw Error(ErrorCode::InvalidParams, "transition interval must be positive");
    if (top_k < 1 || top_k > kEmotionCount)
        throw Error(ErrorCode::InvalidParams, "top-k gate must lie in 1..7");
    personality.validate();
    for (double tc : decay_tc)
        if (!(tc > 0.0))
            throw Error(ErrorCode::InvalidParams, "decay time constants must be positive");
    if (!(damping > 0.0))
        throw Error(ErrorCode::InvalidParams, "damping ratio must be positive");
    if (!(natural_freq >= 0.0))
        throw Error(ErrorCode::InvalidParams, "natural frequency must be non-negative");
}

EmotionEngine::EmotionEngine(EngineConfig config, TransitionStats stats, Emotion initial, std::uint64_t seed)
    : config_(std::move(config)), rng_(seed)
{
    config_.validate();
    state_.current = initial;
    state_.personality = config_.personality;
    state_.stats = std::move(stats);
    state_.top_k = config_.top_k;
    state_.validate();
    transition_probabilities(state_, time_);
    publish(std::nullopt);
}

void EmotionEngine::feed(const PropItem& prop)
{
    prop.validate();
    std::lock_guard lock(queue_mutex_);
    queue_.emplace_back(prop);
}

void EmotionEngine::set_environment(const SensorFrame& frame)
{
    frame.validate();
    std::lock_guard lock(queue_mutex_);
    queue_.emplace_back(frame);
}

StimulusTrace EmotionEngine::make_trace(Channel c, double magnitude) const
{
    const double tc = config_.decay_tc[static_cast<std::size_t>(c)];
    const double wn = config_.natural_freq > 0.0 ? config_.natural_freq : 4.0 / tc;
    return StimulusTrace(c, magnitude, time_, tc, config_.damping, wn);
}

void EmotionEngine::apply(const Message& msg)
{
    if (const auto* prop = std::get_if<PropItem>(&msg)) {
        const auto [s3, s4] = breeder_stimuli(*prop);
        if (s3 > 0.0)
            state_.traces.push_back(make_trace(Channel::S3, s3));
        if (s4 > 0.0)
            state_.traces.push_back(make_trace(Channel::S4, s4));
        return;
    }
    // The environment is a level: a new frame replaces the previous one.
    const auto& frame = std::get<SensorFrame>(msg);
    const double e = comfort(frame);
    comfort_ = e;
    std::erase_if(state_.traces,
                  [](const StimulusTrace& t) { return t.channel() == Channel::S1 || t.channel() == Channel::S2; });
    const auto [s1, s2] = env_stimuli(e, frame.threshold);
    if (s1 > 0.0)
        state_.traces.push_back(make_trace(Channel::S1, s1));
    if (s2 > 0.0)
        state_.traces.push_back(make_trace(Channel::S2, s2));
}

std::shared_ptr<const EmotionSnapshot> EmotionEngine::tick()
{
    std::deque<Message> pending;
    {
        std::lock_guard lock(queue_mutex_);
        pending.swap(queue_);
    }
    for (const auto& msg : pending)
        apply(msg);

    ++tick_;
    time_ = static_cast<double>(tick_) * config_.tick_seconds;

    std::erase_if(state_.traces, [&](const StimulusTrace& t) {
        return time_ > t.peak_time() && t.value(time_) < config_.prune_below;
    });

    transition_probabilities(state_, time_);
    std::optional<Emotion> from;
    if (tick_ % config_.transition_interval == 0) {
        from = state_.current;
        step(state_, rng_);
        transition_probabilities(state_, time_);
    }
    return publish(from);
}

std::shared_ptr<const EmotionSnapshot> EmotionEngine::publish(std::optional<Emotion> from)
{
    auto snap = std::make_shared<EmotionSnapshot>();
    snap->tick = tick_;
    snap->time = time_;
    snap->current = state_.current;
    snap->probabilities = *state_.probabilities;
    snap->stimuli = state_.levels(time_);
    snap->personality = state_.personality.weights;
    for (const auto& t : state_.traces)
        snap->traces.push_back({t.channel(), t.magnitude(), t.onset(), t.peak_time(), t.peak_value(), t.value(time_)});
    snap->transitioned_from = from;
    snap->comfort = comfort_;
    std::shared_ptr<const EmotionSnapshot> out = std::move(snap);
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = out;
    return out;
}

std::shared_ptr<const EmotionSnapshot> EmotionEngine::snapshot() const
{
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
}

} // namespace tomtalker
