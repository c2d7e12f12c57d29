// Acceptance run: one PASS/FAIL line per criterion, each under its time
// budget. Exits non-zero if any criterion fails.

#include "oracles.hpp"

#include "tomtalker/emotion.hpp"
#include "tomtalker/perception.hpp"
#include "tomtalker/recommend.hpp"
#include "tomtalker/reward_params.hpp"
#include "tomtalker/rewards.hpp"
#include "tomtalker/simulator.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace tomtalker;
namespace pc = tomtalker::perception;

namespace {

const std::string kData = TOMTALKER_DATA_DIR;

// Collects the first few failures of a criterion.
class Check {
public:
    void expect(bool ok, const std::string& what)
    {
        if (ok)
            return;
        if (++failures_ <= 3)
            notes_ += (notes_.empty() ? "" : "; ") + what;
    }
    void note(const std::string& s) { info_ += (info_.empty() ? "" : ", ") + s; }
    bool ok() const { return failures_ == 0; }
    std::string summary() const
    {
        if (ok())
            return info_;
        return std::to_string(failures_) + " failure(s): " + notes_;
    }

private:
    std::size_t failures_ = 0;
    std::string notes_;
    std::string info_;
};

std::string num(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

struct Criterion {
    const char* name;
    double limit_s;
    std::function<void(Check&)> body;
};

// ---- criteria ----

void edge_weight_suite(Check& c)
{
    Rng rng(1001);
    for (int set = 0; set < 100; ++set) {
        // p1 in [0.05, 0.15] keeps q1 - omega(200) above double resolution.
        const RewardParams p{0.5, rng.uniform(0.1, 10.0), rng.uniform(0.05, 0.15), static_cast<double>(rng.below(101))};
        const auto c1 = static_cast<std::int64_t>(p.c1);
        c.expect(edge_weight(c1, p) == p.q1 / 2, "omega(c1) != q1/2");
        std::vector<double> w(201);
        for (std::int64_t m = 0; m <= 200; ++m)
            w[static_cast<std::size_t>(m)] = edge_weight(m, p);
        for (std::size_t m = 0; m <= 200; ++m) {
            c.expect(w[m] > 0.0 && w[m] < p.q1, "bound violated at m=" + std::to_string(m));
            if (m > 0)
                c.expect(w[m] > w[m - 1], "not strictly increasing at m=" + std::to_string(m));
            if (m > 0 && m < 200 && static_cast<std::int64_t>(m) != c1) {
                const double d2 = w[m + 1] - 2 * w[m] + w[m - 1];
                c.expect(static_cast<std::int64_t>(m) < c1 ? d2 > 0 : d2 < 0,
                         "second difference sign at m=" + std::to_string(m));
            }
        }
    }
    c.note("100 parameter sets, m=0..200");
}

void reward_linearity(Check& c)
{
    Rng rng(1002);
    double worst = 0;
    for (int g = 0; g < 100; ++g) {
        const auto graph = oracle::random_graph(rng, 5 + rng.below(20), rng.uniform(0.05, 0.5));
        RewardParams p = graph.reward_params();
        for (const auto& [u, _] : graph.users()) {
            p.alpha = 0.0;
            const double r0 = total_reward(graph, u, p);
            p.alpha = 1.0;
            const double r1 = total_reward(graph, u, p);
            p.alpha = rng.uniform();
            const double ra = total_reward(graph, u, p);
            const double err = std::abs(ra - (p.alpha * r1 + (1 - p.alpha) * r0));
            worst = std::max(worst, err);
            c.expect(err <= 1e-9, "R(alpha) off by " + num(err));
        }
    }
    c.note("max error " + num(worst));
}

void network_score_oracle(Check& c)
{
    Rng rng(1003);
    double worst = 0;
    std::size_t pairs = 0;
    RecommendParams params;
    params.dist_threshold_km = 100.0;
    params.top_n = 100;
    for (int g = 0; g < 500; ++g) {
        const auto graph = oracle::random_graph(rng, 2 + rng.below(11), rng.uniform(0.15, 0.8));
        params.alpha_net = rng.uniform();
        for (const auto& [u, _] : graph.users()) {
            for (const auto& [v, __] : graph.users()) {
                if (u == v || graph.adjacent(u, v) || oracle::common_components(graph, u, v).empty())
                    continue;
                const double err = std::abs(network_score(graph, u, v, params) -
                                            oracle::network_score(graph, u, v, params.alpha_net));
                worst = std::max(worst, err);
                ++pairs;
                c.expect(err <= 1e-9, "score off by " + num(err));
            }
            const auto got = network_candidates(graph, u, params);
            const auto want = oracle::network_ranking(graph, u, params.alpha_net, params.dist_threshold_km, params.top_n);
            bool same = got.size() == want.size();
            for (std::size_t i = 0; same && i < got.size(); ++i)
                same = got[i].candidate == want[i].id;
            c.expect(same, "ranking differs for " + u);
        }
    }
    c.note(std::to_string(pairs) + " pairs, max error " + num(worst));
}

void gate_soundness(Check& c)
{
    Rng rng(1004);
    std::size_t calls = 0, returned = 0;
    while (calls < 10000) {
        const auto graph = oracle::random_graph(rng, 30, rng.uniform(0.0, 0.25), 2, 3, 15.0);
        for (int k = 0; k < 10; ++k, ++calls) {
            RecommendParams p;
            p.sim_threshold = rng.uniform();
            p.dist_threshold_km = rng.uniform(0.5, 25.0);
            p.top_n = 1 + rng.below(10);
            p.alpha_net = rng.uniform();
            p.stability_rate = rng.uniform(0.0, 3.0);
            const UserId u = std::next(graph.users().begin(), static_cast<long>(rng.below(30)))->first;
            const auto recs = recommend(graph, u, static_cast<Timestamp>(rng.below(20)), p);
            c.expect(recs.size() <= p.top_n, "more than top_n results");
            for (const auto& r : recs) {
                ++returned;
                const double d = oracle::great_circle_km(graph.user(u).location.latitude, graph.user(u).location.longitude,
                                                         graph.user(r.candidate).location.latitude,
                                                         graph.user(r.candidate).location.longitude);
                c.expect(r.candidate != u, "self recommended");
                c.expect(!oracle::adjacency(graph).at(u).count(r.candidate), "existing friend recommended");
                c.expect(d <= p.dist_threshold_km + 1e-9, "distance gate violated");
                if (r.phase == RecommendPhase::Similarity)
                    c.expect(oracle::cosine(graph, u, r.candidate) >= p.sim_threshold - 1e-12, "similarity gate violated");
                else
                    c.expect(!oracle::common_components(graph, u, r.candidate).empty(), "no common neighbour");
            }
        }
    }
    c.note(std::to_string(calls) + " calls, " + std::to_string(returned) + " candidates checked");
}

void probability_normalization(Check& c)
{
    Rng rng(1005);
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
        TransitionStats stats;
        for (auto& row : stats.w) {
            for (auto& x : row)
                x = rng.bernoulli(0.2) ? 0.0 : rng.uniform(0, 3);
            row[rng.below(7)] += 0.01;
        }
        EmotionVector W;
        for (auto& x : W)
            x = rng.uniform(0.01, 10);
        StimulusLevels s;
        for (auto& x : s)
            x = rng.bernoulli(0.25) ? 0.0 : rng.uniform(0, 5);
        const auto p = transition_probabilities(kAllEmotions[rng.below(7)], s, stats, W);
        const double sum = std::accumulate(p.begin(), p.end(), 0.0);
        worst = std::max(worst, std::abs(sum - 1.0));
        c.expect(std::abs(sum - 1.0) <= 1e-9, "sum P = " + num(sum));
        for (double x : p)
            c.expect(x >= 0.0, "negative probability");
    }
    c.note("10000 states, max |sum-1| " + num(worst));
}

void personality_closed_form(Check& c)
{
    Rng rng(1006);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        EmotionVector w;
        for (auto& x : w)
            x = rng.uniform(0.1, 3);
        const auto j = kAllEmotions[rng.below(7)];
        const double beta = rng.uniform(1e-4, 0.1);
        const double w0 = w[index(j)];
        const int n = 1 + static_cast<int>(rng.below(200));
        for (int i = 0; i < n; ++i)
            w = personality_update(w, j, beta);
        const double rel = std::abs(w[index(j)] / (w0 * std::pow(1 + beta, n)) - 1.0);
        worst = std::max(worst, rel);
        c.expect(rel <= 1e-9, "relative error " + num(rel));
    }
    c.note("max relative error " + num(worst));
}

void stimulus_dynamics(Check& c)
{
    Rng rng(1007);
    double worst_decay = 0, worst_rise = 0;
    for (int trial = 0; trial < 30; ++trial) {
        const double xi = std::array<double, 3>{rng.uniform(0.2, 0.9), 1.0, rng.uniform(1.1, 3.0)}[trial % 3];
        const double tc = rng.uniform(2, 15);
        const double wn = trial % 2 ? 4.0 / tc : rng.uniform(0.2, 2.0);
        const double u = rng.uniform(0.05, 1.0);
        const StimulusTrace t(Channel::S3, u, rng.uniform(0, 5), tc, xi, wn);
        const double ratio = t.value(t.peak_time() + tc) / t.peak_value();
        worst_decay = std::max(worst_decay, std::abs(ratio - std::exp(-1.0)));
        c.expect(std::abs(ratio - std::exp(-1.0)) <= 1e-9, "decay ratio " + num(ratio));
        for (double f : {0.1, 0.35, 0.7, 1.0}) {
            const double dt = f * (t.peak_time() - t.onset());
            const double err = std::abs(t.rise(dt) - oracle::step_response_rk4(xi, wn, u, dt));
            worst_rise = std::max(worst_rise, err);
            c.expect(err <= 1e-4, "rise off by " + num(err));
        }
    }
    c.note("max decay error " + num(worst_decay) + ", max rise error " + num(worst_rise));
}

void top_k_frequencies(Check& c)
{
    Rng setup(1008);
    double worst = 0;
    for (std::size_t k = 1; k <= kEmotionCount; ++k) {
        EmotionVector p;
        for (auto& x : p)
            x = setup.uniform(0.01, 1);
        const double s = std::accumulate(p.begin(), p.end(), 0.0);
        for (auto& x : p)
            x /= s;
        // Renormalized target from a sort independent of the library.
        std::vector<std::size_t> order(kEmotionCount);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
        EmotionVector want{};
        double kept = 0;
        for (std::size_t i = 0; i < k; ++i)
            kept += p[order[i]];
        for (std::size_t i = 0; i < k; ++i)
            want[order[i]] = p[order[i]] / kept;

        Rng rng(2000 + k);
        EmotionVector counts{};
        const int n = 100000;
        for (int i = 0; i < n; ++i)
            counts[index(sample_top_k(p, k, rng))] += 1;
        for (std::size_t j = 0; j < kEmotionCount; ++j) {
            const double err = std::abs(counts[j] / n - want[j]);
            worst = std::max(worst, err);
            c.expect(err <= 0.01, "k=" + std::to_string(k) + " frequency off by " + num(err));
        }
    }
    c.note("k=1..7, 1e5 draws each, max deviation " + num(worst));
}

void confusion_anchors(Check& c)
{
    const auto m = pc::ConfusionMatrix::load_file(kData + "/fer_confusion.csv");
    Rng rng(1009);
    const int n = 100000;
    const std::pair<Emotion, double> anchors[] = {{Emotion::Happy, 0.83}, {Emotion::Fear, 0.42}};
    for (const auto& [e, want] : anchors) {
        int hits = 0;
        for (int i = 0; i < n; ++i)
            hits += pc::noisy_recognize(e, m, rng) == e;
        const double f = hits / double(n);
        c.expect(std::abs(f - want) <= 0.01, std::string(to_string(e)) + " recognized at " + num(f));
        c.note(std::string(to_string(e)) + " " + num(f));
    }
    for (auto t : kAllEmotions) {
        double s = 0;
        for (auto p : kAllEmotions)
            s += m.probability(p, t);
        c.expect(std::abs(s - 1.0) <= 1e-9, "normalized column sum " + num(s));
        c.expect(std::abs(m.raw_column_sum(t) - 1.0) <= 0.02 + 1e-12, "raw column sum " + num(m.raw_column_sum(t)));
    }
}

void perception_kernels(Check& c)
{
    Rng rng(1010);
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t k = 1 + 2 * (1 + rng.below(2));
        const std::size_t h = k + rng.below(12), w = k + rng.below(12);
        const std::size_t ci = 1 + rng.below(8), co = 1 + rng.below(8);
        pc::Tensor in(h, w, ci), dw(k, k, ci);
        for (auto& v : in.values())
            v = rng.uniform(-1, 1);
        for (auto& v : dw.values())
            v = rng.uniform(-1, 1);
        std::vector<double> pw(ci * co), full(k * k * ci * co);
        for (auto& v : pw)
            v = rng.uniform(-1, 1);
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx)
                for (std::size_t a = 0; a < ci; ++a)
                    for (std::size_t o = 0; o < co; ++o)
                        full[((ky * k + kx) * ci + a) * co + o] = dw.at(ky, kx, a) * pw[a * co + o];
        const bool same = trial % 2 == 0;
        std::size_t oh = 0, ow = 0;
        const auto want = oracle::full_conv({in.values().begin(), in.values().end()}, h, w, ci, full, k, co, same, oh, ow);
        const auto got = pc::depthwise_separable_conv(in, dw, pw, co, same ? pc::Padding::Same : pc::Padding::Valid);
        c.expect(got.height() == oh && got.width() == ow, "output shape");
        if (got.size() != want.size())
            continue;
        for (std::size_t i = 0; i < want.size(); ++i)
            worst = std::max(worst, std::abs(got.values()[i] - want[i]));
    }
    c.expect(worst <= 1e-6, "separable vs full off by " + num(worst));

    // separable / full == 1/C_out + 1/K^2, compared as integers.
    for (std::size_t k : {1u, 3u, 5u, 7u})
        for (std::size_t ci : {1u, 3u, 16u, 64u})
            for (std::size_t co : {1u, 8u, 32u, 128u}) {
                const auto sep = pc::separable_param_count(k, ci, co);
                const auto fc = pc::full_conv_param_count(k, ci, co);
                c.expect(sep * k * k * co == fc * (k * k + co), "parameter ratio");
            }

    pc::Tensor x(1, 1, 1, std::vector<double>{3.0});
    const std::vector<double> mean{1.0}, var{4.0}, gamma{2.0}, beta{0.5};
    c.expect(pc::batchnorm_infer(x, mean, var, gamma, beta, 0.0).at(0, 0, 0) == 2.5, "BN hand example");

    pc::Tensor r(5, 4, 3);
    for (auto& v : r.values())
        v = rng.uniform(-2, 2);
    const auto h = pc::residual_apply(r, [](const pc::Tensor& t) { return pc::Tensor(t.height(), t.width(), t.channels()); });
    bool identical = h.size() == r.size();
    for (std::size_t i = 0; identical && i < r.size(); ++i)
        identical = h.values()[i] == r.values()[i];
    c.expect(identical, "residual with F = 0 is not the identity");

    for (int i = 0; i < 1000; ++i) {
        std::vector<double> z(7);
        for (auto& v : z)
            v = rng.uniform(-50, 50);
        const auto p = pc::softmax(z);
        const double s = std::accumulate(p.begin(), p.end(), 0.0);
        c.expect(std::abs(s - 1.0) <= 1e-9, "softmax sum " + num(s));
        const double shift = rng.uniform(-100, 100);
        auto zs = z;
        for (auto& v : zs)
            v += shift;
        const auto q = pc::softmax(zs);
        for (std::size_t j = 0; j < 7; ++j) {
            c.expect(p[j] > 0.0, "softmax not positive");
            c.expect(std::abs(p[j] - q[j]) <= 1e-9, "softmax shift");
        }
    }
    c.note("max separable error " + num(worst));
}

void simulator(Check& c)
{
    const auto defaults = sim::SimConfig::defaults();
    const auto t0 = std::chrono::steady_clock::now();
    const auto a = sim::run(defaults);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(secs < 60.0, "default run took " + num(secs) + " s");
    c.expect(a.final_circle(a.treatment) > a.final_circle(a.control), "treatment circle not larger");
    c.expect(a.final_time(a.treatment) > a.final_time(a.control), "treatment time not larger");
    c.note("default run " + num(secs) + " s, circle " + num(a.final_circle(a.control)) + " vs " +
           num(a.final_circle(a.treatment)) + ", hours " + num(a.final_time(a.control)) + " vs " +
           num(a.final_time(a.treatment)));

    c.expect(sim::run(defaults) == a, "rerun with the same seed differs");

    auto off = defaults;
    off.tasks_per_week = 0;
    const auto o = sim::run(off);
    c.expect(o.control == o.treatment, "mechanism off but arms differ");

    for (std::uint64_t seed : {42u, 7u}) {
        double prev = -1;
        for (std::size_t t : {0u, 1u, 2u, 3u, 4u}) {
            auto cfg = defaults;
            cfg.seed = seed;
            cfg.tasks_per_week = t;
            const auto r = sim::run(cfg);
            c.expect(r.final_circle(r.treatment) >= prev,
                     "circle shrank at tasks_per_week=" + std::to_string(t) + " seed " + std::to_string(seed));
            prev = r.final_circle(r.treatment);
        }
    }
}

} // namespace

int main()
{
    const std::vector<Criterion> criteria{
        {"edge-weight curve", 1, edge_weight_suite},
        {"total reward linear in alpha", 1, reward_linearity},
        {"network score vs exhaustive oracle", 30, network_score_oracle},
        {"recommendation gate soundness", 30, gate_soundness},
        {"transition probabilities sum to one", 5, probability_normalization},
        {"personality growth closed form", 1, personality_closed_form},
        {"stimulus decay and rise", 5, stimulus_dynamics},
        {"top-k sampling frequencies", 10, top_k_frequencies},
        {"recognition confusion anchors", 10, confusion_anchors},
        {"perception kernels", 30, perception_kernels},
        {"simulator", 120, simulator},
    };
    int failed = 0;
    for (const auto& cr : criteria) {
        Check check;
        const auto t0 = std::chrono::steady_clock::now();
        std::string crash;
        try {
            cr.body(check);
        } catch (const std::exception& e) {
            crash = e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < cr.limit_s;
        const bool pass = crash.empty() && check.ok() && in_time;
        failed += !pass;
        std::string detail = crash.empty() ? check.summary() : "threw: " + crash;
        if (!in_time)
            detail += (detail.empty() ? "" : "; ") + std::string("over time limit");
        std::printf("%s  %-38s %8.3fs (limit %gs)  %s\n", pass ? "PASS" : "FAIL", cr.name, secs, cr.limit_s,
                    detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
    return failed == 0 ? 0 : 1;
}
