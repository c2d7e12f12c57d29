// Command-line front end: simulation runs, a headless pet loop, the
// recommender, graph import/export, reward inspection and the service.

#include "tomtalker/emotion.hpp"
#include "tomtalker/error.hpp"
#include "tomtalker/perception.hpp"
#include "tomtalker/platform.hpp"
#include "tomtalker/recommend.hpp"
#include "tomtalker/rewards.hpp"
#include "tomtalker/simulator.hpp"
#include "tomtalker/socialgraph.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <sstream>
#include <thread>

namespace tt = tomtalker;
using json = nlohmann::ordered_json;

namespace {

// Shortest text that reads back to the same double.
std::string shortest(double x)
{
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, r.ptr);
}

std::ofstream open_out(const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw tt::Error(tt::ErrorCode::Io, "cannot write '" + path + "'");
    return out;
}

tt::platform::ServiceConfig service_config(const std::string& flag_path)
{
    std::string path = flag_path;
    if (path.empty())
        if (const char* env = std::getenv(tt::platform::kConfigEnv))
            path = env;
    return path.empty() ? tt::platform::ServiceConfig{} : tt::platform::ServiceConfig::load_file(path);
}

// ---- sim ----

struct SimRunArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> weeks;
    std::optional<std::size_t> tasks_per_week;
    std::string out;
    std::string csv;
};

int sim_run(const SimRunArgs& a)
{
    auto config = a.config.empty() ? tt::sim::SimConfig::defaults() : tt::sim::SimConfig::load_file(a.config);
    if (a.seed)
        config.seed = *a.seed;
    if (a.weeks)
        config.weeks = *a.weeks;
    if (a.tasks_per_week)
        config.tasks_per_week = *a.tasks_per_week;
    const auto metrics = tt::sim::run(config);
    if (!a.out.empty()) {
        auto out = open_out(a.out);
        tt::sim::write_metrics_jsonl(out, metrics);
    }
    if (!a.csv.empty()) {
        auto out = open_out(a.csv);
        tt::sim::write_metrics_csv(out, metrics);
    }
    tt::sim::write_summary(std::cout, metrics);
    return 0;
}

struct TrialArgs {
    std::size_t breeders = 20;
    std::size_t interactions = 50;
    std::uint64_t seed = 7;
    std::string policy = "engine";
    double magnitude = 0.5;
    std::string stats;
    std::string confusion;
};

int sim_trial(const TrialArgs& a)
{
    tt::sim::TrialConfig c;
    c.breeders = a.breeders;
    c.interactions = a.interactions;
    c.seed = a.seed;
    c.policy = a.policy == "perfect" ? tt::sim::TrialPolicy::PerfectEmpathy : tt::sim::TrialPolicy::Engine;
    c.stimulus_magnitude = a.magnitude;
    if (!a.stats.empty())
        c.stats = tt::TransitionStats::load_file(a.stats);
    if (!a.confusion.empty())
        c.confusion = tt::perception::ConfusionMatrix::load_file(a.confusion);
    const auto r = tt::sim::run_emotion_trial(c);

    static constexpr const char* levels[] = {"very dissatisfied", "dissatisfied", "okay", "satisfied",
                                             "very satisfied"};
    double mean = 0.0;
    for (double x : r.empathy_rate)
        mean += x;
    mean /= static_cast<double>(r.empathy_rate.size());
    std::cout << "breeders " << c.breeders << ", interactions " << c.interactions << ", mean empathy "
              << shortest(mean) << '\n';
    for (std::size_t i = 0; i < tt::sim::kSatisfactionLevels; ++i)
        std::cout << levels[i] << ' ' << r.satisfaction[i] << '\n';
    return 0;
}

// ---- pet repl ----

struct ReplArgs {
    std::string config;
    std::string stats;
    std::string props;
    std::uint64_t seed = 1;
};

int pet_repl(const ReplArgs& a)
{
    const auto svc = service_config(a.config);
    const auto stats_path = a.stats.empty() ? svc.transition_stats_path : a.stats;
    const auto props_path = a.props.empty() ? svc.props_path : a.props;
    const auto stats = stats_path.empty() ? tt::TransitionStats::uniform() : tt::TransitionStats::load_file(stats_path);
    const auto props = props_path.empty() ? tt::platform::PropCatalog{} : tt::platform::PropCatalog::load_file(props_path);
    tt::EmotionEngine engine(svc.engine, stats, tt::Emotion::Neutral, a.seed);

    bool failed = false;
    std::string line;
    while (std::getline(std::cin, line)) {
        std::istringstream words(line);
        std::string cmd;
        if (!(words >> cmd) || cmd.front() == '#')
            continue;
        try {
            if (cmd == "quit" || cmd == "exit")
                break;
            if (cmd == "feed") {
                std::string id;
                if (!(words >> id))
                    throw tt::Error(tt::ErrorCode::Malformed, "usage: feed <prop_id>");
                engine.feed(props.get(id));
            } else if (cmd == "env") {
                // env <r1,r2,...> <w1,w2,...> [threshold]
                std::string readings, weights;
                if (!(words >> readings >> weights))
                    throw tt::Error(tt::ErrorCode::Malformed, "usage: env <readings> <weights> [threshold]");
                tt::SensorFrame frame;
                for (auto* dst : {&frame.readings, &frame.weights}) {
                    std::istringstream list(dst == &frame.readings ? readings : weights);
                    std::string item;
                    while (std::getline(list, item, ','))
                        dst->push_back(std::stod(item));
                }
                words >> frame.threshold;
                frame.validate();
                engine.set_environment(frame);
            } else if (cmd == "tick") {
                long n = 1;
                words >> n;
                if (n < 1)
                    throw tt::Error(tt::ErrorCode::Malformed, "tick count must be positive");
                for (long i = 0; i < n; ++i)
                    std::cout << tt::platform::snapshot_json("repl", *engine.tick()) << '\n';
            } else if (cmd == "state") {
                std::cout << tt::platform::snapshot_json("repl", *engine.snapshot()) << '\n';
            } else {
                throw tt::Error(tt::ErrorCode::Malformed, "unknown command '" + cmd + "'");
            }
        } catch (const std::exception& e) {
            failed = true;
            std::cout << json{{"v", tt::platform::kWireVersion}, {"error", e.what()}}.dump() << '\n';
        }
        std::cout.flush();
    }
    return failed ? 1 : 0;
}

// ---- recommend ----

int recommend_cmd(const std::string& user, const std::string& graph_path, std::optional<tt::Timestamp> now,
                  const std::string& config)
{
    const auto graph = tt::SocialGraph::load_file(graph_path);
    const auto params = service_config(config).recommend;
    tt::Timestamp t = 0;
    if (now) {
        t = *now;
    } else {
        // Default to the newest edge so results do not depend on the wall clock.
        for (const auto& [_, e] : graph.edges())
            t = std::max(t, e.created_at);
    }
    // One JSON record per candidate, best first.
    const auto recs = tt::recommend(graph, user, t, params);
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& r = recs[i];
        json comps = json::array();
        for (const auto& c : r.components)
            comps.push_back({{"vertices", c.vertex_count}, {"edges", c.edge_count}, {"members", c.members}});
        std::cout << json{{"v", tt::platform::kWireVersion},
                          {"user", user},
                          {"now", t},
                          {"rank", i + 1},
                          {"candidate", r.candidate},
                          {"score", r.score},
                          {"phase", tt::to_string(r.phase)},
                          {"similarity", r.similarity},
                          {"distance_km", r.distance_km},
                          {"components", comps}}
                         .dump()
                  << '\n';
    }
    return 0;
}

// ---- graph ----

int graph_export(const std::string& graph_path, const std::string& out)
{
    const auto graph = tt::SocialGraph::load_file(graph_path);
    if (out.empty()) {
        graph.save(std::cout);
    } else {
        graph.save_file(out);
    }
    return 0;
}

int graph_import(const std::string& in_path, const std::string& out)
{
    tt::SocialGraph graph;
    if (in_path.empty() || in_path == "-") {
        graph = tt::SocialGraph::load(std::cin);
    } else {
        graph = tt::SocialGraph::load_file(in_path);
    }
    if (out.empty()) {
        graph.save(std::cout);
    } else {
        graph.save_file(out);
    }
    return 0;
}

// ---- reward ----

int reward_show(const std::string& user, const std::string& graph_path, const std::string& rewards_path)
{
    const auto graph = tt::SocialGraph::load_file(graph_path);
    const auto config = rewards_path.empty() ? tt::RewardConfig::defaults() : tt::RewardConfig::load_file(rewards_path);
    const auto& p = config.params;
    std::cout << "user " << user << '\n';
    std::cout << "total_reward " << shortest(tt::total_reward(graph, user, p)) << '\n';
    std::cout << "alpha " << shortest(p.alpha) << '\n';
    std::cout << "collective_activity_count " << graph.user(user).collective_activity_count << '\n';
    for (const auto* e : graph.incident_edges(user))
        std::cout << "edge " << e->other(user) << " m=" << e->finished_task_count
                  << " omega=" << shortest(tt::edge_weight(e->finished_task_count, p)) << '\n';
    return 0;
}

// ---- serve ----

struct ServeArgs {
    std::string config;
    std::optional<std::string> host;
    std::optional<int> port;
    std::optional<int> tick_ms;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> graph;
};

int serve(const ServeArgs& a)
{
    auto config = service_config(a.config);
    if (a.host)
        config.host = *a.host;
    if (a.port)
        config.port = *a.port;
    if (a.tick_ms)
        config.tick_ms = *a.tick_ms;
    if (a.seed)
        config.seed = *a.seed;
    if (a.graph)
        config.graph_path = *a.graph;
    config.validate();

    // Signals go to a dedicated thread so shutdown runs outside a handler.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    tt::platform::Service service(config);
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        if (sig != 0)
            service.stop();
    });
    try {
        service.listen([&](int port) {
            std::cerr << "tomtalker: serving on " << config.host << ':' << port << std::endl;
        });
    } catch (...) {
        pthread_kill(waiter.native_handle(), SIGTERM);
        waiter.join();
        throw;
    }
    // listen returns after stop(); release the waiter if the stop came from elsewhere.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"tomtalker: pet-robot social platform engine"};
    app.require_subcommand(1);

    auto* sim = app.add_subcommand("sim", "agent-based experiments");
    sim->require_subcommand(1);
    SimRunArgs run_args;
    auto* run = sim->add_subcommand("run", "weekly treatment/control simulation");
    run->add_option("--config", run_args.config, "simulation config (JSON)");
    run->add_option("--seed", run_args.seed, "override the seed");
    run->add_option("--weeks", run_args.weeks, "override the number of weeks");
    run->add_option("--tasks-per-week", run_args.tasks_per_week, "override tasks per agent per week");
    run->add_option("--out", run_args.out, "write per-week metrics as JSON lines");
    run->add_option("--csv", run_args.csv, "write per-week metrics as CSV");

    TrialArgs trial_args;
    auto* trial = sim->add_subcommand("trial", "breeder satisfaction trial");
    trial->add_option("--breeders", trial_args.breeders);
    trial->add_option("--interactions", trial_args.interactions, "interactions per breeder");
    trial->add_option("--seed", trial_args.seed);
    trial->add_option("--policy", trial_args.policy)->check(CLI::IsMember({"engine", "perfect"}));
    trial->add_option("--magnitude", trial_args.magnitude, "stimulus magnitude per recognized emotion");
    trial->add_option("--stats", trial_args.stats, "transition statistics (CSV)");
    trial->add_option("--confusion", trial_args.confusion, "recognition confusion matrix (CSV)");

    auto* pet = app.add_subcommand("pet", "pet emotion loop");
    pet->require_subcommand(1);
    ReplArgs repl_args;
    auto* repl = pet->add_subcommand("repl", "read commands from stdin, print JSON lines");
    repl->add_option("--config", repl_args.config, "service config (engine settings, data paths)");
    repl->add_option("--stats", repl_args.stats, "transition statistics (CSV)");
    repl->add_option("--props", repl_args.props, "prop catalog (JSON)");
    repl->add_option("--seed", repl_args.seed);

    std::string rec_user, rec_graph, rec_config;
    std::optional<tt::Timestamp> rec_now;
    auto* rec = app.add_subcommand("recommend", "friend recommendations for one user");
    rec->add_option("--user", rec_user)->required();
    rec->add_option("--graph", rec_graph, "graph file")->required();
    rec->add_option("--now", rec_now, "current time (default: newest edge)");
    rec->add_option("--config", rec_config, "service config supplying recommender settings");

    auto* graph = app.add_subcommand("graph", "graph persistence");
    graph->require_subcommand(1);
    std::string export_graph, export_out;
    auto* exp = graph->add_subcommand("export", "write a graph in canonical form");
    exp->add_option("--graph", export_graph, "graph file")->required();
    exp->add_option("--out", export_out, "destination (default stdout)");
    std::string import_in, import_out;
    auto* imp = graph->add_subcommand("import", "validate a graph and store it");
    imp->add_option("--in", import_in, "source (default stdin)");
    imp->add_option("--out", import_out, "destination (default stdout)");

    auto* reward = app.add_subcommand("reward", "reward inspection");
    reward->require_subcommand(1);
    std::string rw_user, rw_graph, rw_rewards;
    auto* show = reward->add_subcommand("show", "total reward and edge weights for a user");
    show->add_option("--user", rw_user)->required();
    show->add_option("--graph", rw_graph, "graph file")->required();
    show->add_option("--rewards", rw_rewards, "reward config (JSON)");

    ServeArgs serve_args;
    auto* srv = app.add_subcommand("serve", "run the HTTP service");
    srv->add_option("--config", serve_args.config, std::string("service config (default $") + tt::platform::kConfigEnv + ")");
    srv->add_option("--host", serve_args.host);
    srv->add_option("--port", serve_args.port);
    srv->add_option("--tick-ms", serve_args.tick_ms);
    srv->add_option("--seed", serve_args.seed);
    srv->add_option("--graph", serve_args.graph);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*run)
            return sim_run(run_args);
        if (*trial)
            return sim_trial(trial_args);
        if (*repl)
            return pet_repl(repl_args);
        if (*rec)
            return recommend_cmd(rec_user, rec_graph, rec_now, rec_config);
        if (*exp)
            return graph_export(export_graph, export_out);
        if (*imp)
            return graph_import(import_in, import_out);
        if (*show)
            return reward_show(rw_user, rw_graph, rw_rewards);
        if (*srv)
            return serve(serve_args);
    } catch (const std::exception& e) {
        std::cerr << "tomtalker: error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
