#include "tomtalker/platform.hpp"
#include "tomtalker/recommend.hpp"
#include "tomtalker/socialgraph.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

using namespace tomtalker;
using nlohmann::json;

namespace {

const std::string kCli = TOMTALKER_CLI;
const std::string kData = TOMTALKER_DATA_DIR;

struct Outcome {
    int status = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path)
{
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Runs the CLI through the shell with `args` appended and optional stdin text.
Outcome cli(const std::string& args, const std::string& input = "", const std::string& env = "")
{
    const std::string in = "cli.stdin", out = "cli.stdout", err = "cli.stderr";
    std::ofstream(in) << input;
    const std::string cmd = env + " '" + kCli + "' " + args + " <" + in + " >" + out + " 2>" + err;
    const int raw = std::system(cmd.c_str());
    Outcome o;
    o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    o.out = slurp(out);
    o.err = slurp(err);
    return o;
}

std::vector<json> json_lines(const std::string& text)
{
    std::vector<json> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty())
            out.push_back(json::parse(line));
    return out;
}

} // namespace

TEST_CASE("recommend prints the library's ranking")
{
    const auto graph = SocialGraph::load_file(kData + "/fixture.graph");
    for (const std::string user : {"u1", "u3", "u5"}) {
        const auto o = cli("recommend --user " + user + " --graph '" + kData + "/fixture.graph' --now 100");
        REQUIRE(o.status == 0);
        const auto lines = json_lines(o.out);
        const auto want = recommend(graph, user, 100, RecommendParams{});
        REQUIRE(lines.size() == want.size());
        for (std::size_t i = 0; i < want.size(); ++i) {
            CHECK(lines[i].at("v") == 1);
            CHECK(lines[i].at("rank") == i + 1);
            CHECK(lines[i].at("candidate") == want[i].candidate);
            CHECK(lines[i].at("score").get<double>() == want[i].score);
            CHECK(lines[i].at("phase") == to_string(want[i].phase));
        }
    }
    // Without --now the newest edge time is used.
    const auto o = cli("recommend --user u1 --graph '" + kData + "/fixture.graph'");
    REQUIRE(o.status == 0);
    for (const auto& line : json_lines(o.out))
        CHECK(line.at("now") == 3);
}

TEST_CASE("errors name the culprit and exit non-zero")
{
    auto o = cli("sim run --config missing.json");
    CHECK(o.status == 1);
    CHECK(o.err.find("missing.json") != std::string::npos);
    CHECK(o.err.rfind("tomtalker: error:", 0) == 0);

    o = cli("recommend --user ghost --graph '" + kData + "/fixture.graph'");
    CHECK(o.status == 1);
    CHECK(o.err.find("ghost") != std::string::npos);

    o = cli("recommend --user u1");
    CHECK(o.status != 0);

    o = cli("graph export --graph nowhere.graph");
    CHECK(o.status == 1);
    CHECK(o.err.find("nowhere.graph") != std::string::npos);

    o = cli("graph import", "user id=broken\n");
    CHECK(o.status == 1);
    CHECK(o.err.find("line 1") != std::string::npos);
}

TEST_CASE("graph export and import round-trip")
{
    const auto exported = cli("graph export --graph '" + kData + "/fixture.graph'");
    REQUIRE(exported.status == 0);
    const auto imported = cli("graph import", exported.out);
    REQUIRE(imported.status == 0);
    CHECK(imported.out == exported.out);

    const auto o = cli("graph import --out roundtrip.graph", exported.out);
    REQUIRE(o.status == 0);
    CHECK(SocialGraph::load_file("roundtrip.graph").same_content(SocialGraph::load_file(kData + "/fixture.graph")));
}

TEST_CASE("reward show matches the library")
{
    const auto graph = SocialGraph::load_file(kData + "/fixture.graph");
    const auto o = cli("reward show --user u1 --graph '" + kData + "/fixture.graph'");
    REQUIRE(o.status == 0);
    std::istringstream in(o.out);
    std::string key;
    double value = 0;
    bool seen = false;
    while (in >> key) {
        if (key == "total_reward") {
            in >> value;
            seen = true;
            break;
        }
    }
    REQUIRE(seen);
    CHECK(value == doctest::Approx(total_reward(graph, "u1", graph.reward_params())).epsilon(1e-12));
}

TEST_CASE("pet repl")
{
    const auto o = cli("pet repl --stats '" + kData + "/transition_stats.csv' --props '" + kData + "/props.json'",
                       "state\nfeed bone\ntick 3\nenv 0.9,0.1 0.5,0.5 0.2\ntick\n# comment\nquit\ntick\n");
    CHECK(o.status == 0);
    const auto lines = json_lines(o.out);
    REQUIRE(lines.size() == 5);
    CHECK(lines[0].at("tick") == 0);
    CHECK(lines[1].at("tick") == 1);
    CHECK(lines[1].at("stimuli").at("S3").get<double>() > 0.0);
    CHECK(lines[3].at("tick") == 3);
    CHECK(lines[4].at("comfort").get<double>() == doctest::Approx(0.5));

    const auto bad = cli("pet repl --props '" + kData + "/props.json'", "feed cake\nbogus\ntick 0\nstate\n");
    CHECK(bad.status == 1);
    const auto out = json_lines(bad.out);
    REQUIRE(out.size() == 4);
    CHECK(out[0].contains("error"));
    CHECK(out[1].contains("error"));
    CHECK(out[2].contains("error"));
    CHECK(out[3].at("tick") == 0);
}

TEST_CASE("sim run and trial")
{
    auto o = cli("sim run --weeks 2 --seed 3 --out sim.jsonl --csv sim.csv");
    REQUIRE(o.status == 0);
    CHECK(o.out.find("treatment") != std::string::npos);
    CHECK(json_lines(slurp("sim.jsonl")).size() == 2 * 3 + 2);
    const auto again = cli("sim run --weeks 2 --seed 3");
    CHECK(again.out == o.out);

    o = cli("sim run --config '" + kData + "/sim.json' --weeks 1");
    CHECK(o.status == 0);

    o = cli("sim trial --breeders 4 --interactions 10 --policy perfect");
    REQUIRE(o.status == 0);
    CHECK(o.out.find("breeders 4") != std::string::npos);
    o = cli("sim trial --policy psychic");
    CHECK(o.status != 0);
    o = cli("sim trial --interactions 0");
    CHECK(o.status == 1);
    CHECK(o.err.find("EmptyTrial") != std::string::npos);
}

TEST_CASE("serve reads its config from the environment and stops on SIGTERM")
{
    const auto dir = std::filesystem::current_path() / "cli-serve";
    std::filesystem::create_directories(dir);
    const auto checkpoint = dir / "out.graph";
    std::filesystem::remove(checkpoint);
    {
        std::ofstream f(dir / "service.json");
        f << json{{"graph", kData + "/fixture.graph"},
                  {"graph_out", "out.graph"},
                  {"props", kData + "/props.json"},
                  {"port", 0},
                  {"tick_ms", 10},
                  {"pets", {"rex"}}}
                 .dump();
    }
    const std::string env = std::string(platform::kConfigEnv) + "=" + (dir / "service.json").string();

    int err_pipe[2];
    REQUIRE(pipe(err_pipe) == 0);
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, err_pipe[1], STDERR_FILENO);
    posix_spawn_file_actions_addclose(&actions, err_pipe[0]);
    std::vector<std::string> env_store;
    for (char** e = environ; *e; ++e)
        env_store.emplace_back(*e);
    env_store.push_back(env);
    std::vector<char*> envp;
    for (auto& e : env_store)
        envp.push_back(e.data());
    envp.push_back(nullptr);
    std::string prog = kCli, sub = "serve";
    char* argv[] = {prog.data(), sub.data(), nullptr};
    pid_t pid = 0;
    REQUIRE(posix_spawn(&pid, kCli.c_str(), &actions, nullptr, argv, envp.data()) == 0);
    posix_spawn_file_actions_destroy(&actions);
    close(err_pipe[1]);

    // "tomtalker: serving on 127.0.0.1:<port>"
    std::string banner;
    char c = 0;
    while (read(err_pipe[0], &c, 1) == 1 && c != '\n')
        banner += c;
    const auto colon = banner.rfind(':');
    REQUIRE_MESSAGE(colon != std::string::npos, banner);
    const int port = std::stoi(banner.substr(colon + 1));

    httplib::Client client("127.0.0.1", port);
    auto res = client.Get("/pet/rex/state");
    REQUIRE(res);
    CHECK(res->status == 200);
    res = client.Post("/tasks", R"({"a": "u3", "b": "u6", "issued_at": 1})", "application/json");
    REQUIRE(res);
    const auto id = json::parse(res->body).at("task").at("task_id").get<std::string>();
    res = client.Post("/tasks/" + id + "/complete", R"({"at": 2})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);

    kill(pid, SIGTERM);
    int status = 0;
    waitpid(pid, &status, 0);
    close(err_pipe[0]);
    CHECK(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 0);
    REQUIRE(std::filesystem::exists(checkpoint));
    CHECK(SocialGraph::load_file(checkpoint.string()).adjacent("u3", "u6"));
}
