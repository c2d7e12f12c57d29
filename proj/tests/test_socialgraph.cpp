#include "expect.hpp"
#include "oracles.hpp"

#include "tomtalker/error.hpp"
#include "tomtalker/reward_params.hpp"
#include "tomtalker/socialgraph.hpp"

#include <doctest.h>

#include <sstream>
#include <thread>

using namespace tomtalker;
using expect::code_of;

namespace {

UserProfile person(const std::string& id, double lat = 43.88, double lon = 125.32, std::int64_t w = 0)
{
    UserProfile p;
    p.user_id = id;
    p.location = {lat, lon};
    p.attributes = {0.5, 0.5};
    p.preferences = {0.1, 0.2, 0.3};
    p.collective_activity_count = w;
    return p;
}

SocialGraph trio()
{
    SocialGraph g(CatalogManifest{2, 3});
    g.add_user(person("a"));
    g.add_user(person("b", 43.89));
    g.add_user(person("c", 43.90));
    return g;
}

} // namespace

TEST_CASE("edges are symmetric")
{
    auto g = trio();
    g.add_edge("a", "b");
    CHECK(g.neighbors("a") == std::set<UserId>{"b"});
    CHECK(g.neighbors("b") == std::set<UserId>{"a"});
    CHECK(g.neighbors("c").empty());
    CHECK(g.adjacent("b", "a"));
    CHECK(g.find_edge("b", "a") == g.find_edge("a", "b"));
}

TEST_CASE("self edges, unknown users and duplicates are rejected")
{
    auto g = trio();
    CHECK(code_of([&] { g.add_edge("a", "a"); }) == ErrorCode::SelfEdge);
    CHECK(code_of([&] { g.add_edge("a", "zz"); }) == ErrorCode::UnknownUser);
    g.add_edge("a", "b");
    CHECK(code_of([&] { g.add_edge("b", "a"); }) == ErrorCode::DuplicateId);

    SocialGraph empty(CatalogManifest{2, 3});
    CHECK(code_of([&] { empty.neighbors("a"); }) == ErrorCode::UnknownUser);
}

TEST_CASE("profiles are validated against the catalog")
{
    SocialGraph g(CatalogManifest{2, 3});
    auto p = person("x");
    p.attributes = {0.1};
    CHECK(code_of([&] { g.add_user(p); }) == ErrorCode::DimensionMismatch);
    p = person("x", 91.0);
    CHECK(code_of([&] { g.add_user(p); }) == ErrorCode::InvalidProfile);
    p = person("x", 0.0, -181.0);
    CHECK(code_of([&] { g.add_user(p); }) == ErrorCode::InvalidProfile);
    p = person("x");
    p.preferences[0] = 1.5;
    CHECK(code_of([&] { g.add_user(p); }) == ErrorCode::InvalidProfile);
    p = person("x", 43.0, 125.0, -1);
    CHECK(code_of([&] { g.add_user(p); }) == ErrorCode::InvalidProfile);
    g.add_user(person("x"));
    CHECK(code_of([&] { g.add_user(person("x")); }) == ErrorCode::DuplicateId);
    CHECK(code_of([&] { g.add_user(person("has space")); }) == ErrorCode::InvalidProfile);
}

TEST_CASE("completing a task increments the pair's count")
{
    auto g = trio();
    g.add_edge("a", "b", 4, 0);
    const auto id = g.issue_task("a", "b", 10).task_id;
    const auto done = g.complete_task(id, 12);
    CHECK(done.edge.finished_task_count == 5);
    CHECK(g.find_edge("a", "b")->finished_task_count == 5);
    CHECK(g.task(id).status == TaskStatus::Completed);
    CHECK(*g.task(id).completed_at >= g.task(id).issued_at);
}

TEST_CASE("first completed task creates the edge at m = 1")
{
    auto g = trio();
    const auto id = g.issue_task("c", "a", 3).task_id;
    const auto done = g.complete_task(id, 3);
    CHECK(done.edge.finished_task_count == 1);
    CHECK(done.edge.created_at == 3);
    CHECK(g.adjacent("a", "c"));
    CHECK(done.edge.weight == doctest::Approx(oracle::logistic(1, 1, 1, 5)).epsilon(1e-15));
}

TEST_CASE("task lifecycle errors")
{
    auto g = trio();
    const auto id = g.issue_task("a", "b", 0, 5).task_id;
    g.complete_task(id, 5);
    CHECK(code_of([&] { g.complete_task(id, 6); }) == ErrorCode::AlreadyCompleted);

    const auto late = g.issue_task("a", "c", 0, 5).task_id;
    CHECK(code_of([&] { g.complete_task(late, 6); }) == ErrorCode::TaskExpired);
    CHECK(g.task(late).status == TaskStatus::Expired);
    CHECK(code_of([&] { g.complete_task(late, 4); }) == ErrorCode::TaskExpired);
    CHECK_FALSE(g.adjacent("a", "c"));

    CHECK(code_of([&] { g.complete_task("t999", 1); }) == ErrorCode::UnknownTask);
    CHECK(code_of([&] { g.issue_task("a", "b", 5, 4); }) == ErrorCode::InvalidParams);
    const auto early = g.issue_task("b", "c", 10).task_id;
    CHECK(code_of([&] { g.complete_task(early, 9); }) == ErrorCode::InvalidParams);
}

TEST_CASE("expire_tasks only touches overdue issued tasks")
{
    auto g = trio();
    const auto keep = g.issue_task("a", "b", 0, 10).task_id;
    const auto drop = g.issue_task("a", "c", 0, 3).task_id;
    const auto open = g.issue_task("b", "c", 0).task_id;
    CHECK(g.expire_tasks(5) == 1);
    CHECK(g.task(keep).status == TaskStatus::Issued);
    CHECK(g.task(drop).status == TaskStatus::Expired);
    CHECK(g.task(open).status == TaskStatus::Issued);
}

TEST_CASE("self-initiated meetings count as finished tasks")
{
    auto g = trio();
    g.record_self_initiated("a", "b", 1);
    const auto done = g.record_self_initiated("b", "a", 2);
    CHECK(done.edge.finished_task_count == 2);
    CHECK(done.task.self_initiated);
}

TEST_CASE("listeners see every completion")
{
    auto g = trio();
    std::vector<TaskCompleted> seen;
    g.subscribe([&](const TaskCompleted& e) { seen.push_back(e); });
    g.complete_task(g.issue_task("a", "b", 0).task_id, 1);
    g.record_self_initiated("a", "b", 2);
    REQUIRE(seen.size() == 2);
    CHECK(seen[1].edge.finished_task_count == 2);
    CHECK(seen[1].task.self_initiated);
}

TEST_CASE("distance")
{
    SocialGraph g(CatalogManifest{2, 3});
    g.add_user(person("p", 0, 0));
    g.add_user(person("q", 0, 180));
    g.add_user(person("r", 0, 0));
    CHECK(g.distance_km("p", "r") == 0.0);
    const double half = g.distance_km("p", "q");
    CHECK(half == doctest::Approx(20015.0).epsilon(0.01));
    CHECK(half == doctest::Approx(oracle::great_circle_km(0, 0, 0, 180)).epsilon(1e-12));

    Rng rng(99);
    for (int i = 0; i < 100; ++i) {
        const GeoPoint a{rng.uniform(-90, 90), rng.uniform(-180, 180)};
        const GeoPoint b{rng.uniform(-90, 90), rng.uniform(-180, 180)};
        const double d = haversine_km(a, b);
        CHECK(d == haversine_km(b, a));
        CHECK(d >= 0.0);
        CHECK(d == doctest::Approx(oracle::great_circle_km(a.latitude, a.longitude, b.latitude, b.longitude))
                       .epsilon(1e-9));
    }
}

TEST_CASE("random mutation sequences keep the graph simple and the weight cache coherent")
{
    Rng rng(7);
    for (int round = 0; round < 20; ++round) {
        SocialGraph g(CatalogManifest{2, 3}, RewardParams{0.5, 1.0 + rng.uniform(), 0.2 + rng.uniform(), 4.0});
        const int n = 8;
        for (int i = 0; i < n; ++i)
            g.add_user(person("u" + std::to_string(i)));
        for (int op = 0; op < 60; ++op) {
            const auto a = "u" + std::to_string(rng.below(n));
            const auto b = "u" + std::to_string(rng.below(n));
            try {
                switch (rng.below(4)) {
                case 0: g.add_edge(a, b, 1 + static_cast<std::int64_t>(rng.below(5)), op); break;
                case 1: g.complete_task(g.issue_task(a, b, op).task_id, op); break;
                case 2: g.record_self_initiated(a, b, op); break;
                default: g.set_reward_params(RewardParams{0.5, 0.5 + rng.uniform(), 0.1 + rng.uniform(), 3.0}); break;
                }
            } catch (const Error& e) {
                CHECK((e.code() == ErrorCode::SelfEdge || e.code() == ErrorCode::DuplicateId));
            }
        }
        const auto adj = oracle::adjacency(g);
        const auto& p = g.reward_params();
        for (const auto& [id, _] : g.users()) {
            CHECK(g.neighbors(id) == adj.at(id));
            CHECK_FALSE(g.neighbors(id).count(id));
        }
        for (const auto& [key, e] : g.edges()) {
            CHECK(e.a < e.b);
            CHECK(e.weight == doctest::Approx(oracle::logistic(e.finished_task_count, p.q1, p.p1, p.c1)).epsilon(1e-14));
        }
    }
}

TEST_CASE("export then import yields an identical graph")
{
    Rng rng(11);
    for (int round = 0; round < 10; ++round) {
        auto g = oracle::random_graph(rng, 15, 0.25);
        Store s;
        s.store_id = "s1";
        s.location = {43.9, 125.3};
        s.events = {{"e1", 20, 100, 200}, {"e2", 5, 300, 400}};
        s.venues = {"hall", "garden"};
        g.add_store(s);
        const auto ids = std::vector<UserId>{g.users().begin()->first, std::next(g.users().begin())->first};
        g.issue_task(ids[0], ids[1], 5, 9);
        g.record_self_initiated(ids[0], ids[1], 6);
        g.issue_task(ids[0], ids[1], 7);

        std::stringstream first;
        g.save(first);
        const auto loaded = SocialGraph::load(first);
        CHECK(loaded.same_content(g));
        CHECK(loaded.users() == g.users());
        CHECK(loaded.edges() == g.edges());
        CHECK(loaded.stores() == g.stores());
        CHECK(loaded.tasks() == g.tasks());
        std::stringstream second;
        loaded.save(second);
        CHECK(second.str() == first.str());
    }
}

TEST_CASE("loaded graphs keep issuing fresh task ids")
{
    auto g = trio();
    g.issue_task("a", "b", 0);
    g.issue_task("a", "c", 0);
    std::stringstream ss;
    g.save(ss);
    auto loaded = SocialGraph::load(ss);
    const auto id = loaded.issue_task("b", "c", 1).task_id;
    CHECK(g.tasks().count(id) == 0);
}

TEST_CASE("loader reports problems with line numbers")
{
    auto load = [](const std::string& text) {
        std::istringstream in(text);
        return SocialGraph::load(in);
    };
    const std::string head = "catalog attributes=2 preferences=3\nparams alpha=0.5 q1=1 p1=1 c1=5\n";
    try {
        load(head + "# fine\n\nfriend a=x b=y\n");
        FAIL("unknown tag accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Malformed);
        CHECK(std::string(e.what()).find("line 5") != std::string::npos);
        CHECK(std::string(e.what()).find("friend") != std::string::npos);
    }
    CHECK(code_of([&] { load(head + "user lat=1 id=u lon=2 w=0 attributes=0,0 preferences=0,0,0\n"); }) ==
          ErrorCode::Malformed);
    CHECK(code_of([&] { load(head + "user id=u lat=abc lon=2 w=0 attributes=0,0 preferences=0,0,0\n"); }) ==
          ErrorCode::Malformed);
    CHECK(code_of([&] { load(head + "edge a=x b=y m=1 created_at=0\n"); }) == ErrorCode::UnknownUser);
    // omega is informational and recomputed
    const auto g = load(head +
                        "user id=x lat=1 lon=2 w=0 attributes=0,0 preferences=0,0,0\n"
                        "user id=y lat=1 lon=2 w=0 attributes=0,0 preferences=0,0,0\n"
                        "edge a=x b=y m=5 created_at=0 omega=0.123\n");
    CHECK(g.find_edge("x", "y")->weight == 0.5);
}

TEST_CASE("file persistence")
{
    auto g = trio();
    g.add_edge("a", "c", 2, 1);
    const std::string path = "socialgraph_test.graph";
    g.save_file(path);
    CHECK(SocialGraph::load_file(path).same_content(g));
    std::remove(path.c_str());
    try {
        SocialGraph::load_file("no/such/file.graph");
        FAIL("missing file accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Io);
        CHECK(std::string(e.what()).find("no/such/file.graph") != std::string::npos);
    }
}

TEST_CASE("graph store snapshots are immutable while writers publish")
{
    GraphStore store(trio());
    const auto before = store.snapshot();
    store.mutate([](SocialGraph& g) { g.add_edge("a", "b"); });
    CHECK(before->edge_count() == 0);
    CHECK(store.snapshot()->edge_count() == 1);

    const auto result = store.mutate([](SocialGraph& g) { return g.issue_task("b", "c", 0).task_id; });
    CHECK(store.snapshot()->tasks().count(result) == 1);

    // a failed mutation publishes nothing
    CHECK_THROWS_AS(store.mutate([](SocialGraph& g) { g.add_edge("a", "a"); }), Error);
    CHECK(store.snapshot()->edge_count() == 1);

    std::atomic<bool> done{false};
    std::atomic<int> bad{0};
    std::thread reader([&] {
        while (!done) {
            const auto snap = store.snapshot();
            for (const auto& [key, e] : snap->edges())
                if (!snap->neighbors(e.a).count(e.b))
                    ++bad;
        }
    });
    for (int i = 0; i < 200; ++i)
        store.mutate([i](SocialGraph& g) { g.record_self_initiated(i % 2 ? "a" : "b", "c", i); });
    done = true;
    reader.join();
    CHECK(bad == 0);
    CHECK(store.snapshot()->find_edge("a", "c")->finished_task_count == 100);
}
