#include "tomtalker/platform.hpp"

#include "tomtalker/error.hpp"

#include "json_util.hpp"
#include "text_util.hpp"

#include <httplib.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace tomtalker::platform {

using json = nlohmann::ordered_json;
using detail::read_field;

namespace {

std::string slurp(const std::string& path, std::string_view what)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open " + std::string(what) + " '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_body(const std::string& text, std::string_view what)
{
    try {
        return json::parse(text.empty() ? std::string("{}") : text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Malformed, std::string(what) + ": " + e.what());
    }
}

std::string resolve(const std::string& path, const std::string& base_dir)
{
    if (path.empty() || base_dir.empty() || std::filesystem::path(path).is_absolute())
        return path;
    return (std::filesystem::path(base_dir) / path).lexically_normal().string();
}

} // namespace

void PropCatalog::add(PropItem prop)
{
    prop.validate();
    if (items_.count(prop.prop_id))
        throw Error(ErrorCode::DuplicateId, "duplicate prop '" + prop.prop_id + "'");
    auto id = prop.prop_id;
    items_.emplace(std::move(id), std::move(prop));
}

const PropItem& PropCatalog::get(const std::string& prop_id) const
{
    auto it = items_.find(prop_id);
    if (it == items_.end())
        throw Error(ErrorCode::UnknownProp, "unknown prop '" + prop_id + "'");
    return it->second;
}

PropCatalog PropCatalog::from_json_text(const std::string& text)
{
    const auto j = parse_body(text, "prop catalog");
    PropCatalog catalog;
    try {
        for (const auto& p : j.at("props")) {
            PropItem item;
            item.prop_id = p.at("prop_id").get<std::string>();
            read_field(p, "liked", item.liked);
            read_field(p, "magnitude", item.magnitude);
            catalog.add(std::move(item));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Malformed, std::string("prop catalog: ") + e.what());
    }
    return catalog;
}

PropCatalog PropCatalog::load_file(const std::string& path)
{
    return from_json_text(slurp(path, "prop catalog"));
}

void ServiceConfig::validate() const
{
    if (port < 0 || port > 65535)
        throw Error(ErrorCode::InvalidParams, "port must lie in [0,65535]");
    if (pets.empty())
        throw Error(ErrorCode::InvalidParams, "at least one pet is required");
    if (std::set<std::string>(pets.begin(), pets.end()).size() != pets.size())
        throw Error(ErrorCode::DuplicateId, "pet ids must be unique");
    if (tick_ms < 0 || checkpoint_seconds < 0)
        throw Error(ErrorCode::InvalidParams, "tick_ms and checkpoint_seconds must be non-negative");
    if (history == 0)
        throw Error(ErrorCode::InvalidParams, "history must be positive");
    engine.validate();
    recommend.validate();
}

ServiceConfig ServiceConfig::from_json_text(const std::string& text, const std::string& base_dir)
{
    const auto j = parse_body(text, "service config");
    ServiceConfig c;
    try {
        read_field(j, "host", c.host);
        read_field(j, "port", c.port);
        read_field(j, "graph", c.graph_path);
        read_field(j, "graph_out", c.graph_out);
        read_field(j, "rewards", c.rewards_path);
        read_field(j, "transition_stats", c.transition_stats_path);
        read_field(j, "props", c.props_path);
        read_field(j, "pets", c.pets);
        read_field(j, "seed", c.seed);
        read_field(j, "tick_ms", c.tick_ms);
        read_field(j, "checkpoint_seconds", c.checkpoint_seconds);
        read_field(j, "history", c.history);
        if (j.contains("engine"))
            detail::read_engine(nlohmann::json::parse(j.at("engine").dump()), c.engine);
        if (j.contains("recommend"))
            detail::read_recommend(nlohmann::json::parse(j.at("recommend").dump()), c.recommend);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Malformed, std::string("service config: ") + e.what());
    }
    for (auto* p : {&c.graph_path, &c.graph_out, &c.rewards_path, &c.transition_stats_path, &c.props_path})
        *p = resolve(*p, base_dir);
    c.validate();
    return c;
}

ServiceConfig ServiceConfig::load_file(const std::string& path)
{
    const auto text = slurp(path, "service config");
    return from_json_text(text, std::filesystem::path(path).parent_path().string());
}

PetRuntime::PetRuntime(std::string pet_id, EngineConfig config, TransitionStats stats, std::uint64_t seed,
                       std::size_t history)
    : id_(std::move(pet_id)), engine_(std::move(config), std::move(stats), Emotion::Neutral, seed),
      capacity_(history)
{
    if (capacity_ == 0)
        throw Error(ErrorCode::InvalidParams, "history must be positive");
    history_.push_back(engine_.snapshot());
}

std::shared_ptr<const EmotionSnapshot> PetRuntime::tick()
{
    std::lock_guard ticking(tick_mutex_);
    auto snap = engine_.tick();
    {
        std::lock_guard lock(history_mutex_);
        history_.push_back(snap);
        while (history_.size() > capacity_)
            history_.pop_front();
    }
    history_cv_.notify_all();
    return snap;
}

std::vector<std::shared_ptr<const EmotionSnapshot>> PetRuntime::frames_after(std::int64_t after,
                                                                             std::chrono::milliseconds timeout) const
{
    std::unique_lock lock(history_mutex_);
    auto newer = [after](const auto& s) { return static_cast<std::int64_t>(s->tick) > after; };
    history_cv_.wait_for(lock, timeout, [&] { return closed_ || newer(history_.back()); });
    std::vector<std::shared_ptr<const EmotionSnapshot>> out;
    for (const auto& s : history_)
        if (newer(s))
            out.push_back(s);
    return out;
}

void PetRuntime::close()
{
    {
        std::lock_guard lock(history_mutex_);
        closed_ = true;
    }
    history_cv_.notify_all();
}

namespace {

template <typename Fn>
json per_emotion(Fn&& value)
{
    json j = json::object();
    for (auto e : kAllEmotions)
        j[std::string(to_string(e))] = value(e);
    return j;
}

json event_json(const RewardEvent& e)
{
    return {{"sequence", e.sequence},
            {"user", e.user},
            {"category", to_string(e.category)},
            {"kind", to_string(e.payload.kind)},
            {"item", e.payload.item},
            {"source", e.payload.source},
            {"at", e.at}};
}

json task_json(const OfflineTask& t)
{
    json j = {{"task_id", t.task_id},
              {"a", t.a},
              {"b", t.b},
              {"status", to_string(t.status)},
              {"issued_at", t.issued_at},
              {"self_initiated", t.self_initiated}};
    j["expires_at"] = t.expires_at ? json(*t.expires_at) : json(nullptr);
    j["completed_at"] = t.completed_at ? json(*t.completed_at) : json(nullptr);
    return j;
}

json edge_json(const SocialEdge& e)
{
    return {{"a", e.a}, {"b", e.b}, {"m", e.finished_task_count}, {"omega", e.weight}, {"created_at", e.created_at}};
}

Response reply(int status, const json& body)
{
    return Response{status, body.dump(), "application/json"};
}

json with_version(json body)
{
    json out = {{"v", kWireVersion}};
    out.update(body);
    return out;
}

int status_for(ErrorCode code)
{
    switch (code) {
    case ErrorCode::UnknownUser:
    case ErrorCode::UnknownTask:
    case ErrorCode::UnknownStore:
    case ErrorCode::UnknownProp:
    case ErrorCode::UnknownPet: return 404;
    case ErrorCode::DuplicateId:
    case ErrorCode::AlreadyCompleted: return 409;
    case ErrorCode::TaskExpired: return 410;
    case ErrorCode::NotApplicable: return 422;
    case ErrorCode::Io: return 500;
    default: return 400;
    }
}

Response error_reply(int status, std::string_view code, const std::string& message)
{
    return reply(status, with_version({{"error", {{"code", code}, {"message", message}}}}));
}

std::vector<std::string> segments(const std::string& path)
{
    std::vector<std::string> out;
    for (auto part : detail::split(path, '/'))
        if (!part.empty())
            out.emplace_back(part);
    return out;
}

Timestamp timestamp_field(const json& j, const char* key, Timestamp fallback)
{
    if (!j.contains(key) || j.at(key).is_null())
        return fallback;
    if (!j.at(key).is_number_integer())
        throw Error(ErrorCode::Malformed, std::string("'") + key + "' must be an integer");
    return j.at(key).get<Timestamp>();
}

} // namespace

std::string snapshot_json(const std::string& pet_id, const EmotionSnapshot& snap)
{
    json j = {{"v", kWireVersion},
              {"pet", pet_id},
              {"tick", snap.tick},
              {"time", snap.time},
              {"emotion", to_string(snap.current)}};
    j["probabilities"] = per_emotion([&](Emotion e) { return snap.probabilities[index(e)]; });
    j["stimuli"] = {{"S1", snap.stimuli[0]}, {"S2", snap.stimuli[1]}, {"S3", snap.stimuli[2]}, {"S4", snap.stimuli[3]}};
    j["personality"] = per_emotion([&](Emotion e) { return snap.personality[index(e)]; });
    json traces = json::array();
    for (const auto& t : snap.traces)
        traces.push_back({{"channel", to_string(t.channel)},
                          {"magnitude", t.magnitude},
                          {"onset", t.onset},
                          {"peak_time", t.peak_time},
                          {"peak_value", t.peak_value},
                          {"value", t.value}});
    j["traces"] = std::move(traces);
    j["transitioned_from"] = snap.transitioned_from ? json(to_string(*snap.transitioned_from)) : json(nullptr);
    j["comfort"] = snap.comfort ? json(*snap.comfort) : json(nullptr);
    return j.dump();
}

std::string sse_frame(const std::string& pet_id, const EmotionSnapshot& snap)
{
    return "id: " + std::to_string(snap.tick) + "\nevent: state\ndata: " + snapshot_json(pet_id, snap) + "\n\n";
}

namespace {

SocialGraph load_graph(const ServiceConfig& c)
{
    if (c.graph_path.empty())
        return SocialGraph(CatalogManifest{0, 0});
    return SocialGraph::load_file(c.graph_path);
}

RewardConfig load_rewards(const ServiceConfig& c)
{
    return c.rewards_path.empty() ? RewardConfig::defaults() : RewardConfig::load_file(c.rewards_path);
}

} // namespace

Service::Service(ServiceConfig config)
    : config_((config.validate(), std::move(config))), graph_(load_graph(config_)), rewards_(load_rewards(config_))
{
    if (!config_.props_path.empty())
        props_ = PropCatalog::load_file(config_.props_path);
    const auto stats = config_.transition_stats_path.empty() ? TransitionStats::uniform()
                                                             : TransitionStats::load_file(config_.transition_stats_path);
    for (std::size_t i = 0; i < config_.pets.size(); ++i) {
        const auto& id = config_.pets[i];
        pets_.emplace(id, std::make_unique<PetRuntime>(id, config_.engine, stats,
                                                       Rng::stream(config_.seed, {i}).next(), config_.history));
    }
    // The graph's α, q1, p1, c1 follow the reward configuration.
    const auto params = rewards_.config().params;
    graph_.mutate([&](SocialGraph& g) { g.set_reward_params(params); });
    for (const auto& [id, _] : graph_.snapshot()->users())
        rewards_.register_user(id);
    clock_ = [] {
        return static_cast<Timestamp>(
            std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
                .count());
    };
}

Service::~Service()
{
    try {
        stop();
    } catch (...) {
        // best effort on teardown
    }
}

PetRuntime& Service::pet(const std::string& pet_id)
{
    auto it = pets_.find(pet_id);
    if (it == pets_.end())
        throw Error(ErrorCode::UnknownPet, "unknown pet '" + pet_id + "'");
    return *it->second;
}

void Service::tick_all()
{
    for (auto& [_, p] : pets_)
        p->tick();
}

void Service::checkpoint()
{
    const auto& target = config_.graph_out.empty() ? config_.graph_path : config_.graph_out;
    if (target.empty())
        return;
    if (const auto dir = std::filesystem::path(target).parent_path(); !dir.empty())
        std::filesystem::create_directories(dir);
    graph_.snapshot()->save_file(target);
    checkpoints_ += 1;
}

Response Service::handle(const Request& request)
{
    requests_ += 1;
    Response r;
    try {
        r = route(request);
    } catch (const Error& e) {
        r = error_reply(status_for(e.code()), to_string(e.code()), e.what());
    } catch (const json::exception& e) {
        r = error_reply(400, to_string(ErrorCode::Malformed), e.what());
    }
    if (r.status >= 400)
        errors_ += 1;
    return r;
}

Response Service::route(const Request& request)
{
    const auto seg = segments(request.path);
    const auto& m = request.method;
    auto wrong_method = [&] { return error_reply(405, "MethodNotAllowed", m + " " + request.path); };

    if (seg.size() == 3 && seg[0] == "pet") {
        if (seg[2] == "state")
            return m == "GET" ? get_state(seg[1]) : wrong_method();
        if (seg[2] == "feed")
            return m == "POST" ? post_feed(seg[1], request.body) : wrong_method();
        if (seg[2] == "environment")
            return m == "POST" ? post_environment(seg[1], request.body) : wrong_method();
        if (seg[2] == "stream") {
            // Without the HTTP transport the stream degrades to the current frame.
            if (m != "GET")
                return wrong_method();
            const auto snap = pet(seg[1]).snapshot();
            return Response{200, sse_frame(seg[1], *snap), "text/event-stream"};
        }
    }
    if (seg.size() == 3 && seg[0] == "users") {
        if (seg[2] == "recommendations")
            return m == "GET" ? get_recommendations(seg[1], request) : wrong_method();
        if (seg[2] == "reward")
            return m == "GET" ? get_reward(seg[1]) : wrong_method();
    }
    if (seg.size() == 1 && seg[0] == "tasks")
        return m == "POST" ? post_task(request.body) : wrong_method();
    if (seg.size() == 3 && seg[0] == "tasks" && seg[2] == "complete")
        return m == "POST" ? post_complete(seg[1], request.body) : wrong_method();
    if (seg.size() == 1 && seg[0] == "graph")
        return m == "GET" ? get_graph() : wrong_method();
    if (seg.size() == 1 && seg[0] == "metrics")
        return m == "GET" ? get_metrics() : wrong_method();
    return error_reply(404, "NotFound", "no route for " + m + " " + request.path);
}

Response Service::get_state(const std::string& pet_id)
{
    const auto snap = pet(pet_id).snapshot();
    return Response{200, snapshot_json(pet_id, *snap), "application/json"};
}

Response Service::post_feed(const std::string& pet_id, const std::string& body)
{
    auto& runtime = pet(pet_id);
    const auto j = parse_body(body, "feed request");
    if (!j.contains("prop_id") || !j.at("prop_id").is_string())
        throw Error(ErrorCode::Malformed, "feed request needs a string 'prop_id'");
    const auto& prop = props_.get(j.at("prop_id").get<std::string>());
    if (j.contains("request_id")) {
        const auto rid = j.at("request_id").get<std::string>();
        std::lock_guard lock(feed_ids_mutex_);
        if (!feed_ids_[pet_id].insert(rid).second)
            return error_reply(409, to_string(ErrorCode::DuplicateId), "request '" + rid + "' was already applied");
    }
    runtime.feed(prop);
    const auto [s3, s4] = breeder_stimuli(prop);
    return reply(202, with_version({{"pet", pet_id},
                                    {"prop_id", prop.prop_id},
                                    {"liked", prop.liked},
                                    {"S3", s3},
                                    {"S4", s4},
                                    {"applies_at_tick", runtime.snapshot()->tick + 1}}));
}

Response Service::post_environment(const std::string& pet_id, const std::string& body)
{
    auto& runtime = pet(pet_id);
    const auto j = parse_body(body, "environment request");
    SensorFrame frame;
    try {
        frame.readings = j.at("readings").get<std::vector<double>>();
        frame.weights = j.at("weights").get<std::vector<double>>();
        read_field(j, "threshold", frame.threshold);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Malformed, std::string("environment request: ") + e.what());
    }
    const double e = comfort(frame);  // validates
    const auto [s1, s2] = env_stimuli(e, frame.threshold);
    runtime.set_environment(frame);
    return reply(202, with_version({{"pet", pet_id},
                                    {"comfort", e},
                                    {"S1", s1},
                                    {"S2", s2},
                                    {"applies_at_tick", runtime.snapshot()->tick + 1}}));
}

Response Service::get_recommendations(const std::string& user, const Request& request)
{
    const auto graph = graph_.snapshot();
    Timestamp now = clock_();
    if (auto it = request.query.find("now"); it != request.query.end())
        now = detail::parse_int(it->second, "now");
    const auto phase = choose_phase(*graph, user, now, config_.recommend);
    const auto recs = recommend(*graph, user, now, config_.recommend);
    json items = json::array();
    for (const auto& r : recs) {
        json comps = json::array();
        for (const auto& c : r.components)
            comps.push_back({{"vertices", c.vertex_count}, {"edges", c.edge_count}, {"members", c.members}});
        items.push_back({{"candidate", r.candidate},
                         {"score", r.score},
                         {"phase", to_string(r.phase)},
                         {"similarity", r.similarity},
                         {"distance_km", r.distance_km},
                         {"structure_term", r.structure_term},
                         {"similarity_term", r.similarity_term},
                         {"components", std::move(comps)}});
    }
    return reply(200, with_version({{"user", user}, {"now", now}, {"phase", to_string(phase)}, {"items", items}}));
}

Response Service::get_reward(const std::string& user)
{
    const auto graph = graph_.snapshot();
    const auto params = rewards_.config().params;
    const double total = total_reward(*graph, user, params);
    const auto ledger = rewards_.ledger(user);

    json edges = json::array();
    for (const auto* e : graph->incident_edges(user))
        edges.push_back({{"other", e->other(user)}, {"m", e->finished_task_count}, {"omega", e->weight}});
    json props = json::object();
    for (const auto& p : ledger.virtual_props)
        props[p] = ledger.virtual_props.count(p);
    json badges = json::array();
    for (const auto& a : ledger.achievements)
        badges.push_back({{"badge", a.badge}, {"earned_at", a.earned_at}});
    json history = json::array();
    for (const auto& e : ledger.history)
        history.push_back(event_json(e));

    return reply(200, with_version({{"user", user},
                                    {"total_reward", total},
                                    {"alpha", params.alpha},
                                    {"collective_activity_count", graph->user(user).collective_activity_count},
                                    {"edges", edges},
                                    {"completed_tasks", ledger.completed_tasks},
                                    {"props", props},
                                    {"physical", ledger.physical_rewards},
                                    {"badges", badges},
                                    {"history", history}}));
}

Response Service::post_task(const std::string& body)
{
    const auto j = parse_body(body, "task request");
    if (!j.contains("a") || !j.contains("b"))
        throw Error(ErrorCode::Malformed, "task request needs 'a' and 'b'");
    const auto a = j.at("a").get<std::string>();
    const auto b = j.at("b").get<std::string>();
    const auto issued = timestamp_field(j, "issued_at", clock_());
    std::optional<Timestamp> expires;
    if (j.contains("expires_at") && !j.at("expires_at").is_null())
        expires = timestamp_field(j, "expires_at", 0);
    const auto task = graph_.mutate([&](SocialGraph& g) { return OfflineTask(g.issue_task(a, b, issued, expires)); });
    return reply(201, with_version({{"task", task_json(task)}}));
}

Response Service::post_complete(const std::string& task_id, const std::string& body)
{
    const auto j = parse_body(body, "complete request");
    const auto at = timestamp_field(j, "at", clock_());
    const auto done = graph_.mutate([&](SocialGraph& g) { return g.complete_task(task_id, at); });
    const auto events = rewards_.on_task_completed(done);
    json granted = json::array();
    for (const auto& e : events)
        granted.push_back(event_json(e));
    return reply(200, with_version({{"task", task_json(done.task)}, {"edge", edge_json(done.edge)}, {"rewards", granted}}));
}

Response Service::get_graph()
{
    const auto graph = graph_.snapshot();
    json nodes = json::array();
    for (const auto& [id, u] : graph->users())
        nodes.push_back({{"id", id},
                         {"lat", u.location.latitude},
                         {"lon", u.location.longitude},
                         {"w", u.collective_activity_count},
                         {"degree", graph->neighbors(id).size()}});
    json edges = json::array();
    for (const auto& [_, e] : graph->edges())
        edges.push_back(edge_json(e));
    return reply(200, with_version({{"nodes", nodes}, {"edges", edges}}));
}

Response Service::get_metrics()
{
    const auto graph = graph_.snapshot();
    std::size_t issued = 0, completed = 0, expired = 0;
    for (const auto& [_, t] : graph->tasks()) {
        issued += t.status == TaskStatus::Issued;
        completed += t.status == TaskStatus::Completed;
        expired += t.status == TaskStatus::Expired;
    }
    json pets = json::object();
    for (const auto& [id, p] : pets_) {
        const auto s = p->snapshot();
        pets[id] = {{"tick", s->tick}, {"emotion", to_string(s->current)}};
    }
    return reply(200, with_version({{"requests", requests_.load()},
                                    {"errors", errors_.load()},
                                    {"streams_open", streams_open_.load()},
                                    {"checkpoints", checkpoints_.load()},
                                    {"users", graph->users().size()},
                                    {"edges", graph->edge_count()},
                                    {"tasks", {{"issued", issued}, {"completed", completed}, {"expired", expired}}},
                                    {"pets", pets}}));
}

void Service::run_loop()
{
    using namespace std::chrono;
    const auto period = milliseconds(config_.tick_ms);
    auto next_tick = steady_clock::now() + period;
    auto next_checkpoint = steady_clock::now() + seconds(config_.checkpoint_seconds);
    std::unique_lock lock(loop_mutex_);
    while (running_) {
        auto wake = config_.tick_ms > 0 ? next_tick : steady_clock::now() + hours(1);
        if (config_.checkpoint_seconds > 0)
            wake = std::min(wake, next_checkpoint);
        loop_cv_.wait_until(lock, wake, [&] { return !running_; });
        if (!running_)
            break;
        const auto now = steady_clock::now();
        if (config_.tick_ms > 0 && now >= next_tick) {
            lock.unlock();
            tick_all();
            lock.lock();
            next_tick += period;
            if (next_tick < now)  // fell behind; do not burst
                next_tick = now + period;
        }
        if (config_.checkpoint_seconds > 0 && now >= next_checkpoint) {
            lock.unlock();
            checkpoint();
            lock.lock();
            next_checkpoint = now + seconds(config_.checkpoint_seconds);
        }
    }
}

void Service::listen(const std::function<void(int)>& on_bound)
{
    httplib::Server server;
    // httplib's default adds SO_REUSEPORT, which lets a second service bind a
    // busy port silently. Keep plain SO_REUSEADDR so restarts still work.
    server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });

    auto adapt = [this](const httplib::Request& req, httplib::Response& res) {
        Request r{req.method, req.path, req.body, {}};
        for (const auto& [k, v] : req.params)
            r.query[k] = v;
        const auto out = handle(r);
        res.status = out.status;
        res.set_content(out.body, out.content_type);
    };
    server.Get(R"(/pet/([^/]+)/state)", adapt);
    server.Post(R"(/pet/([^/]+)/feed)", adapt);
    server.Post(R"(/pet/([^/]+)/environment)", adapt);
    server.Get(R"(/users/([^/]+)/recommendations)", adapt);
    server.Get(R"(/users/([^/]+)/reward)", adapt);
    server.Post("/tasks", adapt);
    server.Post(R"(/tasks/([^/]+)/complete)", adapt);
    server.Get("/graph", adapt);
    server.Get("/metrics", adapt);

    server.Get(R"(/pet/([^/]+)/stream)", [this](const httplib::Request& req, httplib::Response& res) {
        requests_ += 1;
        const std::string id = req.matches[1];
        PetRuntime* runtime = nullptr;
        try {
            runtime = &pet(id);
        } catch (const Error& e) {
            errors_ += 1;
            const auto r = error_reply(404, to_string(e.code()), e.what());
            res.status = r.status;
            res.set_content(r.body, r.content_type);
            return;
        }
        // Resume after Last-Event-ID or ?since=; otherwise start at the current frame.
        std::int64_t after = static_cast<std::int64_t>(runtime->snapshot()->tick) - 1;
        std::string resume = req.get_header_value("Last-Event-ID");
        if (resume.empty() && req.has_param("since"))
            resume = req.get_param_value("since");
        if (!resume.empty()) {
            try {
                after = detail::parse_int(resume, "since");
            } catch (const Error& e) {
                errors_ += 1;
                res.status = 400;
                res.set_content(error_reply(400, to_string(e.code()), e.what()).body, "application/json");
                return;
            }
        }
        auto last = std::make_shared<std::int64_t>(after);
        streams_open_ += 1;
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [this, runtime, id, last](std::size_t, httplib::DataSink& sink) {
                if (!running_) {
                    sink.done();
                    return true;
                }
                for (const auto& snap : runtime->frames_after(*last, std::chrono::milliseconds(250))) {
                    const auto frame = sse_frame(id, *snap);
                    if (!sink.write(frame.data(), frame.size()))
                        return false;
                    *last = static_cast<std::int64_t>(snap->tick);
                }
                return true;
            },
            [this](bool) { streams_open_ -= 1; });
    });

    int port = config_.port;
    if (port == 0) {
        port = server.bind_to_any_port(config_.host);
        if (port < 0)
            throw Error(ErrorCode::Io, "cannot bind " + config_.host);
    } else if (!server.bind_to_port(config_.host, port)) {
        throw Error(ErrorCode::Io, "cannot bind " + config_.host + ":" + std::to_string(port) + " (port busy?)");
    }

    running_ = true;
    served_ = true;
    {
        std::lock_guard lock(server_mutex_);
        server_ = &server;
    }
    loop_ = std::thread([this] { run_loop(); });
    if (on_bound)
        on_bound(port);
    server.listen_after_bind();
    {
        std::lock_guard lock(server_mutex_);
        server_ = nullptr;
    }
    stop();
}

void Service::stop()
{
    {
        std::lock_guard lock(loop_mutex_);
        running_ = false;
    }
    loop_cv_.notify_all();
    for (auto& [_, p] : pets_)
        p->close();
    {
        std::lock_guard lock(server_mutex_);
        // httplib ignores stop() until it is accepting, so wait for that first.
        if (server_) {
            server_->wait_until_ready();
            server_->stop();
        }
    }
    if (loop_.joinable() && loop_.get_id() != std::this_thread::get_id())
        loop_.join();
    // Flush once, after the server has actually come down.
    std::lock_guard lock(server_mutex_);
    if (served_ && server_ == nullptr)
        std::call_once(flushed_, [this] { checkpoint(); });
}

} // namespace tomtalker::platform
