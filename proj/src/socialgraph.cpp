#include "tomtalker/socialgraph.hpp"

#include "tomtalker/error.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace tomtalker {

namespace {

constexpr double kEarthRadiusKm = 6371.0088;

std::pair<UserId, UserId> edge_key(const UserId& u, const UserId& v)
{
    return u < v ? std::pair{u, v} : std::pair{v, u};
}

bool valid_id(std::string_view id)
{
    if (id.empty())
        return false;
    return std::none_of(id.begin(), id.end(), [](char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '=' || c == ',' || c == ';' ||
               c == ':';
    });
}

void require_id(std::string_view id, std::string_view kind)
{
    if (!valid_id(id))
        throw Error(ErrorCode::InvalidProfile,
                    std::string(kind) + " id must be non-empty without whitespace or =,;: characters: '" +
                        std::string(id) + "'");
}

void validate_location(const GeoPoint& p)
{
    if (!(p.latitude >= -90.0 && p.latitude <= 90.0))
        throw Error(ErrorCode::InvalidProfile, "latitude out of range");
    if (!(p.longitude >= -180.0 && p.longitude <= 180.0))
        throw Error(ErrorCode::InvalidProfile, "longitude out of range");
}

TaskStatus parse_status(std::string_view s)
{
    if (s == "issued") return TaskStatus::Issued;
    if (s == "completed") return TaskStatus::Completed;
    if (s == "expired") return TaskStatus::Expired;
    throw Error(ErrorCode::Malformed, "unknown task status '" + std::string(s) + "'");
}

std::string join_doubles(const std::vector<double>& xs)
{
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ',';
        out += detail::format_double(xs[i]);
    }
    return out;
}

std::vector<double> parse_doubles(std::string_view s, std::string_view what)
{
    std::vector<double> out;
    if (s.empty())
        return out;
    for (auto part : detail::split(s, ','))
        out.push_back(detail::parse_double(part, what));
    return out;
}

// One parsed line: tag followed by key=value fields in the order written.
class Record {
public:
    Record(std::string_view line, std::size_t line_no) : line_no_(line_no)
    {
        auto parts = detail::split(line, ' ');
        tag_ = parts.front();
        for (std::size_t i = 1; i < parts.size(); ++i) {
            if (parts[i].empty())
                continue;
            const auto eq = parts[i].find('=');
            if (eq == std::string_view::npos)
                fail("field without '=': '" + std::string(parts[i]) + "'");
            fields_.emplace_back(parts[i].substr(0, eq), parts[i].substr(eq + 1));
        }
    }

    std::string_view tag() const { return tag_; }

    // Next field must be `key`.
    std::string_view take(std::string_view key)
    {
        if (next_ >= fields_.size() || fields_[next_].first != key)
            fail("expected field '" + std::string(key) + "'");
        return fields_[next_++].second;
    }

    std::optional<std::string_view> take_optional(std::string_view key)
    {
        if (next_ < fields_.size() && fields_[next_].first == key)
            return fields_[next_++].second;
        return std::nullopt;
    }

    void finish() const
    {
        if (next_ != fields_.size())
            fail("unexpected field '" + std::string(fields_[next_].first) + "'");
    }

    double number(std::string_view key)
    {
        const auto text = take(key);
        return wrap([&] { return detail::parse_double(text, key); });
    }
    std::int64_t integer(std::string_view key)
    {
        const auto text = take(key);
        return wrap([&] { return detail::parse_int(text, key); });
    }

    template <typename Fn>
    auto wrap(Fn&& fn) -> decltype(fn())
    {
        try {
            return fn();
        } catch (const Error& e) {
            if (e.code() == ErrorCode::Malformed)
                fail(e.detail());
            throw;
        }
    }

    [[noreturn]] void fail(const std::string& msg) const
    {
        throw Error(ErrorCode::Malformed, "line " + std::to_string(line_no_) + ": " + msg);
    }

    std::size_t line_no() const { return line_no_; }

private:
    std::size_t line_no_;
    std::string_view tag_;
    std::vector<std::pair<std::string_view, std::string_view>> fields_;
    std::size_t next_ = 0;
};

} // namespace

std::string_view to_string(TaskStatus status)
{
    switch (status) {
    case TaskStatus::Issued: return "issued";
    case TaskStatus::Completed: return "completed";
    case TaskStatus::Expired: return "expired";
    }
    return "issued";
}

double haversine_km(const GeoPoint& p, const GeoPoint& q)
{
    constexpr double deg = std::numbers::pi / 180.0;
    const double phi1 = p.latitude * deg;
    const double phi2 = q.latitude * deg;
    const double dphi = (q.latitude - p.latitude) * deg;
    const double dlambda = (q.longitude - p.longitude) * deg;
    const double s1 = std::sin(dphi / 2.0);
    const double s2 = std::sin(dlambda / 2.0);
    const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

SocialGraph::SocialGraph(CatalogManifest catalog, RewardParams params)
    : catalog_(catalog), params_(params)
{
    params_.validate();
}

void SocialGraph::set_reward_params(const RewardParams& params)
{
    params.validate();
    params_ = params;
    for (auto& [key, edge] : edges_)
        edge.weight = edge_weight(edge.finished_task_count, params_);
}

void SocialGraph::validate_profile(const UserProfile& p) const
{
    require_id(p.user_id, "user");
    validate_location(p.location);
    if (p.attributes.size() != catalog_.attribute_dim || p.preferences.size() != catalog_.preference_dim)
        throw Error(ErrorCode::DimensionMismatch,
                    "profile '" + p.user_id + "' does not match catalog dimensions");
    auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!std::all_of(p.attributes.begin(), p.attributes.end(), in_unit) ||
        !std::all_of(p.preferences.begin(), p.preferences.end(), in_unit))
        throw Error(ErrorCode::InvalidProfile, "profile '" + p.user_id + "' has features outside [0,1]");
    if (p.collective_activity_count < 0)
        throw Error(ErrorCode::InvalidProfile, "negative activity count");
}

const UserId& SocialGraph::add_user(UserProfile profile)
{
    validate_profile(profile);
    if (users_.count(profile.user_id))
        throw Error(ErrorCode::DuplicateId, "user '" + profile.user_id + "' already exists");
    auto id = profile.user_id;
    adjacency_[id];
    auto [it, inserted] = users_.emplace(id, std::move(profile));
    return it->first;
}

const UserProfile& SocialGraph::user(const UserId& u) const
{
    auto it = users_.find(u);
    if (it == users_.end())
        throw Error(ErrorCode::UnknownUser, "'" + u + "'");
    return it->second;
}

UserProfile& SocialGraph::mutable_user(const UserId& u)
{
    auto it = users_.find(u);
    if (it == users_.end())
        throw Error(ErrorCode::UnknownUser, "'" + u + "'");
    return it->second;
}

void SocialGraph::record_collective_activity(const UserId& u, std::int64_t count)
{
    if (count < 0)
        throw Error(ErrorCode::InvalidParams, "activity count increment must be non-negative");
    mutable_user(u).collective_activity_count += count;
}

const SocialEdge& SocialGraph::add_edge(const UserId& u, const UserId& v, std::int64_t finished_tasks,
                                        Timestamp at)
{
    user(u);
    user(v);
    if (u == v)
        throw Error(ErrorCode::SelfEdge, "'" + u + "'");
    if (finished_tasks < 1)
        throw Error(ErrorCode::InvalidParams, "an edge needs at least one finished task");
    auto key = edge_key(u, v);
    if (edges_.count(key))
        throw Error(ErrorCode::DuplicateId, "edge " + key.first + "-" + key.second + " already exists");
    SocialEdge edge{key.first, key.second, finished_tasks, edge_weight(finished_tasks, params_), at};
    adjacency_[u].insert(v);
    adjacency_[v].insert(u);
    return edges_.emplace(key, std::move(edge)).first->second;
}

SocialEdge& SocialGraph::bump_edge(const UserId& u, const UserId& v, Timestamp at)
{
    auto key = edge_key(u, v);
    auto it = edges_.find(key);
    if (it == edges_.end()) {
        add_edge(u, v, 1, at);
        return edges_.at(key);
    }
    auto& edge = it->second;
    edge.finished_task_count += 1;
    edge.weight = edge_weight(edge.finished_task_count, params_);
    return edge;
}

const std::set<UserId>& SocialGraph::neighbors(const UserId& u) const
{
    auto it = adjacency_.find(u);
    if (it == adjacency_.end())
        throw Error(ErrorCode::UnknownUser, "'" + u + "'");
    return it->second;
}

bool SocialGraph::adjacent(const UserId& u, const UserId& v) const
{
    return edges_.count(edge_key(u, v)) != 0;
}

const SocialEdge* SocialGraph::find_edge(const UserId& u, const UserId& v) const
{
    auto it = edges_.find(edge_key(u, v));
    return it == edges_.end() ? nullptr : &it->second;
}

std::vector<const SocialEdge*> SocialGraph::incident_edges(const UserId& u) const
{
    std::vector<const SocialEdge*> out;
    for (const auto& v : neighbors(u))
        out.push_back(&edges_.at(edge_key(u, v)));
    return out;
}

void SocialGraph::add_store(Store store)
{
    require_id(store.store_id, "store");
    validate_location(store.location);
    for (const auto& ev : store.events) {
        require_id(ev.event_id, "event");
        if (ev.capacity <= 0)
            throw Error(ErrorCode::InvalidParams, "event '" + ev.event_id + "' needs a positive capacity");
        if (ev.ends_at < ev.starts_at)
            throw Error(ErrorCode::InvalidParams, "event '" + ev.event_id + "' ends before it starts");
    }
    for (const auto& venue : store.venues)
        require_id(venue, "venue");
    if (stores_.count(store.store_id))
        throw Error(ErrorCode::DuplicateId, "store '" + store.store_id + "' already exists");
    auto id = store.store_id;
    stores_.emplace(std::move(id), std::move(store));
}

std::string SocialGraph::next_task_id()
{
    std::string id;
    do {
        id = "t" + std::to_string(++task_counter_);
    } while (tasks_.count(id));
    return id;
}

const OfflineTask& SocialGraph::issue_task(const UserId& u, const UserId& v, Timestamp issued_at,
                                           std::optional<Timestamp> expires_at)
{
    user(u);
    user(v);
    if (u == v)
        throw Error(ErrorCode::SelfEdge, "task pairs '" + u + "' with itself");
    if (expires_at && *expires_at < issued_at)
        throw Error(ErrorCode::InvalidParams, "task expires before it is issued");
    OfflineTask task;
    task.task_id = next_task_id();
    std::tie(task.a, task.b) = edge_key(u, v);
    task.issued_at = issued_at;
    task.expires_at = expires_at;
    auto id = task.task_id;
    return tasks_.emplace(std::move(id), std::move(task)).first->second;
}

TaskCompleted SocialGraph::finish(OfflineTask& task, Timestamp at)
{
    if (at < task.issued_at)
        throw Error(ErrorCode::InvalidParams, "task '" + task.task_id + "' completed before it was issued");
    auto& edge = bump_edge(task.a, task.b, at);
    task.status = TaskStatus::Completed;
    task.completed_at = at;
    TaskCompleted event{task, edge};
    for (const auto& listener : listeners_)
        listener(event);
    return event;
}

TaskCompleted SocialGraph::complete_task(const TaskId& id, Timestamp at)
{
    auto it = tasks_.find(id);
    if (it == tasks_.end())
        throw Error(ErrorCode::UnknownTask, "'" + id + "'");
    auto& task = it->second;
    if (task.status == TaskStatus::Completed)
        throw Error(ErrorCode::AlreadyCompleted, "task '" + id + "'");
    if (task.status == TaskStatus::Expired || (task.expires_at && at > *task.expires_at)) {
        task.status = TaskStatus::Expired;
        throw Error(ErrorCode::TaskExpired, "task '" + id + "'");
    }
    return finish(task, at);
}

TaskCompleted SocialGraph::record_self_initiated(const UserId& u, const UserId& v, Timestamp at)
{
    const auto id = issue_task(u, v, at).task_id;
    auto& task = tasks_.at(id);
    task.self_initiated = true;
    return finish(task, at);
}

std::size_t SocialGraph::expire_tasks(Timestamp now)
{
    std::size_t n = 0;
    for (auto& [id, task] : tasks_) {
        if (task.status == TaskStatus::Issued && task.expires_at && *task.expires_at < now) {
            task.status = TaskStatus::Expired;
            ++n;
        }
    }
    return n;
}

const OfflineTask& SocialGraph::task(const TaskId& id) const
{
    auto it = tasks_.find(id);
    if (it == tasks_.end())
        throw Error(ErrorCode::UnknownTask, "'" + id + "'");
    return it->second;
}

double SocialGraph::distance_km(const UserId& u, const UserId& v) const
{
    return haversine_km(user(u).location, user(v).location);
}

bool SocialGraph::same_content(const SocialGraph& other) const
{
    return catalog_ == other.catalog_ && params_ == other.params_ && users_ == other.users_ &&
           adjacency_ == other.adjacency_ && edges_ == other.edges_ && stores_ == other.stores_ &&
           tasks_ == other.tasks_;
}

void SocialGraph::save(std::ostream& out) const
{
    using detail::format_double;
    out << "catalog attributes=" << catalog_.attribute_dim << " preferences=" << catalog_.preference_dim << '\n';
    out << "params alpha=" << format_double(params_.alpha) << " q1=" << format_double(params_.q1)
        << " p1=" << format_double(params_.p1) << " c1=" << format_double(params_.c1) << '\n';
    for (const auto& [id, u] : users_) {
        out << "user id=" << id << " lat=" << format_double(u.location.latitude)
            << " lon=" << format_double(u.location.longitude) << " w=" << u.collective_activity_count
            << " attributes=" << join_doubles(u.attributes) << " preferences=" << join_doubles(u.preferences)
            << '\n';
    }
    for (const auto& [key, e] : edges_) {
        out << "edge a=" << e.a << " b=" << e.b << " m=" << e.finished_task_count << " created_at=" << e.created_at
            << " omega=" << format_double(e.weight) << '\n';
    }
    for (const auto& [id, s] : stores_) {
        out << "store id=" << id << " lat=" << format_double(s.location.latitude)
            << " lon=" << format_double(s.location.longitude) << " events=";
        for (std::size_t i = 0; i < s.events.size(); ++i) {
            const auto& ev = s.events[i];
            out << (i ? ";" : "") << ev.event_id << ':' << ev.capacity << ':' << ev.starts_at << ':' << ev.ends_at;
        }
        out << " venues=";
        for (std::size_t i = 0; i < s.venues.size(); ++i)
            out << (i ? ";" : "") << s.venues[i];
        out << '\n';
    }
    for (const auto& [id, t] : tasks_) {
        out << "task id=" << id << " a=" << t.a << " b=" << t.b << " status=" << to_string(t.status)
            << " issued_at=" << t.issued_at;
        if (t.expires_at)
            out << " expires_at=" << *t.expires_at;
        if (t.completed_at)
            out << " completed_at=" << *t.completed_at;
        if (t.self_initiated)
            out << " self=1";
        out << '\n';
    }
}

SocialGraph SocialGraph::load(std::istream& in)
{
    SocialGraph g;
    bool have_catalog = false;
    bool have_users = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto view = detail::trim(line);
        if (view.empty() || view.front() == '#')
            continue;
        Record rec(view, line_no);
        const auto tag = rec.tag();
        try {
            if (tag == "catalog") {
                if (have_users)
                    rec.fail("catalog must precede user records");
                g.catalog_.attribute_dim = static_cast<std::size_t>(rec.integer("attributes"));
                g.catalog_.preference_dim = static_cast<std::size_t>(rec.integer("preferences"));
                rec.finish();
                have_catalog = true;
            } else if (tag == "params") {
                if (!g.edges_.empty())
                    rec.fail("params must precede edge records");
                RewardParams p;
                p.alpha = rec.number("alpha");
                p.q1 = rec.number("q1");
                p.p1 = rec.number("p1");
                p.c1 = rec.number("c1");
                rec.finish();
                g.set_reward_params(p);
            } else if (tag == "user") {
                if (!have_catalog)
                    rec.fail("user record before catalog record");
                UserProfile u;
                u.user_id = std::string(rec.take("id"));
                u.location.latitude = rec.number("lat");
                u.location.longitude = rec.number("lon");
                u.collective_activity_count = rec.integer("w");
                u.attributes = rec.wrap([&] { return parse_doubles(rec.take("attributes"), "attributes"); });
                u.preferences = rec.wrap([&] { return parse_doubles(rec.take("preferences"), "preferences"); });
                rec.finish();
                g.add_user(std::move(u));
                have_users = true;
            } else if (tag == "edge") {
                const std::string a(rec.take("a"));
                const std::string b(rec.take("b"));
                const auto m = rec.integer("m");
                const auto created = rec.integer("created_at");
                if (auto omega = rec.take_optional("omega"))  // informational
                    rec.wrap([&] { return detail::parse_double(*omega, "omega"); });
                rec.finish();
                g.add_edge(a, b, m, created);
            } else if (tag == "store") {
                Store s;
                s.store_id = std::string(rec.take("id"));
                s.location.latitude = rec.number("lat");
                s.location.longitude = rec.number("lon");
                const auto events = rec.take("events");
                if (!events.empty()) {
                    for (auto item : detail::split(events, ';')) {
                        auto parts = detail::split(item, ':');
                        if (parts.size() != 4)
                            rec.fail("event listing needs id:capacity:start:end");
                        EventListing ev;
                        ev.event_id = std::string(parts[0]);
                        ev.capacity = rec.wrap([&] { return detail::parse_int(parts[1], "capacity"); });
                        ev.starts_at = rec.wrap([&] { return detail::parse_int(parts[2], "start"); });
                        ev.ends_at = rec.wrap([&] { return detail::parse_int(parts[3], "end"); });
                        s.events.push_back(std::move(ev));
                    }
                }
                const auto venues = rec.take("venues");
                if (!venues.empty())
                    for (auto v : detail::split(venues, ';'))
                        s.venues.emplace_back(v);
                rec.finish();
                g.add_store(std::move(s));
            } else if (tag == "task") {
                OfflineTask t;
                t.task_id = std::string(rec.take("id"));
                require_id(t.task_id, "task");
                t.a = std::string(rec.take("a"));
                t.b = std::string(rec.take("b"));
                t.status = rec.wrap([&] { return parse_status(rec.take("status")); });
                t.issued_at = rec.integer("issued_at");
                if (auto v = rec.take_optional("expires_at"))
                    t.expires_at = rec.wrap([&] { return detail::parse_int(*v, "expires_at"); });
                if (auto v = rec.take_optional("completed_at"))
                    t.completed_at = rec.wrap([&] { return detail::parse_int(*v, "completed_at"); });
                if (auto v = rec.take_optional("self")) {
                    if (*v != "1")
                        rec.fail("self flag must be 1");
                    t.self_initiated = true;
                }
                rec.finish();
                g.user(t.a);
                g.user(t.b);
                if (t.a == t.b)
                    rec.fail("task pairs a user with itself");
                if (t.a > t.b)
                    std::swap(t.a, t.b);
                if ((t.status == TaskStatus::Completed) != t.completed_at.has_value())
                    rec.fail("completed_at must be present exactly when status=completed");
                if (t.completed_at && *t.completed_at < t.issued_at)
                    rec.fail("completed_at precedes issued_at");
                if (g.tasks_.count(t.task_id))
                    rec.fail("duplicate task id '" + t.task_id + "'");
                // Keep generated ids clear of loaded ones.
                if (t.task_id.size() > 1 && t.task_id[0] == 't') {
                    std::uint64_t n = 0;
                    auto s = std::string_view(t.task_id).substr(1);
                    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
                    if (ec == std::errc{} && ptr == s.data() + s.size())
                        g.task_counter_ = std::max(g.task_counter_, n);
                }
                auto id = t.task_id;
                g.tasks_.emplace(std::move(id), std::move(t));
            } else {
                rec.fail("unknown record tag '" + std::string(tag) + "'");
            }
        } catch (const Error& e) {
            if (std::string_view(e.what()).find("line ") != std::string_view::npos)
                throw;
            throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return g;
}

void SocialGraph::save_file(const std::string& path) const
{
    const auto tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out)
            throw Error(ErrorCode::Io, "cannot write '" + tmp + "'");
        save(out);
        if (!out)
            throw Error(ErrorCode::Io, "write failed for '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw Error(ErrorCode::Io, "cannot replace '" + path + "'");
}

SocialGraph SocialGraph::load_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open graph file '" + path + "'");
    return load(in);
}

GraphStore::GraphStore(SocialGraph graph)
    : current_(std::make_shared<const SocialGraph>(std::move(graph)))
{
}

std::shared_ptr<const SocialGraph> GraphStore::snapshot() const
{
    std::lock_guard lock(read_mutex_);
    return current_;
}

void GraphStore::publish(std::shared_ptr<const SocialGraph> next)
{
    std::lock_guard lock(read_mutex_);
    current_ = std::move(next);
}

} // namespace tomtalker
