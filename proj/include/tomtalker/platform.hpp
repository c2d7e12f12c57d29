#pragma once

#include "tomtalker/emotion.hpp"
#include "tomtalker/recommend.hpp"
#include "tomtalker/rewards.hpp"
#include "tomtalker/socialgraph.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace tomtalker::platform {

/// Version tag carried by every JSON body the service emits.
inline constexpr int kWireVersion = 1;

/// Props a breeder can hand to a pet, keyed by id.
class PropCatalog {
public:
    void add(PropItem prop);
    const PropItem& get(const std::string& prop_id) const;  // UnknownProp
    const std::map<std::string, PropItem>& items() const { return items_; }

    /// {"props": [{"prop_id": "bone", "liked": true, "magnitude": 0.4}, ...]}
    static PropCatalog from_json_text(const std::string& text);
    static PropCatalog load_file(const std::string& path);

private:
    std::map<std::string, PropItem> items_;
};

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;

    // Data files. Empty means built-in defaults (empty graph, uniform
    // transition table, default rewards, no props).
    std::string graph_path;
    std::string graph_out;  // checkpoint target; defaults to graph_path
    std::string rewards_path;
    std::string transition_stats_path;
    std::string props_path;

    std::vector<std::string> pets{"p1"};
    std::uint64_t seed = 1;
    int tick_ms = 1000;           // wall-clock period of the tick loop; 0 disables it
    int checkpoint_seconds = 60;  // 0 disables periodic checkpoints
    std::size_t history = 512;    // frames kept per pet for stream catch-up

    EngineConfig engine;
    RecommendParams recommend;

    void validate() const;

    /// Relative data paths are resolved against `base_dir`.
    static ServiceConfig from_json_text(const std::string& text, const std::string& base_dir = "");
    static ServiceConfig load_file(const std::string& path);
};

/// Name of the environment variable that points at the service config.
inline constexpr const char* kConfigEnv = "TOMTALKER_CONFIG";

/// One pet's live loop with a bounded frame history. Inputs go through the
/// engine's ordered queue; ticks are serialized.
class PetRuntime {
public:
    PetRuntime(std::string pet_id, EngineConfig config, TransitionStats stats, std::uint64_t seed,
               std::size_t history);

    const std::string& id() const { return id_; }

    void feed(const PropItem& prop) { engine_.feed(prop); }
    void set_environment(const SensorFrame& frame) { engine_.set_environment(frame); }

    std::shared_ptr<const EmotionSnapshot> tick();
    std::shared_ptr<const EmotionSnapshot> snapshot() const { return engine_.snapshot(); }

    /// Frames with tick > `after`, oldest first; -1 selects the whole
    /// history. Waits up to `timeout` for one to appear. Frames that fell
    /// out of the history are skipped.
    std::vector<std::shared_ptr<const EmotionSnapshot>> frames_after(std::int64_t after,
                                                                     std::chrono::milliseconds timeout) const;

    /// Releases waiting readers; later waits return immediately.
    void close();

private:
    std::string id_;
    EmotionEngine engine_;
    std::size_t capacity_;

    std::mutex tick_mutex_;
    mutable std::mutex history_mutex_;
    mutable std::condition_variable history_cv_;
    std::deque<std::shared_ptr<const EmotionSnapshot>> history_;
    bool closed_ = false;
};

/// Wire encoding of a pet snapshot.
std::string snapshot_json(const std::string& pet_id, const EmotionSnapshot& snap);

/// One server-sent-events frame: "id: <tick>\nevent: state\ndata: <json>\n\n".
std::string sse_frame(const std::string& pet_id, const EmotionSnapshot& snap);

struct Request {
    std::string method;
    std::string path;
    std::string body;
    std::map<std::string, std::string> query;
};

struct Response {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

/// The service state and its request dispatcher. `handle` is transport
/// independent so it can be driven directly; `listen` binds it to HTTP and
/// adds the state stream.
class Service {
public:
    using Clock = std::function<Timestamp()>;

    explicit Service(ServiceConfig config);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    const ServiceConfig& config() const { return config_; }

    /// Time source for task and recommendation endpoints when the request
    /// does not carry one. Defaults to Unix seconds.
    void set_clock(Clock clock) { clock_ = std::move(clock); }

    Response handle(const Request& request);

    PetRuntime& pet(const std::string& pet_id);  // UnknownPet
    std::shared_ptr<const SocialGraph> graph() const { return graph_.snapshot(); }
    RewardEngine& rewards() { return rewards_; }

    /// Advances every pet by one tick.
    void tick_all();

    /// Writes the graph to the checkpoint path, if there is one.
    void checkpoint();

    /// Starts the tick/checkpoint thread (when tick_ms > 0) and serves HTTP
    /// until `stop` is called. Returns the bound port through `on_bound`.
    void listen(const std::function<void(int port)>& on_bound = {});

    /// Stops the server and the tick loop, then flushes persistence. Safe to
    /// call more than once and from any thread.
    void stop();

private:
    Response route(const Request& request);
    Response get_state(const std::string& pet_id);
    Response post_feed(const std::string& pet_id, const std::string& body);
    Response post_environment(const std::string& pet_id, const std::string& body);
    Response get_recommendations(const std::string& user, const Request& request);
    Response get_reward(const std::string& user);
    Response post_task(const std::string& body);
    Response post_complete(const std::string& task_id, const std::string& body);
    Response get_graph();
    Response get_metrics();

    void run_loop();

    ServiceConfig config_;
    GraphStore graph_;
    RewardEngine rewards_;
    PropCatalog props_;
    std::map<std::string, std::unique_ptr<PetRuntime>> pets_;
    Clock clock_;

    std::mutex feed_ids_mutex_;
    std::map<std::string, std::set<std::string>> feed_ids_;  // per pet

    std::atomic<std::uint64_t> requests_{0};
    std::atomic<std::uint64_t> errors_{0};
    std::atomic<std::uint64_t> streams_open_{0};
    std::atomic<std::uint64_t> checkpoints_{0};

    std::atomic<bool> running_{false};
    std::mutex loop_mutex_;
    std::condition_variable loop_cv_;
    std::thread loop_;
    std::atomic<bool> served_{false};
    std::mutex server_mutex_;
    httplib::Server* server_ = nullptr;  // set while listening
    std::once_flag flushed_;
};

} // namespace tomtalker::platform
