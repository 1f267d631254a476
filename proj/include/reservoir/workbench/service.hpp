#pragma once

// HTTP service over the run registry. Runs execute on a small worker pool
// (one at a time by default); reads are served concurrently.

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "reservoir/workbench/run.hpp"

namespace httplib {
class Server;
}

namespace reservoir::workbench {

struct ServiceOptions {
    std::filesystem::path root = "workbench-data";  // registry, runs/, datasets/
    std::string token;                              // empty: no auth
    std::size_t queue_depth = 64;
    unsigned workers = 1;
};

/// Thrown by submit when the queue is full.
class QueueFull : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Service {
public:
    explicit Service(ServiceOptions options);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Validates and queues a configuration; returns the run id. Throws
    /// ConfigError or QueueFull.
    std::string submit(const nlohmann::json& config);
    /// false when the run is unknown; throws std::logic_error when it already
    /// started.
    bool cancel(const std::string& id);
    /// Blocks until no run is queued or running.
    void wait_idle();

    Registry& registry() { return registry_; }

    /// Binds and serves until stop(); returns false when the port cannot be bound.
    bool listen(const std::string& host, int port);
    /// Binds to a free port and serves on a background thread; returns the port.
    int start(const std::string& host = "127.0.0.1");
    void stop();

private:
    void routes();
    void work();

    ServiceOptions options_;
    Registry registry_;
    std::unique_ptr<httplib::Server> server_;
    std::thread http_thread_;

    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable idle_cv_;
    std::deque<std::string> queue_;
    std::size_t active_ = 0;
    bool stopping_ = false;
    std::vector<std::thread> workers_;
};

}  // namespace reservoir::workbench
