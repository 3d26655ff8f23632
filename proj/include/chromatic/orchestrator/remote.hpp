#pragma once

// Multi-process pool over TCP. The coordinator listens; workers connect,
// handshake, and then receive context broadcasts and tasks. A worker may hold
// several tasks in flight. Tasks held by a worker that disconnects or times
// out are requeued; a task that fails twice aborts the dispatch.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "chromatic/orchestrator/pool.hpp"

namespace chromatic::orchestrator {

struct RemotePoolOptions {
    std::string bind_host = "127.0.0.1";
    std::uint16_t port = 0;  // 0: ephemeral
    std::size_t min_workers = 1;
    double task_timeout_s = 60.0;
    /// How long dispatch waits for min_workers (or for any worker after all
    /// have dropped) before giving up.
    double worker_wait_s = 60.0;
    std::size_t max_inflight = 2;
};

class RemotePool final : public WorkerPool {
public:
    explicit RemotePool(RemotePoolOptions options = {});
    ~RemotePool() override;

    RemotePool(const RemotePool&) = delete;
    RemotePool& operator=(const RemotePool&) = delete;

    std::uint16_t port() const noexcept { return port_; }
    std::size_t connected_workers() const;
    /// Accepts and handshakes until `count` workers are ready.
    void wait_for_workers(std::size_t count, double timeout_s);

    std::vector<TaskResult> dispatch(const EvalContext& context, std::span<const Task> tasks) override;
    std::string describe() const override;

    /// Sends shutdown to every worker and closes the connections.
    void shutdown();

private:
    struct Connection;
    struct Pending;

    void accept_pending();
    /// Waits up to timeout_ms for socket activity and handles every complete
    /// line. `pending` is null outside dispatch.
    void pump(int timeout_ms, Pending* pending);
    void handle_line(std::size_t index, const std::string& line, Pending* pending);
    void drop(std::size_t index, Pending* pending, const std::string& why);
    std::size_t ready_workers() const;

    RemotePoolOptions options_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::vector<std::unique_ptr<Connection>> connections_;
};

struct WorkerOptions {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
    int max_connect_attempts = 50;
    double retry_delay_s = 0.2;
    Evaluator evaluator = evaluate_task;
    // Test hooks.
    std::string build_override;
    int protocol_override = -1;
    std::size_t drop_after_tasks = 0;  // close the socket on receiving this task (1-based), 0: never
};

/// Connects, handshakes and serves tasks until told to shut down. Reconnects
/// after a lost connection. Returns 0 on shutdown or when the coordinator
/// has gone away after a session, 1 on handshake rejection, 2 if no
/// connection could ever be made.
int run_worker(const WorkerOptions& options, std::ostream& log);

/// "host:port" -> (host, port); throws ConfigError.
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint);

}  // namespace chromatic::orchestrator
