#include "chromatic/orchestrator/remote.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <optional>
#include <thread>
#include <unordered_map>

#include "chromatic/orchestrator/protocol.hpp"

namespace chromatic::orchestrator {

namespace {

using Clock = std::chrono::steady_clock;

void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

bool send_all(int fd, const std::string& data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        sent += static_cast<std::size_t>(n);
    }
    return true;
}

bool send_line(int fd, const json& j) { return send_all(fd, encode_line(j) + "\n"); }

/// Appends whatever is readable; false on EOF or error.
bool read_some(int fd, std::string& buffer) {
    char chunk[65536];
    for (;;) {
        const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n > 0) {
            buffer.append(chunk, static_cast<std::size_t>(n));
            return true;
        }
        if (n == 0) return false;
        if (errno == EINTR) continue;
        return false;
    }
}

std::optional<std::string> take_line(std::string& buffer) {
    const auto pos = buffer.find('\n');
    if (pos == std::string::npos) return std::nullopt;
    std::string line = buffer.substr(0, pos);
    buffer.erase(0, pos + 1);
    return line;
}

int elapsed_ms(Clock::time_point since) {
    return static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - since).count());
}

}  // namespace

struct RemotePool::Connection {
    int fd = -1;
    std::string peer;
    std::string inbuf;
    bool ready = false;
    bool closed = false;
    std::optional<std::uint64_t> context_version;
    struct InFlight {
        std::size_t index;
        Clock::time_point started;
    };
    std::vector<InFlight> inflight;
};

struct RemotePool::Pending {
    const EvalContext* context = nullptr;
    std::span<const Task> tasks;
    std::unordered_map<std::uint64_t, std::size_t> index_of;
    std::vector<TaskResult> results;
    std::vector<bool> done;
    std::vector<int> attempts;
    std::vector<std::string> last_error;
    std::deque<std::size_t> queue;
    std::size_t remaining = 0;
    std::optional<std::string> fatal;

    void fail(std::size_t i, const std::string& why) {
        if (done[i]) return;
        last_error[i] = why;
        if (attempts[i] >= 2) {
            if (!fatal) fatal = "task " + std::to_string(tasks[i].task_id) + " failed twice: " + why;
            return;
        }
        queue.push_front(i);
    }
};

RemotePool::RemotePool(RemotePoolOptions options) : options_(std::move(options)) {
    if (options_.max_inflight == 0) throw ConfigError("remote pool needs max_inflight >= 1");
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw Error(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(options_.port);
    if (::inet_pton(AF_INET, options_.bind_host.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        throw ConfigError("cannot bind to '" + options_.bind_host + "': not an IPv4 address");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 64) != 0) {
        const std::string why = std::strerror(errno);
        ::close(listen_fd_);
        throw Error("cannot listen on " + options_.bind_host + ":" + std::to_string(options_.port) + ": " + why);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    ::fcntl(listen_fd_, F_SETFL, ::fcntl(listen_fd_, F_GETFL) | O_NONBLOCK);
}

RemotePool::~RemotePool() {
    shutdown();
    if (listen_fd_ >= 0) ::close(listen_fd_);
}

void RemotePool::shutdown() {
    for (auto& c : connections_) {
        if (c->fd >= 0) {
            if (c->ready) send_line(c->fd, json{{"type", "shutdown"}});
            ::close(c->fd);
            c->fd = -1;
        }
    }
    connections_.clear();
}

std::string RemotePool::describe() const {
    return "remote pool on port " + std::to_string(port_) + ", " + std::to_string(ready_workers()) + " worker(s)";
}

std::size_t RemotePool::ready_workers() const {
    return static_cast<std::size_t>(
        std::count_if(connections_.begin(), connections_.end(), [](const auto& c) { return c->ready && !c->closed; }));
}

std::size_t RemotePool::connected_workers() const { return ready_workers(); }

void RemotePool::accept_pending() {
    for (;;) {
        sockaddr_in addr{};
        socklen_t len = sizeof addr;
        const int fd = ::accept(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        if (fd < 0) return;
        set_nodelay(fd);
        auto c = std::make_unique<Connection>();
        c->fd = fd;
        char host[INET_ADDRSTRLEN] = {};
        ::inet_ntop(AF_INET, &addr.sin_addr, host, sizeof host);
        c->peer = std::string(host) + ":" + std::to_string(ntohs(addr.sin_port));
        connections_.push_back(std::move(c));
    }
}

void RemotePool::drop(std::size_t index, Pending* pending, const std::string& why) {
    Connection& c = *connections_[index];
    if (c.closed) return;
    c.closed = true;
    if (c.fd >= 0) ::close(c.fd);
    c.fd = -1;
    if (pending != nullptr) {
        for (const auto& f : c.inflight) pending->fail(f.index, "worker " + c.peer + ": " + why);
    }
    c.inflight.clear();
}

void RemotePool::handle_line(std::size_t index, const std::string& line, Pending* pending) {
    Connection& c = *connections_[index];
    json msg;
    try {
        msg = decode_line(line);
    } catch (const ProtocolError& e) {
        drop(index, pending, e.what());
        return;
    }
    const std::string type = msg.at("type").get<std::string>();
    if (!c.ready) {
        if (type != "hello") {
            drop(index, pending, "expected hello, got '" + type + "'");
            return;
        }
        const int protocol = msg.value("protocol", -1);
        const std::string build = msg.value("build", std::string());
        std::string reason;
        if (protocol != kProtocolVersion) {
            reason = "protocol version " + std::to_string(protocol) + " does not match coordinator version " +
                     std::to_string(kProtocolVersion);
        } else if (build != build_id()) {
            reason = "build '" + build + "' does not match coordinator build '" + build_id() + "'";
        }
        if (!reason.empty()) {
            send_line(c.fd, json{{"type", "reject"}, {"reason", reason}});
            drop(index, pending, reason);
            return;
        }
        if (!send_line(c.fd, json{{"type", "welcome"}, {"protocol", kProtocolVersion}})) {
            drop(index, pending, "send failed");
            return;
        }
        c.ready = true;
        return;
    }
    if (type != "result" && type != "error") {
        drop(index, pending, "unexpected message '" + type + "'");
        return;
    }
    if (pending == nullptr) return;  // stale answer between dispatches
    std::uint64_t task_id = 0;
    try {
        task_id = msg.at("task_id").get<std::uint64_t>();
    } catch (const json::exception&) {
        drop(index, pending, "answer without task_id");
        return;
    }
    const auto it = pending->index_of.find(task_id);
    if (it == pending->index_of.end()) return;  // from an earlier dispatch
    const std::size_t i = it->second;
    const auto f = std::find_if(c.inflight.begin(), c.inflight.end(), [&](const auto& x) { return x.index == i; });
    if (f == c.inflight.end()) return;  // reassigned after a timeout
    c.inflight.erase(f);
    if (type == "error") {
        pending->fail(i, msg.value("message", std::string("worker error")));
        return;
    }
    TaskResult r;
    try {
        r = result_from_json(msg);
    } catch (const ProtocolError& e) {
        pending->fail(i, e.what());
        return;
    }
    if (pending->done[i]) return;
    pending->results[i] = std::move(r);
    pending->done[i] = true;
    --pending->remaining;
}

void RemotePool::pump(int timeout_ms, Pending* pending) {
    accept_pending();
    std::vector<pollfd> fds;
    std::vector<std::size_t> owner;
    fds.push_back({listen_fd_, POLLIN, 0});
    owner.push_back(SIZE_MAX);
    for (std::size_t i = 0; i < connections_.size(); ++i) {
        if (connections_[i]->closed) continue;
        fds.push_back({connections_[i]->fd, POLLIN, 0});
        owner.push_back(i);
    }
    const int n = ::poll(fds.data(), fds.size(), timeout_ms);
    if (n > 0) {
        for (std::size_t k = 1; k < fds.size(); ++k) {
            if ((fds[k].revents & (POLLIN | POLLHUP | POLLERR)) == 0) continue;
            const std::size_t idx = owner[k];
            Connection& c = *connections_[idx];
            const bool alive = read_some(c.fd, c.inbuf);
            while (!c.closed) {
                auto line = take_line(c.inbuf);
                if (!line) break;
                handle_line(idx, *line, pending);
            }
            if (!alive) drop(idx, pending, "connection lost");
        }
        if (fds[0].revents & POLLIN) accept_pending();
    }
    std::erase_if(connections_, [](const auto& c) { return c->closed; });
}

void RemotePool::wait_for_workers(std::size_t count, double timeout_s) {
    const auto start = Clock::now();
    while (ready_workers() < count) {
        if (elapsed_ms(start) > static_cast<int>(timeout_s * 1000.0)) {
            throw WorkerFailure("timed out waiting for " + std::to_string(count) + " worker(s); " +
                                std::to_string(ready_workers()) + " connected");
        }
        pump(50, nullptr);
    }
}

std::vector<TaskResult> RemotePool::dispatch(const EvalContext& context, std::span<const Task> tasks) {
    if (tasks.empty()) return {};
    wait_for_workers(options_.min_workers, options_.worker_wait_s);

    Pending p;
    p.context = &context;
    p.tasks = tasks;
    p.results.resize(tasks.size());
    p.done.assign(tasks.size(), false);
    p.attempts.assign(tasks.size(), 0);
    p.last_error.resize(tasks.size());
    p.remaining = tasks.size();
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (!p.index_of.emplace(tasks[i].task_id, i).second) throw ValueError("duplicate task id in dispatch");
        p.queue.push_back(i);
    }
    for (auto& c : connections_) c->inflight.clear();

    const std::string context_line = encode_line(context_to_json(context)) + "\n";
    const int timeout_ms = static_cast<int>(options_.task_timeout_s * 1000.0);
    auto last_worker_seen = Clock::now();

    while (p.remaining > 0) {
        if (p.fatal) throw WorkerFailure(*p.fatal);
        for (std::size_t i = 0; i < connections_.size(); ++i) {
            Connection& c = *connections_[i];
            if (!c.ready || c.closed) continue;
            while (c.inflight.size() < options_.max_inflight && !p.queue.empty()) {
                if (c.context_version != context.weights_version) {
                    if (!send_all(c.fd, context_line)) break;
                    c.context_version = context.weights_version;
                }
                const std::size_t t = p.queue.front();
                p.queue.pop_front();
                if (p.done[t]) continue;
                ++p.attempts[t];
                c.inflight.push_back({t, Clock::now()});
                if (!send_line(c.fd, task_to_json(tasks[t]))) {
                    drop(i, &p, "send failed");
                    break;
                }
            }
        }
        if (p.fatal) throw WorkerFailure(*p.fatal);

        if (ready_workers() > 0) {
            last_worker_seen = Clock::now();
        } else if (elapsed_ms(last_worker_seen) > static_cast<int>(options_.worker_wait_s * 1000.0)) {
            throw WorkerFailure("all workers disconnected with " + std::to_string(p.remaining) + " task(s) pending");
        }

        pump(20, &p);

        for (std::size_t i = 0; i < connections_.size(); ++i) {
            Connection& c = *connections_[i];
            const bool expired = std::any_of(c.inflight.begin(), c.inflight.end(),
                                             [&](const auto& f) { return elapsed_ms(f.started) > timeout_ms; });
            if (expired) drop(i, &p, "task timed out");
        }
        std::erase_if(connections_, [](const auto& c) { return c->closed; });
    }
    return std::move(p.results);
}

// ---------------------------------------------------------------------------

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint) {
    const auto colon = endpoint.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == endpoint.size()) {
        throw ConfigError("endpoint '" + endpoint + "' is not host:port");
    }
    const std::string port_text = endpoint.substr(colon + 1);
    int port = 0;
    try {
        std::size_t used = 0;
        port = std::stoi(port_text, &used);
        if (used != port_text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ConfigError("endpoint '" + endpoint + "' has an invalid port");
    }
    if (port < 1 || port > 65535) throw ConfigError("endpoint '" + endpoint + "' has an invalid port");
    return {endpoint.substr(0, colon), static_cast<std::uint16_t>(port)};
}

namespace {

int connect_to(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0) return -1;
    int fd = -1;
    for (addrinfo* a = res; a != nullptr; a = a->ai_next) {
        fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd >= 0) set_nodelay(fd);
    return fd;
}

class LineReader {
public:
    explicit LineReader(int fd) : fd_(fd) {}
    std::optional<std::string> next() {
        for (;;) {
            if (auto line = take_line(buffer_)) return line;
            if (!read_some(fd_, buffer_)) return std::nullopt;
        }
    }

private:
    int fd_;
    std::string buffer_;
};

}  // namespace

int run_worker(const WorkerOptions& options, std::ostream& log) {
    const std::string endpoint = options.host + ":" + std::to_string(options.port);
    bool ever_connected = false;
    int failed_attempts = 0;
    for (;;) {
        const int fd = connect_to(options.host, options.port);
        if (fd < 0) {
            if (++failed_attempts >= options.max_connect_attempts) {
                if (ever_connected) {
                    log << "worker: coordinator at " << endpoint << " has gone away\n";
                    return 0;
                }
                log << "worker: cannot connect to " << endpoint << "\n";
                return 2;
            }
            std::this_thread::sleep_for(std::chrono::duration<double>(options.retry_delay_s));
            continue;
        }
        failed_attempts = 0;
        const int protocol = options.protocol_override >= 0 ? options.protocol_override : kProtocolVersion;
        const std::string build = options.build_override.empty() ? build_id() : options.build_override;
        if (!send_line(fd, json{{"type", "hello"}, {"protocol", protocol}, {"build", build}})) {
            ::close(fd);
            continue;
        }
        LineReader reader(fd);
        std::optional<EvalContext> context;
        std::size_t tasks_seen = 0;
        while (auto line = reader.next()) {
            json msg;
            try {
                msg = decode_line(*line);
            } catch (const ProtocolError& e) {
                log << "worker: " << e.what() << "\n";
                break;
            }
            const std::string type = msg.at("type").get<std::string>();
            if (type == "welcome") {
                ever_connected = true;
                log << "worker: connected to " << endpoint << "\n";
            } else if (type == "reject") {
                log << "worker: rejected by coordinator: " << msg.value("reason", std::string("no reason given")) << "\n";
                ::close(fd);
                return 1;
            } else if (type == "shutdown") {
                ::close(fd);
                return 0;
            } else if (type == "context") {
                try {
                    context = context_from_json(msg);
                } catch (const ProtocolError& e) {
                    log << "worker: " << e.what() << "\n";
                    context.reset();
                }
            } else if (type == "task") {
                ++tasks_seen;
                if (options.drop_after_tasks != 0 && tasks_seen == options.drop_after_tasks) {
                    log << "worker: dropping connection mid-task\n";
                    ::close(fd);
                    return 0;
                }
                json reply;
                std::uint64_t task_id = msg.value("task_id", std::uint64_t{0});
                try {
                    const Task task = task_from_json(msg);
                    if (!context) throw ProtocolError("task received before any context");
                    reply = result_to_json(options.evaluator(*context, task));
                } catch (const std::exception& e) {
                    reply = json{{"type", "error"}, {"task_id", task_id}, {"message", e.what()}};
                }
                if (!send_line(fd, reply)) break;
            } else {
                log << "worker: ignoring unknown message '" << type << "'\n";
            }
        }
        ::close(fd);
        log << "worker: connection to " << endpoint << " lost, reconnecting\n";
    }
}

}  // namespace chromatic::orchestrator
