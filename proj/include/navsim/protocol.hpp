#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "navsim/agent.hpp"
#include "navsim/world.hpp"

namespace navsim::wire {

inline constexpr int kProtocolVersion = 1;
inline constexpr double kDefaultTimeoutSeconds = 30.0;

using Json = nlohmann::ordered_json;

inline std::string encode(const Json& j) { return j.dump() + "\n"; }

inline Json hello() { return {{"type", "hello"}, {"version", kProtocolVersion}}; }
inline Json ack() { return {{"type", "ack"}}; }
inline Json bye() { return {{"type", "bye"}}; }
inline Json error(std::string message) { return {{"type", "error"}, {"message", std::move(message)}}; }
inline Json action(std::string text) { return {{"type", "action"}, {"text", std::move(text)}}; }

inline Json reset(const Episode& ep, std::size_t n_hist, std::size_t n_cur, std::size_t c) {
    return {{"type", "reset"}, {"episode_id", ep.id}, {"instruction", ep.instruction},
            {"n_hist", n_hist},  {"n_cur", n_cur},        {"c", c}};
}

inline Json observe(int step, const FrameFeatures& frame) {
    return {{"type", "observe"},
            {"step", step},
            {"frame", {{"n_x", frame.data.rows}, {"c", frame.data.cols}, {"data", frame.data.data}}}};
}

/// Frame payload of an observe message; throws std::invalid_argument when malformed.
inline FrameFeatures frame_from_json(const Json& frame, std::size_t expected_c) {
    const auto n_x = frame.at("n_x").get<std::size_t>();
    const auto c = frame.at("c").get<std::size_t>();
    if (n_x != kPatchCount) throw std::invalid_argument("frame n_x must be 256");
    if (c != expected_c) throw std::invalid_argument("frame c does not match reset");
    const auto& data = frame.at("data");
    if (!data.is_array() || data.size() != n_x * c) throw std::invalid_argument("frame data length must be 256*c");
    FrameFeatures f{Matrix(n_x, c)};
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!data[i].is_number()) throw std::invalid_argument("frame data must be numeric");
        f.data.data[i] = data[i].get<double>();
    }
    return f;
}

/// Owning TCP socket with '\n'-delimited reads.
class LineSocket {
  public:
    LineSocket() = default;
    explicit LineSocket(int fd) : fd_(fd) {}
    LineSocket(LineSocket&& o) noexcept : fd_(std::exchange(o.fd_, -1)), buffer_(std::move(o.buffer_)) {}
    LineSocket& operator=(LineSocket&& o) noexcept {
        if (this != &o) {
            close();
            fd_ = std::exchange(o.fd_, -1);
            buffer_ = std::move(o.buffer_);
        }
        return *this;
    }
    LineSocket(const LineSocket&) = delete;
    LineSocket& operator=(const LineSocket&) = delete;
    ~LineSocket() { close(); }

    static LineSocket connect(const std::string& host, int port) {
        addrinfo hints{};
        hints.ai_family = AF_INET;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
            throw TransportError("cannot resolve " + host);
        std::unique_ptr<addrinfo, decltype(&freeaddrinfo)> guard(res, &freeaddrinfo);
        LineSocket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
        if (s.fd_ < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
        if (::connect(s.fd_, res->ai_addr, res->ai_addrlen) != 0)
            throw TransportError("connect to " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
        int one = 1;
        ::setsockopt(s.fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        return s;
    }

    int fd() const { return fd_; }
    bool open() const { return fd_ >= 0; }

    void close() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

    void send_line(const std::string& line) {
        std::size_t sent = 0;
        while (sent < line.size()) {
            const ssize_t n = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw TransportError(std::string("send: ") + std::strerror(errno));
            }
            sent += static_cast<std::size_t>(n);
        }
    }

    /// Next line without its terminator; empty optional on orderly close.
    std::optional<std::string> read_line(double timeout_seconds) {
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);
        for (;;) {
            if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
                std::string line = buffer_.substr(0, pos);
                buffer_.erase(0, pos + 1);
                return line;
            }
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) throw TransportError("timed out waiting for a message");
            pollfd p{fd_, POLLIN, 0};
            const int rc = ::poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
            if (rc < 0) {
                if (errno == EINTR) continue;
                throw TransportError(std::string("poll: ") + std::strerror(errno));
            }
            if (rc == 0) continue;
            char chunk[65536];
            const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw TransportError(std::string("recv: ") + std::strerror(errno));
            }
            if (n == 0) return std::nullopt;
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

  private:
    int fd_ = -1;
    std::string buffer_;
};

/// Records both directions of a session: "> " client-to-server, "< " server-to-client.
struct Transcript {
    std::vector<std::string> lines;
    void sent(const std::string& line) { lines.push_back("> " + line); }
    void received(const std::string& line) { lines.push_back("< " + line); }
    std::string str() const {
        std::string out;
        for (const auto& l : lines) out += l + "\n";
        return out;
    }
};

struct RemoteOptions {
    std::string host = "127.0.0.1";
    int port = 0;
    double timeout_seconds = kDefaultTimeoutSeconds;
    std::size_t n_hist = 4;
    std::size_t n_cur = 64;
    std::size_t c = kDefaultFeatureDim;
    std::shared_ptr<Transcript> transcript;
};

/**
 * Harness-side adapter: one connection per episode. reset connects,
 * checks the hello version, and waits for ack; act sends observe and
 * returns the action text; finish sends bye and closes.
 */
class RemoteAgent : public Agent {
  public:
    explicit RemoteAgent(RemoteOptions options) : opt_(std::move(options)) {}

    void reset(const Episode& episode) override {
        sock_ = LineSocket::connect(opt_.host, opt_.port);
        step_ = 0;
        const Json h = expect("hello");
        if (h.value("version", -1) != kProtocolVersion)
            throw TransportError("server speaks protocol version " + std::to_string(h.value("version", -1)));
        send(hello());
        send(wire::reset(episode, opt_.n_hist, opt_.n_cur, opt_.c));
        expect("ack");
    }

    std::string act(const FrameFeatures& frame) override {
        if (!sock_.open()) throw TransportError("act without an open session");
        send(observe(step_++, frame));
        const Json reply = expect("action");
        if (!reply.contains("text") || !reply.at("text").is_string()) throw TransportError("action without text");
        return reply.at("text").get<std::string>();
    }

    void finish() override {
        if (!sock_.open()) return;
        send(bye());
        sock_.close();
    }

  private:
    void send(const Json& j) {
        const std::string line = j.dump();
        if (opt_.transcript) opt_.transcript->sent(line);
        sock_.send_line(line + "\n");
    }

    Json expect(const std::string& type) {
        auto line = sock_.read_line(opt_.timeout_seconds);
        if (!line) {
            sock_.close();
            throw TransportError("server closed the connection while waiting for " + type);
        }
        if (opt_.transcript) opt_.transcript->received(*line);
        Json j;
        try {
            j = Json::parse(*line);
        } catch (const Json::parse_error&) {
            sock_.close();
            throw TransportError("malformed message from server");
        }
        const std::string got = j.value("type", "");
        if (got == "error") {
            sock_.close();
            throw TransportError("server error: " + j.value("message", ""));
        }
        if (got != type) {
            sock_.close();
            throw TransportError("expected " + type + ", got " + got);
        }
        return j;
    }

    RemoteOptions opt_;
    LineSocket sock_;
    int step_ = 0;
};

struct ServeOptions {
    std::string host = "127.0.0.1";
    int port = 0;  // 0 picks an ephemeral port
    double timeout_seconds = 300.0;
    std::ostream* log = nullptr;
};

class BindError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/**
 * Serves agents over the wire, one session per connection, each session
 * with its own agent from the factory. Sessions are strictly
 * request/response; any protocol violation gets an error reply and the
 * connection is closed.
 */
class AgentServer {
  public:
    AgentServer(AgentFactory factory, ServeOptions options) : factory_(std::move(factory)), opt_(std::move(options)) {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw BindError(std::string("socket: ") + std::strerror(errno));
        int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<uint16_t>(opt_.port));
        if (::inet_pton(AF_INET, opt_.host.c_str(), &addr.sin_addr) != 1) {
            ::close(listen_fd_);
            throw BindError("invalid bind address " + opt_.host);
        }
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 64) != 0) {
            const std::string why = std::strerror(errno);
            ::close(listen_fd_);
            throw BindError("bind " + opt_.host + ":" + std::to_string(opt_.port) + ": " + why);
        }
        socklen_t len = sizeof addr;
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        accept_thread_ = std::thread([this] { accept_loop(); });
    }

    AgentServer(const AgentServer&) = delete;
    AgentServer& operator=(const AgentServer&) = delete;
    ~AgentServer() { stop(); }

    int port() const { return port_; }
    std::size_t sessions_served() const { return sessions_served_.load(); }
    std::size_t protocol_errors() const { return protocol_errors_.load(); }

    void stop() {
        if (stopping_.exchange(true)) return;
        if (accept_thread_.joinable()) accept_thread_.join();
        {
            std::lock_guard lock(mu_);
            for (int fd : live_fds_) ::shutdown(fd, SHUT_RDWR);
        }
        for (auto& t : sessions_)
            if (t.joinable()) t.join();
        ::close(listen_fd_);
    }

  private:
    void accept_loop() {
        while (!stopping_.load()) {
            pollfd p{listen_fd_, POLLIN, 0};
            if (::poll(&p, 1, 100) <= 0) continue;
            const int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) continue;
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            std::lock_guard lock(mu_);
            live_fds_.insert(fd);
            sessions_.emplace_back([this, fd] { session(fd); });
        }
    }

    void log(const std::string& line) {
        if (!opt_.log) return;
        std::lock_guard lock(mu_);
        *opt_.log << line << '\n';
        opt_.log->flush();
    }

    void session(int fd) {
        LineSocket sock(fd);
        auto fail = [&](const std::string& message) {
            ++protocol_errors_;
            try {
                sock.send_line(encode(error(message)));
            } catch (const TransportError&) {
            }
            log("session error: " + message);
        };
        try {
            run_session(sock, fail);
        } catch (const TransportError& e) {
            log(std::string("session transport failure: ") + e.what());
        }
        ++sessions_served_;
        std::lock_guard lock(mu_);
        live_fds_.erase(fd);
        ::shutdown(fd, SHUT_RDWR);
    }

    template <typename Fail>
    void run_session(LineSocket& sock, Fail& fail) {
        sock.send_line(encode(hello()));
        std::unique_ptr<Agent> agent;
        bool greeted = false;
        std::string episode_id;
        std::size_t c = 0;
        long long last_step = -1;
        for (;;) {
            auto line = sock.read_line(opt_.timeout_seconds);
            if (!line) return;
            Json msg;
            try {
                msg = Json::parse(*line);
            } catch (const Json::parse_error&) {
                return fail("malformed JSON");
            }
            if (!msg.is_object() || !msg.contains("type") || !msg.at("type").is_string())
                return fail("message without a type");
            const std::string type = msg.at("type").get<std::string>();
            if (!greeted) {
                if (type != "hello") return fail("hello required");
                if (msg.value("version", -1) != kProtocolVersion) return fail("unsupported protocol version");
                greeted = true;
                continue;
            }
            if (type == "bye") {
                if (agent) agent->finish();
                return;
            }
            if (type == "reset") {
                try {
                    Episode ep;
                    ep.id = msg.at("episode_id").get<std::string>();
                    ep.instruction = msg.at("instruction").get<std::string>();
                    c = msg.at("c").get<std::size_t>();
                    msg.at("n_hist").get<std::size_t>();
                    msg.at("n_cur").get<std::size_t>();
                    agent = factory_();
                    agent->reset(ep);
                    episode_id = ep.id;
                    last_step = -1;
                } catch (const std::exception& e) {
                    return fail(std::string("bad reset: ") + e.what());
                }
                sock.send_line(encode(ack()));
                continue;
            }
            if (type == "observe") {
                if (!agent) return fail("reset required");
                long long step = 0;
                FrameFeatures frame;
                try {
                    step = msg.at("step").get<long long>();
                    frame = frame_from_json(msg.at("frame"), c);
                } catch (const std::exception& e) {
                    return fail(std::string("bad observe: ") + e.what());
                }
                if (step <= last_step) return fail("step must increase monotonically");
                last_step = step;
                const auto t0 = std::chrono::steady_clock::now();
                std::string text;
                try {
                    text = agent->act(frame);
                } catch (const std::exception& e) {
                    return fail(std::string("agent failure: ") + e.what());
                }
                const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                sock.send_line(encode(action(text)));
                log("episode=" + episode_id + " step=" + std::to_string(step) + " latency_ms=" + std::to_string(ms));
                continue;
            }
            return fail("unknown message type '" + type + "'");
        }
    }

    AgentFactory factory_;
    ServeOptions opt_;
    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> stopping_{false};
    std::atomic<std::size_t> sessions_served_{0};
    std::atomic<std::size_t> protocol_errors_{0};
    std::mutex mu_;
    std::unordered_set<int> live_fds_;
    std::vector<std::thread> sessions_;
    std::thread accept_thread_;
};

}  // namespace navsim::wire
