#include "hyc/proxy.hpp"

#include <chrono>

#include "json.hpp"

namespace hyc {

namespace {

std::uint64_t now_us() {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count());
}

std::int64_t steady_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

constexpr std::size_t kRelayChunk = 64 * 1024;
constexpr int kPollSliceMs = 100;

/// Everything both relay directions share for one session. The lock
/// serializes seq assignment and the file append, so records land on disk
/// in seq order.
struct ConnState {
    ConnState(const std::filesystem::path& path, const SessionId& id,
              std::uint64_t opened, std::size_t sniff_window)
        : session_id(id),
          opened_us(opened),
          writer(path, id, opened),
          window(sniff_window) {}

    SessionId session_id;
    std::uint64_t opened_us;
    CaptureFileWriter writer;
    std::size_t window;

    std::mutex mu;
    std::uint64_t next_seq = 0;
    std::uint64_t c2s_bytes = 0;
    std::uint64_t s2c_bytes = 0;
    std::size_t c2s_packets = 0;
    std::vector<Packet> early_c2s;  // first `window` client packets, for sniffing
    bool write_failed = false;
    std::string write_error;
    std::atomic<std::int64_t> last_activity_ms{steady_ms()};

    /// Records one relayed read. False when the capture file is broken.
    bool append(Direction dir, std::span<const std::uint8_t> payload) {
        std::lock_guard lk(mu);
        if (write_failed) return false;
        Packet p{next_seq++, now_us(), dir, Bytes(payload.begin(), payload.end())};
        try {
            writer.append(p);
        } catch (const std::exception& e) {
            write_failed = true;
            write_error = e.what();
            return false;
        }
        if (dir == Direction::ClientToServer) {
            c2s_bytes += payload.size();
            if (c2s_packets < window) early_c2s.push_back(std::move(p));
            ++c2s_packets;
        } else {
            s2c_bytes += payload.size();
        }
        return true;
    }
};

}  // namespace

void ProxyConfig::validate() const {
    Endpoint listen = Endpoint::parse(listen_addr);
    Endpoint upstream = Endpoint::parse(upstream_addr);
    if (listen.host == upstream.host && listen.port == upstream.port)
        throw std::invalid_argument("listen_addr equals upstream_addr: " +
                                    listen.str());
    if (max_sessions == 0)
        throw std::invalid_argument("max_sessions must be positive");
    if (idle_timeout_s <= 0)
        throw std::invalid_argument("idle_timeout_s must be positive");
    if (capture_path.empty())
        throw std::invalid_argument("capture_path must be set");
    sniff_rules.validate();
}

std::string SessionSummary::ndjson(bool show_secrets) const {
    nlohmann::ordered_json j;
    j["session_id"] = session_id_hex(session_id);
    j["c2s_bytes"] = c2s_bytes;
    j["s2c_bytes"] = s2c_bytes;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& hit : hits) {
        nlohmann::ordered_json h;
        h["seq"] = hit.packet_seq;
        h["username"] = hit.username;
        if (show_secrets) h["secret"] = hit.secret;
        arr.push_back(std::move(h));
    }
    j["hits"] = std::move(arr);
    return j.dump();
}

Proxy::Proxy(ProxyConfig config, SummaryFn on_summary, DiagnosticFn on_diagnostic)
    : config_(std::move(config)),
      on_summary_(std::move(on_summary)),
      on_diagnostic_(std::move(on_diagnostic)) {
    config_.validate();
}

Proxy::~Proxy() { stop(); }

void Proxy::start() {
    if (started_) return;
    try {
        listener_ = Listener::bind(config_.listen_addr);
    } catch (const NetError& e) {
        throw BindFailed(e.what());
    }
    started_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
}

void Proxy::stop() {
    if (stop_.exchange(true)) {
        if (accept_thread_.joinable()) accept_thread_.join();
        return;
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    reap_workers(true);
    listener_.close();
}

void Proxy::reap_workers(bool join_all) {
    std::vector<std::thread> joinable;
    {
        std::lock_guard lk(workers_mu_);
        std::size_t keep = 0;
        for (std::size_t i = 0; i < workers_.size(); ++i) {
            if (join_all || workers_[i].done->load()) {
                joinable.push_back(std::move(workers_[i].thread));
            } else {
                // Self-assignment would land a joinable thread on itself.
                if (keep != i) workers_[keep] = std::move(workers_[i]);
                ++keep;
            }
        }
        workers_.resize(keep);
    }
    for (auto& t : joinable) t.join();
}

void Proxy::emit_summary(const SessionSummary& summary) {
    std::lock_guard lk(emit_mu_);
    if (on_summary_) on_summary_(summary);
}

void Proxy::emit_diagnostic(const std::string& line) {
    std::lock_guard lk(emit_mu_);
    if (on_diagnostic_) on_diagnostic_(line);
}

void Proxy::accept_loop() {
    while (!stop_) {
        reap_workers(false);
        if (active_.load() >= config_.max_sessions) {
            // Backlog holds pending clients until a session slot frees up.
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
            continue;
        }
        std::optional<Socket> client;
        try {
            client = listener_.accept(kPollSliceMs);
        } catch (const NetError& e) {
            emit_diagnostic(std::string("accept failed: ") + e.what());
            break;
        }
        if (!client) continue;

        active_.fetch_add(1);
        auto done = std::make_shared<std::atomic<bool>>(false);
        auto sock = std::make_shared<Socket>(std::move(*client));
        std::thread t([this, sock, done]() mutable {
            handle_connection(std::move(*sock));
            active_.fetch_sub(1);
            done->store(true);
        });
        std::lock_guard lk(workers_mu_);
        workers_.push_back({std::move(t), std::move(done)});
    }
}

void Proxy::handle_connection(Socket client) {
    Socket upstream;
    try {
        upstream = connect_to(config_.upstream_addr);
    } catch (const NetError& e) {
        // Client connection is dropped; no session file is created.
        emit_diagnostic(std::string("UpstreamConnectFailed: ") + e.what());
        return;
    }

    SessionId sid = random_session_id();
    std::unique_ptr<ConnState> conn;
    try {
        conn = std::make_unique<ConnState>(
            config_.capture_path / (session_id_hex(sid) + ".hyc"), sid, now_us(),
            config_.sniff_rules.max_client_packets);
    } catch (const std::exception& e) {
        emit_diagnostic(std::string("CaptureWriteFailed: ") + e.what());
        return;
    }

    const std::int64_t idle_ms = std::int64_t(config_.idle_timeout_s) * 1000;
    std::atomic<bool> session_dead{false};

    // Forwards src→dst until EOF, error, idle timeout, or proxy stop.
    auto relay_loop = [&](Socket& src, Socket& dst, Direction dir) {
        std::vector<std::uint8_t> buf(kRelayChunk);
        while (!stop_ && !session_dead) {
            ReadResult r;
            try {
                r = read_some(src, buf, kPollSliceMs);
            } catch (const NetError&) {
                session_dead = true;
                dst.shutdown_both();
                return;
            }
            if (r.status == ReadStatus::Timeout) {
                if (steady_ms() - conn->last_activity_ms.load() > idle_ms) {
                    session_dead = true;
                    src.shutdown_both();
                    dst.shutdown_both();
                    return;
                }
                continue;
            }
            if (r.status == ReadStatus::Eof) {
                dst.shutdown_write();  // propagate half-close, let dst finish
                return;
            }
            std::span<const std::uint8_t> chunk(buf.data(), r.n);
            // Capture before forwarding: the peer can only react to this
            // chunk after write_all below, so records land in causal order
            // even though the two directions run unsynchronized.
            if (!conn->append(dir, chunk)) {
                session_dead = true;
                src.shutdown_both();
                dst.shutdown_both();
                return;
            }
            if (!write_all(dst, chunk)) {
                session_dead = true;
                src.shutdown_both();
                return;
            }
            conn->last_activity_ms.store(steady_ms());
        }
    };
    // No exception may escape: the sibling relay still needs its join.
    auto relay = [&](Socket& src, Socket& dst, Direction dir) {
        try {
            relay_loop(src, dst, dir);
        } catch (const std::exception&) {
            session_dead = true;
            src.shutdown_both();
            dst.shutdown_both();
        }
    };

    std::thread s2c([&] { relay(upstream, client, Direction::ServerToClient); });
    relay(client, upstream, Direction::ClientToServer);
    s2c.join();

    SessionSummary summary;
    std::vector<Packet> early;
    {
        std::lock_guard lk(conn->mu);
        if (conn->write_failed) {
            std::string err = conn->write_error;
            conn->writer.abort();
            emit_diagnostic("CaptureWriteFailed: " + err);
            return;
        }
        try {
            conn->writer.finalize();
        } catch (const std::exception& e) {
            conn->writer.abort();
            emit_diagnostic(std::string("CaptureWriteFailed: ") + e.what());
            return;
        }
        summary.session_id = conn->session_id;
        summary.c2s_bytes = conn->c2s_bytes;
        summary.s2c_bytes = conn->s2c_bytes;
        early = conn->early_c2s;
    }
    summary.hits = sniff_client_packets(sid, early, config_.sniff_rules);
    emit_summary(summary);
}

}  // namespace hyc
