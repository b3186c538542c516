// TCP man-in-the-middle relay: transparent byte forwarding with capture tee
// and early-packet credential sniffing.

#ifndef HYC_PROXY_HPP
#define HYC_PROXY_HPP

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "hyc/capture.hpp"
#include "hyc/net.hpp"
#include "hyc/sniff.hpp"

namespace hyc {

struct ProxyConfig {
    std::string listen_addr;
    std::string upstream_addr;
    /// Directory receiving one <session_id-hex>.hyc file per session.
    std::filesystem::path capture_path;
    SniffRuleSet sniff_rules;
    std::size_t max_sessions = 64;
    int idle_timeout_s = 300;

    /// Throws std::invalid_argument: listen and upstream must differ, limits
    /// must be positive, the rule set must be valid.
    void validate() const;
};

struct SessionSummary {
    SessionId session_id{};
    std::uint64_t c2s_bytes = 0;
    std::uint64_t s2c_bytes = 0;
    std::vector<CredentialHit> hits;

    /// One NDJSON object, keys session_id, c2s_bytes, s2c_bytes, hits.
    /// Secrets stay out of the line unless show_secrets is set.
    std::string ndjson(bool show_secrets = false) const;
};

class BindFailed : public NetError {
public:
    using NetError::NetError;
};

/// Relay server. One accepted connection = one upstream connection = one
/// session. Per-session failures (upstream unreachable, capture write
/// errors) are reported through the diagnostic callback and never stop the
/// accept loop.
class Proxy {
public:
    using SummaryFn = std::function<void(const SessionSummary&)>;
    using DiagnosticFn = std::function<void(const std::string&)>;

    /// Validates config. Callbacks may be empty; they are invoked from
    /// worker threads, serialized by an internal lock.
    Proxy(ProxyConfig config, SummaryFn on_summary, DiagnosticFn on_diagnostic = {});
    ~Proxy();

    Proxy(const Proxy&) = delete;
    Proxy& operator=(const Proxy&) = delete;

    /// Binds and launches the accept loop. Throws BindFailed.
    void start();

    /// Actual bound address, valid after start().
    const Endpoint& listen_endpoint() const { return listener_.local(); }

    /// Stops accepting, unblocks relays, joins every thread. Idempotent.
    /// Sessions in flight are finalized as closed, not abandoned.
    void stop();

private:
    struct Worker {
        std::thread thread;
        std::shared_ptr<std::atomic<bool>> done;
    };

    void accept_loop();
    void handle_connection(Socket client);
    void reap_workers(bool join_all);
    void emit_summary(const SessionSummary& summary);
    void emit_diagnostic(const std::string& line);

    ProxyConfig config_;
    SummaryFn on_summary_;
    DiagnosticFn on_diagnostic_;

    Listener listener_;
    std::thread accept_thread_;
    std::atomic<bool> stop_{false};
    bool started_ = false;

    std::mutex workers_mu_;
    std::vector<Worker> workers_;
    std::atomic<std::size_t> active_{0};

    std::mutex emit_mu_;
};

}  // namespace hyc

#endif
