// Deterministic HDP/0 mock pair: a concurrent server and a scripted client.
//
// HDP/0 wire protocol:
//   - requests are single 0x0A-terminated lines:
//       AUTH <user> <password> | GET <table> | QUIT
//   - AUTH reply: "OK <license>\n" or "ERR auth\n"
//   - GET reply (only after a successful AUTH on this connection): per record
//     0x02, then per field 0x1F <name> 0x1E <value>, then 0x03; one 0x04 after
//     the last record. Unknown table: "ERR table\n".
//   - QUIT: connection close, no reply.
//   - anything else: "ERR proto\n", then connection close.

#ifndef HYC_MOCK_HPP
#define HYC_MOCK_HPP

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "hyc/bytes.hpp"
#include "hyc/net.hpp"

namespace hyc {

struct MockUser {
    std::string username;
    std::string password;
    std::string license;
};

/// One record is an ordered list of (field name, field value) pairs.
using MockRecord = std::vector<std::pair<std::string, std::string>>;

struct MockDataset {
    std::vector<MockUser> users;
    std::map<std::string, std::vector<MockRecord>> tables;

    /// Throws std::invalid_argument when an invariant is broken: usernames
    /// unique, user fields space-free printable ASCII (they travel inside a
    /// space-separated request line), field names non-empty, all strings
    /// printable ASCII.
    void validate() const;

    const MockUser* find_user(std::string_view name) const;

    /// The checked-in demo dataset: user demo/demo-pass/LIC-0001 and the
    /// 2-record "contacts" table.
    static MockDataset fixture();

    /// Line format: `user <name> <password> <license>` and
    /// `record <table> <field>=<value>...`; '#' starts a comment.
    /// Fields are space-separated, so values cannot contain spaces.
    static MockDataset parse(std::string_view text);
    static MockDataset parse_file(const std::string& path);
};

/// STX/US/RS/ETX framing for one table, EOT after the last record.
Bytes frame_table(const std::vector<MockRecord>& records);

/// Serves HDP/0 on its own threads until stop() or destruction.
/// Connections are independent; auth state is per connection.
class MockServer {
public:
    /// Binds and starts accepting. Throws NetError when addr is not bindable,
    /// std::invalid_argument when the dataset is invalid.
    MockServer(const std::string& listen_addr, MockDataset dataset);
    ~MockServer();

    MockServer(const MockServer&) = delete;
    MockServer& operator=(const MockServer&) = delete;

    /// Actual bound address (resolves an ephemeral port request).
    const Endpoint& endpoint() const { return listener_.local(); }

    /// Idempotent; joins every worker thread before returning.
    void stop();

private:
    void accept_loop();
    void serve_connection(Socket conn);

    MockDataset dataset_;
    Listener listener_;
    std::atomic<bool> stop_{false};
    std::thread accept_thread_;
    std::mutex workers_mu_;
    std::vector<std::thread> workers_;
};

struct Exchange {
    Bytes sent;      // command line including the trailing 0x0A
    Bytes received;  // complete framed reply; empty when the server just closes
};

/// Sends each command (a line without the trailing newline) in order and
/// reads the complete framed reply: a 0x0A-terminated line, or a 0x02-opened
/// table frame read through its 0x04. A QUIT is answered by a close, recorded
/// as an empty reply. Throws ConnectFailed and ReplyTimeout.
std::vector<Exchange> scripted_client(const std::string& addr,
                                      std::span<const std::string> commands,
                                      int reply_timeout_ms = 2000);

}  // namespace hyc

#endif
