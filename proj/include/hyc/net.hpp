// Thin POSIX socket layer: RAII fds, host:port endpoints, timed reads.

#ifndef HYC_NET_HPP
#define HYC_NET_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "hyc/bytes.hpp"

namespace hyc {

class NetError : public std::runtime_error {
public:
    explicit NetError(const std::string& what) : std::runtime_error(what) {}
};

class ConnectFailed : public NetError {
public:
    using NetError::NetError;
};

class ReplyTimeout : public NetError {
public:
    using NetError::NetError;
};

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;

    /// Parses "host:port". Throws std::invalid_argument.
    static Endpoint parse(std::string_view addr);
    std::string str() const { return host + ":" + std::to_string(port); }
};

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { close(); }

    Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void close();
    void shutdown_write();
    void shutdown_both();

private:
    int fd_ = -1;
};

enum class ReadStatus { Data, Eof, Timeout };

struct ReadResult {
    ReadStatus status;
    std::size_t n = 0;
};

/// Connects to addr ("host:port"). Throws NetError.
Socket connect_to(const std::string& addr);

/// Waits up to timeout_ms (-1 = forever) then reads what is available.
/// Throws NetError on hard socket errors.
ReadResult read_some(Socket& sock, std::span<std::uint8_t> buf, int timeout_ms);

/// Sends everything; false if the peer is gone. Never raises SIGPIPE.
bool write_all(Socket& sock, std::span<const std::uint8_t> data);

/// Reads until one of the terminator bytes arrives (kept in the result), the
/// peer closes, the deadline passes, or max_len is reached. Peeks before
/// consuming, so bytes after the terminator stay in the socket.
struct ReplyRead {
    Bytes data;
    bool saw_terminator = false;
    bool eof = false;
};
ReplyRead read_until(Socket& sock, std::span<const std::uint8_t> terminators,
                     int timeout_ms, std::size_t max_len = 64 * 1024 * 1024);

/// Listening socket bound to addr; port 0 picks an ephemeral one.
class Listener {
public:
    /// Throws NetError when the address cannot be bound.
    static Listener bind(const std::string& addr);

    /// Waits up to timeout_ms for a connection; nullopt on timeout.
    /// Throws NetError if the listener was closed or failed.
    std::optional<Socket> accept(int timeout_ms);

    const Endpoint& local() const { return local_; }
    void close() { sock_.close(); }

private:
    Socket sock_;
    Endpoint local_;
};

}  // namespace hyc

#endif
