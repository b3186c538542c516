#include "hyc/net.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

namespace hyc {

namespace {

std::string errno_str() { return std::strerror(errno); }

struct AddrInfo {
    addrinfo* res = nullptr;
    ~AddrInfo() {
        if (res) ::freeaddrinfo(res);
    }
};

int resolve(const Endpoint& ep, bool passive, AddrInfo& out) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = passive ? AI_PASSIVE : 0;
    std::string port = std::to_string(ep.port);
    return ::getaddrinfo(ep.host.empty() ? nullptr : ep.host.c_str(), port.c_str(),
                         &hints, &out.res);
}

}  // namespace

Endpoint Endpoint::parse(std::string_view addr) {
    std::size_t colon = addr.rfind(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == addr.size())
        throw std::invalid_argument("expected host:port, got '" + std::string(addr) + "'");
    Endpoint ep;
    ep.host = std::string(addr.substr(0, colon));
    unsigned long port = 0;
    for (char c : addr.substr(colon + 1)) {
        if (c < '0' || c > '9')
            throw std::invalid_argument("bad port in '" + std::string(addr) + "'");
        port = port * 10 + static_cast<unsigned long>(c - '0');
        if (port > 65535)
            throw std::invalid_argument("port out of range in '" + std::string(addr) + "'");
    }
    ep.port = static_cast<std::uint16_t>(port);
    return ep;
}

Socket& Socket::operator=(Socket&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

void Socket::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void Socket::shutdown_write() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

void Socket::shutdown_both() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

Socket connect_to(const std::string& addr) {
    Endpoint ep = Endpoint::parse(addr);
    AddrInfo ai;
    if (resolve(ep, false, ai) != 0 || !ai.res)
        throw NetError("cannot resolve " + addr);
    int last_errno = 0;
    for (addrinfo* a = ai.res; a; a = a->ai_next) {
        int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
        if (fd < 0) {
            last_errno = errno;
            continue;
        }
        if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) {
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            return Socket(fd);
        }
        last_errno = errno;
        ::close(fd);
    }
    throw NetError("connect to " + addr + " failed: " + std::strerror(last_errno));
}

ReadResult read_some(Socket& sock, std::span<std::uint8_t> buf, int timeout_ms) {
    pollfd pfd{sock.fd(), POLLIN, 0};
    int rc = ::poll(&pfd, 1, timeout_ms);
    if (rc < 0) throw NetError("poll failed: " + errno_str());
    if (rc == 0) return {ReadStatus::Timeout, 0};
    ssize_t n = ::recv(sock.fd(), buf.data(), buf.size(), 0);
    if (n < 0) {
        if (errno == ECONNRESET) return {ReadStatus::Eof, 0};
        throw NetError("recv failed: " + errno_str());
    }
    if (n == 0) return {ReadStatus::Eof, 0};
    return {ReadStatus::Data, static_cast<std::size_t>(n)};
}

bool write_all(Socket& sock, std::span<const std::uint8_t> data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        ssize_t n = ::send(sock.fd(), data.data() + sent, data.size() - sent,
                           MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == EPIPE || errno == ECONNRESET) return false;
            throw NetError("send failed: " + errno_str());
        }
        sent += static_cast<std::size_t>(n);
    }
    return true;
}

ReplyRead read_until(Socket& sock, std::span<const std::uint8_t> terminators,
                     int timeout_ms, std::size_t max_len) {
    ReplyRead out;
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::milliseconds(timeout_ms < 0 ? 0 : timeout_ms);
    std::uint8_t buf[64 * 1024];

    while (out.data.size() < max_len) {
        int remaining = -1;
        if (timeout_ms >= 0) {
            auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                            deadline - std::chrono::steady_clock::now())
                            .count();
            if (left <= 0) return out;
            remaining = static_cast<int>(left);
        }
        pollfd pfd{sock.fd(), POLLIN, 0};
        int rc = ::poll(&pfd, 1, remaining);
        if (rc < 0) throw NetError("poll failed: " + errno_str());
        if (rc == 0) return out;  // deadline

        std::size_t want = std::min(sizeof buf, max_len - out.data.size());
        ssize_t n = ::recv(sock.fd(), buf, want, MSG_PEEK);
        if (n < 0) {
            if (errno == ECONNRESET) {
                out.eof = true;
                return out;
            }
            throw NetError("recv failed: " + errno_str());
        }
        if (n == 0) {
            out.eof = true;
            return out;
        }

        // Consume through the first terminator, or the whole peeked chunk.
        std::size_t take = static_cast<std::size_t>(n);
        bool found = false;
        for (std::size_t i = 0; i < static_cast<std::size_t>(n) && !found; ++i) {
            for (std::uint8_t t : terminators) {
                if (buf[i] == t) {
                    take = i + 1;
                    found = true;
                    break;
                }
            }
        }
        ssize_t got = ::recv(sock.fd(), buf, take, 0);
        if (got <= 0) throw NetError("recv failed after peek: " + errno_str());
        out.data.insert(out.data.end(), buf, buf + got);
        if (found && static_cast<std::size_t>(got) == take) {
            out.saw_terminator = true;
            return out;
        }
    }
    return out;
}

Listener Listener::bind(const std::string& addr) {
    Endpoint ep = Endpoint::parse(addr);
    AddrInfo ai;
    if (resolve(ep, true, ai) != 0 || !ai.res)
        throw NetError("cannot resolve " + addr);

    int last_errno = 0;
    for (addrinfo* a = ai.res; a; a = a->ai_next) {
        int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
        if (fd < 0) {
            last_errno = errno;
            continue;
        }
        int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 64) == 0) {
            Listener l;
            l.sock_ = Socket(fd);
            sockaddr_storage ss{};
            socklen_t slen = sizeof ss;
            if (::getsockname(fd, reinterpret_cast<sockaddr*>(&ss), &slen) == 0) {
                char host[NI_MAXHOST], serv[NI_MAXSERV];
                if (::getnameinfo(reinterpret_cast<sockaddr*>(&ss), slen, host,
                                  sizeof host, serv, sizeof serv,
                                  NI_NUMERICHOST | NI_NUMERICSERV) == 0) {
                    l.local_.host = host;
                    l.local_.port = static_cast<std::uint16_t>(std::stoi(serv));
                }
            }
            return l;
        }
        last_errno = errno;
        ::close(fd);
    }
    throw NetError("bind " + addr + " failed: " + std::strerror(last_errno));
}

std::optional<Socket> Listener::accept(int timeout_ms) {
    if (!sock_.valid()) throw NetError("listener is closed");
    pollfd pfd{sock_.fd(), POLLIN, 0};
    int rc = ::poll(&pfd, 1, timeout_ms);
    if (rc < 0) throw NetError("poll failed: " + errno_str());
    if (rc == 0) return std::nullopt;
    int fd = ::accept(sock_.fd(), nullptr, nullptr);
    if (fd < 0) throw NetError("accept failed: " + errno_str());
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return Socket(fd);
}

}  // namespace hyc
