// Shared test plumbing: fixture loading, the expected golden session built
// by hand, temp dirs, and a fork/exec harness for driving the CLI binary.

#ifndef HYC_TESTS_HELPERS_HPP
#define HYC_TESTS_HELPERS_HPP

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "hyc/bytes.hpp"
#include "hyc/capture.hpp"

namespace hyc_test {

using namespace hyc;

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::filesystem::path fixture_path(const std::string& name) {
    return std::filesystem::path(HYC_FIXTURE_DIR) / name;
}

inline std::filesystem::path data_path(const std::string& name) {
    return std::filesystem::path(HYC_DATA_DIR) / name;
}

inline Bytes fixture_hex_bytes(const std::string& name) {
    std::string text = read_file(fixture_path(name));
    std::string hex;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) hex += c;
    return from_hex(hex);
}

inline Bytes golden_capture_bytes() { return fixture_hex_bytes("golden_session.hex"); }

inline std::string golden_xml() { return read_file(fixture_path("golden_extract.xml")); }

/// The HDP/0 reply to "GET contacts" on the fixture dataset, assembled by
/// hand from the protocol grammar.
inline Bytes golden_get_frame() {
    Bytes f;
    auto lit = [&](std::string_view s) { f.insert(f.end(), s.begin(), s.end()); };
    f.push_back(0x02);
    f.push_back(0x1f); lit("name"); f.push_back(0x1e); lit("Alice");
    f.push_back(0x1f); lit("city"); f.push_back(0x1e); lit("Berlin");
    f.push_back(0x03);
    f.push_back(0x02);
    f.push_back(0x1f); lit("name"); f.push_back(0x1e); lit("Bob");
    f.push_back(0x1f); lit("city"); f.push_back(0x1e); lit("Kiel");
    f.push_back(0x03);
    f.push_back(0x04);
    return f;
}

/// What the golden fixture must decode to, field by field. Constructed here
/// without touching the codec.
inline Session expected_golden_session() {
    Session s;
    for (int i = 0; i < 16; ++i) s.session_id[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
    s.opened_us = 1700000000000000ull;
    auto add = [&](std::uint64_t seq, std::uint64_t dt, Direction d, Bytes payload) {
        s.packets.push_back({seq, s.opened_us + dt, d, std::move(payload)});
    };
    add(0, 100, Direction::ClientToServer, to_bytes("AUTH demo demo-pass\n"));
    add(1, 200, Direction::ServerToClient, to_bytes("OK LIC-0001\n"));
    add(2, 300, Direction::ClientToServer, to_bytes("GET contacts\n"));
    add(3, 400, Direction::ServerToClient, golden_get_frame());
    return s;
}

struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<unsigned> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("hyc_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::filesystem::path operator/(const std::string& name) const {
        return path / name;
    }
};

// ---- CLI process harness -------------------------------------------------

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

inline std::string cli_path() { return HYC_CLI_PATH; }

/// Runs the hyc binary to completion with the given arguments.
inline CliResult run_cli(const std::vector<std::string>& args) {
    TempDir dir;
    auto out_path = dir / "out";
    auto err_path = dir / "err";

    pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("fork failed");
    if (pid == 0) {
        int out_fd = ::open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        int err_fd = ::open(err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        ::dup2(out_fd, 1);
        ::dup2(err_fd, 2);
        std::vector<char*> argv;
        std::string bin = cli_path();
        argv.push_back(bin.data());
        std::vector<std::string> copy = args;
        for (auto& a : copy) argv.push_back(a.data());
        argv.push_back(nullptr);
        ::execv(bin.c_str(), argv.data());
        ::_exit(127);
    }
    int status = 0;
    ::waitpid(pid, &status, 0);
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -WTERMSIG(status);
    r.out = read_file(out_path);
    r.err = read_file(err_path);
    return r;
}

/// A long-running hyc subcommand (proxy, mock-serve) with captured streams.
class CliServer {
public:
    explicit CliServer(const std::vector<std::string>& args) {
        out_path_ = dir_ / "out";
        err_path_ = dir_ / "err";
        pid_ = ::fork();
        if (pid_ < 0) throw std::runtime_error("fork failed");
        if (pid_ == 0) {
            int out_fd = ::open(out_path_.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
            int err_fd = ::open(err_path_.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
            ::dup2(out_fd, 1);
            ::dup2(err_fd, 2);
            std::vector<char*> argv;
            std::string bin = cli_path();
            argv.push_back(bin.data());
            std::vector<std::string> copy = args;
            for (auto& a : copy) argv.push_back(a.data());
            argv.push_back(nullptr);
            ::execv(bin.c_str(), argv.data());
            ::_exit(127);
        }
    }

    ~CliServer() {
        if (pid_ > 0) {
            ::kill(pid_, SIGKILL);
            int status;
            ::waitpid(pid_, &status, 0);
        }
    }

    /// Polls stderr for "listening host:port" and returns the address.
    std::string wait_for_listen(int timeout_ms = 5000) {
        auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(timeout_ms);
        while (std::chrono::steady_clock::now() < deadline) {
            std::string err;
            try {
                err = read_file(err_path_);
            } catch (const std::exception&) {
            }
            auto at = err.find("listening ");
            if (at != std::string::npos) {
                auto end = err.find('\n', at);
                if (end != std::string::npos)
                    return err.substr(at + 10, end - at - 10);
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        throw std::runtime_error("server never reported listening; stderr: " +
                                 read_file(err_path_));
    }

    /// SIGINT, wait, and collect the exit code.
    int stop() {
        if (pid_ <= 0) return -1;
        ::kill(pid_, SIGINT);
        int status = 0;
        ::waitpid(pid_, &status, 0);
        pid_ = -1;
        return WIFEXITED(status) ? WEXITSTATUS(status) : -WTERMSIG(status);
    }

    std::string out() const { return read_file(out_path_); }
    std::string err() const { return read_file(err_path_); }

private:
    TempDir dir_;
    std::filesystem::path out_path_, err_path_;
    pid_t pid_ = -1;
};

}  // namespace hyc_test

#endif
