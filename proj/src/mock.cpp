#include "hyc/mock.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hyc {

namespace {

constexpr std::uint8_t kStx = 0x02;
constexpr std::uint8_t kEtx = 0x03;
constexpr std::uint8_t kEot = 0x04;
constexpr std::uint8_t kUs = 0x1F;
constexpr std::uint8_t kRs = 0x1E;
constexpr std::uint8_t kNl = 0x0A;

bool printable_ascii(std::string_view s) {
    return std::all_of(s.begin(), s.end(),
                       [](char c) { return c >= 0x20 && c <= 0x7E; });
}

bool token_ascii(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
        return c > 0x20 && c <= 0x7E;
    });
}

std::vector<std::string> split_ws(std::string_view line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && line[i] == ' ') ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ') ++j;
        if (j > i) out.emplace_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace

void MockDataset::validate() const {
    std::set<std::string_view> names;
    for (const auto& u : users) {
        if (!token_ascii(u.username) || !token_ascii(u.password) ||
            !token_ascii(u.license))
            throw std::invalid_argument(
                "user fields must be non-empty printable ASCII without spaces");
        if (!names.insert(u.username).second)
            throw std::invalid_argument("duplicate username: " + u.username);
    }
    for (const auto& [table, records] : tables) {
        if (!token_ascii(table))
            throw std::invalid_argument("bad table name: " + table);
        for (const auto& rec : records) {
            for (const auto& [name, value] : rec) {
                if (name.empty() || !printable_ascii(name))
                    throw std::invalid_argument("bad field name in table " + table);
                if (!printable_ascii(value))
                    throw std::invalid_argument("bad field value in table " + table);
            }
        }
    }
}

const MockUser* MockDataset::find_user(std::string_view name) const {
    for (const auto& u : users)
        if (u.username == name) return &u;
    return nullptr;
}

MockDataset MockDataset::fixture() {
    MockDataset d;
    d.users.push_back({"demo", "demo-pass", "LIC-0001"});
    d.tables["contacts"] = {
        {{"name", "Alice"}, {"city", "Berlin"}},
        {{"name", "Bob"}, {"city", "Kiel"}},
    };
    return d;
}

MockDataset MockDataset::parse(std::string_view text) {
    MockDataset d;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++lineno;

        if (std::size_t hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        auto tokens = split_ws(line);
        if (tokens.empty()) continue;

        auto fail = [&](const std::string& why) {
            throw std::invalid_argument("dataset line " + std::to_string(lineno) +
                                        ": " + why);
        };
        if (tokens[0] == "user") {
            if (tokens.size() != 4) fail("expected: user <name> <password> <license>");
            d.users.push_back({tokens[1], tokens[2], tokens[3]});
        } else if (tokens[0] == "record") {
            if (tokens.size() < 3) fail("expected: record <table> <field>=<value>...");
            MockRecord rec;
            for (std::size_t i = 2; i < tokens.size(); ++i) {
                std::size_t eq = tokens[i].find('=');
                if (eq == std::string::npos || eq == 0) fail("expected <field>=<value>");
                rec.emplace_back(tokens[i].substr(0, eq), tokens[i].substr(eq + 1));
            }
            d.tables[tokens[1]].push_back(std::move(rec));
        } else {
            fail("unknown directive '" + tokens[0] + "'");
        }
    }
    d.validate();
    return d;
}

MockDataset MockDataset::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open dataset file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

Bytes frame_table(const std::vector<MockRecord>& records) {
    Bytes out;
    for (const auto& rec : records) {
        out.push_back(kStx);
        for (const auto& [name, value] : rec) {
            out.push_back(kUs);
            out.insert(out.end(), name.begin(), name.end());
            out.push_back(kRs);
            out.insert(out.end(), value.begin(), value.end());
        }
        out.push_back(kEtx);
    }
    out.push_back(kEot);
    return out;
}

MockServer::MockServer(const std::string& listen_addr, MockDataset dataset)
    : dataset_(std::move(dataset)), listener_(Listener::bind(listen_addr)) {
    dataset_.validate();
    accept_thread_ = std::thread([this] { accept_loop(); });
}

MockServer::~MockServer() { stop(); }

void MockServer::stop() {
    if (stop_.exchange(true)) {
        if (accept_thread_.joinable()) accept_thread_.join();
        return;
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::thread> workers;
    {
        std::lock_guard lk(workers_mu_);
        workers.swap(workers_);
    }
    for (auto& t : workers) t.join();
    listener_.close();
}

void MockServer::accept_loop() {
    while (!stop_) {
        std::optional<Socket> conn;
        try {
            conn = listener_.accept(100);
        } catch (const NetError&) {
            break;  // listener closed under us
        }
        if (!conn) continue;
        std::lock_guard lk(workers_mu_);
        workers_.emplace_back(
            [this, c = std::make_shared<Socket>(std::move(*conn))]() mutable {
                serve_connection(std::move(*c));
            });
    }
}

void MockServer::serve_connection(Socket conn) {
    constexpr std::uint8_t kLineEnd[] = {kNl};
    bool authed = false;
    Bytes pending;

    auto reply = [&](std::string_view text) {
        return write_all(conn, to_bytes(text));
    };

    while (!stop_) {
        ReplyRead r = read_until(conn, kLineEnd, 200);
        pending.insert(pending.end(), r.data.begin(), r.data.end());
        if (!r.saw_terminator) {
            if (r.eof) return;
            continue;  // timeout slice; re-check the stop flag
        }

        pending.pop_back();  // strip the 0x0A
        std::string line = to_string(pending);
        pending.clear();
        auto tokens = split_ws(line);

        bool shaped = !line.empty() && printable_ascii(line) && !tokens.empty();
        if (shaped && tokens[0] == "AUTH" && tokens.size() == 3) {
            const MockUser* u = dataset_.find_user(tokens[1]);
            if (u && u->password == tokens[2]) {
                authed = true;
                if (!reply("OK " + u->license + "\n")) return;
            } else {
                if (!reply("ERR auth\n")) return;
            }
        } else if (shaped && tokens[0] == "GET" && tokens.size() == 2) {
            if (!authed) {
                if (!reply("ERR auth\n")) return;
            } else if (auto it = dataset_.tables.find(tokens[1]);
                       it != dataset_.tables.end()) {
                if (!write_all(conn, frame_table(it->second))) return;
            } else {
                if (!reply("ERR table\n")) return;
            }
        } else if (shaped && tokens[0] == "QUIT" && tokens.size() == 1) {
            return;
        } else {
            reply("ERR proto\n");
            return;
        }
    }
}

std::vector<Exchange> scripted_client(const std::string& addr,
                                      std::span<const std::string> commands,
                                      int reply_timeout_ms) {
    Socket sock;
    try {
        sock = connect_to(addr);
    } catch (const NetError& e) {
        throw ConnectFailed(e.what());
    }

    constexpr std::uint8_t kFirstBreak[] = {kNl, kEot};
    constexpr std::uint8_t kEotOnly[] = {kEot};

    std::vector<Exchange> transcript;
    for (const auto& command : commands) {
        Exchange ex;
        ex.sent = to_bytes(command);
        ex.sent.push_back(kNl);
        if (!write_all(sock, ex.sent)) {
            transcript.push_back(std::move(ex));  // server already gone
            break;
        }

        ReplyRead r = read_until(sock, kFirstBreak, reply_timeout_ms);
        ex.received = std::move(r.data);
        // A 0x02-opened frame may contain 0x0A inside values; keep reading
        // until its closing 0x04.
        while (!r.eof && !ex.received.empty() && ex.received.front() == kStx &&
               ex.received.back() != kEot) {
            if (!r.saw_terminator)
                throw ReplyTimeout("timed out mid-frame from " + addr);
            r = read_until(sock, kEotOnly, reply_timeout_ms);
            ex.received.insert(ex.received.end(), r.data.begin(), r.data.end());
        }
        if (!r.saw_terminator && !r.eof)
            throw ReplyTimeout("incomplete reply from " + addr + " for: " + command);
        transcript.push_back(std::move(ex));
        if (r.eof && transcript.back().received.empty() &&
            &command != &commands.back())
            break;  // connection closed; later commands cannot be delivered
    }
    return transcript;
}

}  // namespace hyc
