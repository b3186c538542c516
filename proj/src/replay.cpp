#include "hyc/replay.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <sstream>

#include "hyc/net.hpp"

namespace hyc {

namespace {

std::uint64_t now_us() {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count());
}

bool is_name_token(std::string_view name) {
    if (name.empty()) return false;
    auto head = [](char c) {
        return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
    };
    auto tail = [&](char c) {
        return head(c) || (c >= '0' && c <= '9') || c == '.' || c == '-';
    };
    if (!head(name[0])) return false;
    return std::all_of(name.begin() + 1, name.end(), tail);
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

std::size_t parse_uint(std::string_view token, const char* what) {
    std::size_t value = 0;
    auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || p != token.data() + token.size())
        throw std::invalid_argument(std::string("bad ") + what + ": '" +
                                    std::string(token) + "'");
    return value;
}

/// Shared by mark_placeholder and the script parser.
void insert_placeholder(ReplayScript& script, std::size_t step_index,
                        std::size_t start, std::size_t end,
                        const std::string& name) {
    if (!is_name_token(name))
        throw std::invalid_argument("bad placeholder name: '" + name + "'");
    if (step_index >= script.steps.size())
        throw RangeOutOfBounds("step " + std::to_string(step_index) +
                               " does not exist");
    ReplayStep& step = script.steps[step_index];
    if (start >= end || end > step.template_bytes.size())
        throw RangeOutOfBounds("range [" + std::to_string(start) + "," +
                               std::to_string(end) + ") not inside a " +
                               std::to_string(step.template_bytes.size()) +
                               "-byte template");
    for (const auto& s : script.steps)
        for (const auto& p : s.placeholders)
            if (p.name == name)
                throw DuplicateName("placeholder '" + name + "' already exists");
    for (const auto& p : step.placeholders)
        if (start < p.end && p.start < end)
            throw OverlappingPlaceholder("range overlaps placeholder '" + p.name +
                                         "'");
    auto it = std::upper_bound(
        step.placeholders.begin(), step.placeholders.end(), start,
        [](std::size_t s, const Placeholder& p) { return s < p.start; });
    step.placeholders.insert(it, Placeholder{name, start, end});
}

}  // namespace

std::string ReplayScript::serialize() const {
    std::ostringstream out;
    out << "source " << session_id_hex(source_session) << "\n";
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const ReplayStep& s = steps[i];
        out << "step " << i << " payload_hex=" << to_hex(s.template_bytes)
            << " expect_reply=" << (s.expect_reply ? 1 : 0)
            << " timeout_ms=" << s.reply_timeout_ms << "\n";
        for (const auto& p : s.placeholders)
            out << "placeholder " << i << " " << p.start << " " << p.end << " "
                << p.name << "\n";
    }
    return out.str();
}

ReplayScript ReplayScript::parse(std::string_view text) {
    ReplayScript script;
    bool saw_source = false;
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
            throw std::invalid_argument("script line " + std::to_string(lineno) +
                                        ": " + why);
        };
        if (tokens[0] == "source") {
            if (tokens.size() != 2) fail("expected: source <session-id-hex>");
            if (saw_source) fail("duplicate source line");
            Bytes id = from_hex(tokens[1]);
            if (id.size() != script.source_session.size())
                fail("session id must be 16 bytes");
            std::copy(id.begin(), id.end(), script.source_session.begin());
            saw_source = true;
        } else if (tokens[0] == "step") {
            if (tokens.size() < 3) fail("expected: step <index> <key>=<value>...");
            if (parse_uint(tokens[1], "step index") != script.steps.size())
                fail("step indices must be contiguous from 0");
            ReplayStep step;
            bool saw_payload = false;
            for (std::size_t i = 2; i < tokens.size(); ++i) {
                std::size_t eq = tokens[i].find('=');
                if (eq == std::string_view::npos) fail("expected <key>=<value>");
                std::string_view key = tokens[i].substr(0, eq);
                std::string_view value = tokens[i].substr(eq + 1);
                if (key == "payload_hex") {
                    step.template_bytes = from_hex(value);
                    saw_payload = true;
                } else if (key == "expect_reply") {
                    if (value != "0" && value != "1") fail("expect_reply must be 0 or 1");
                    step.expect_reply = value == "1";
                } else if (key == "timeout_ms") {
                    std::size_t t = parse_uint(value, "timeout_ms");
                    if (t == 0 || t > 3600 * 1000) fail("timeout_ms out of range");
                    step.reply_timeout_ms = static_cast<int>(t);
                } else {
                    fail("unknown step key '" + std::string(key) + "'");
                }
            }
            if (!saw_payload) fail("step needs payload_hex=");
            script.steps.push_back(std::move(step));
        } else if (tokens[0] == "placeholder") {
            if (tokens.size() != 5)
                fail("expected: placeholder <step-index> <start> <end> <name>");
            insert_placeholder(script, parse_uint(tokens[1], "step index"),
                               parse_uint(tokens[2], "start"),
                               parse_uint(tokens[3], "end"),
                               std::string(tokens[4]));
        } else {
            fail("unknown directive '" + std::string(tokens[0]) + "'");
        }
    }
    if (!saw_source) throw std::invalid_argument("script has no source line");
    return script;
}

ReplayScript ReplayScript::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open script file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

ReplayScript build_script(const Session& session) {
    ReplayScript script;
    script.source_session = session.session_id;
    const auto& packets = session.packets;
    for (std::size_t i = 0; i < packets.size(); ++i) {
        if (packets[i].direction != Direction::ClientToServer) continue;
        ReplayStep step;
        step.template_bytes = packets[i].payload;
        step.expect_reply = false;
        for (std::size_t j = i + 1; j < packets.size(); ++j) {
            if (packets[j].direction == Direction::ClientToServer) break;
            step.expect_reply = true;
            break;
        }
        script.steps.push_back(std::move(step));
    }
    if (script.steps.empty())
        throw EmptyClientStream("session " + session_id_hex(session.session_id) +
                                " has no ClientToServer packets");
    return script;
}

ReplayScript mark_placeholder(const ReplayScript& script, std::size_t step_index,
                              std::size_t start, std::size_t end,
                              const std::string& name) {
    ReplayScript out = script;
    insert_placeholder(out, step_index, start, end, name);
    return out;
}

Bytes render_step(const ReplayStep& step, std::span<const Substitution> bindings) {
    Bytes out;
    std::size_t cursor = 0;
    for (const auto& ph : step.placeholders) {
        const Substitution* sub = nullptr;
        for (const auto& b : bindings)
            if (b.name == ph.name) {
                sub = &b;
                break;
            }
        if (!sub)
            throw UnboundPlaceholder("placeholder '" + ph.name + "' is unbound");
        out.insert(out.end(), step.template_bytes.begin() + cursor,
                   step.template_bytes.begin() + ph.start);
        out.insert(out.end(), sub->value.begin(), sub->value.end());
        cursor = ph.end;
    }
    out.insert(out.end(), step.template_bytes.begin() + cursor,
               step.template_bytes.end());
    return out;
}

ReplayResult run_replay(const ReplayScript& script,
                        std::span<const Substitution> bindings,
                        const std::string& server_addr,
                        const ReplayOptions& options) {
    // Validate the binding/placeholder bijection before touching the network.
    std::vector<std::string_view> names;
    for (const auto& s : script.steps)
        for (const auto& p : s.placeholders) names.push_back(p.name);
    for (std::size_t i = 0; i < bindings.size(); ++i) {
        if (std::find(names.begin(), names.end(), bindings[i].name) == names.end())
            throw std::invalid_argument("binding '" + bindings[i].name +
                                        "' addresses no placeholder");
        for (std::size_t j = i + 1; j < bindings.size(); ++j)
            if (bindings[i].name == bindings[j].name)
                throw std::invalid_argument("duplicate binding '" +
                                            bindings[i].name + "'");
    }
    for (auto name : names) {
        bool bound = false;
        for (const auto& b : bindings)
            if (b.name == name) {
                bound = true;
                break;
            }
        if (!bound)
            throw UnboundPlaceholder("placeholder '" + std::string(name) +
                                     "' is unbound");
    }

    Socket sock;
    try {
        sock = connect_to(server_addr);
    } catch (const NetError& e) {
        throw ConnectFailed(e.what());
    }

    SessionBuilder builder(random_session_id(), now_us());
    std::vector<std::size_t> timed_out;

    for (std::size_t i = 0; i < script.steps.size(); ++i) {
        const ReplayStep& step = script.steps[i];
        Bytes payload = render_step(step, bindings);
        if (!payload.empty()) {
            if (!write_all(sock, payload)) break;  // peer gone; keep what we have
            builder.append(Direction::ClientToServer, payload, now_us());
        }
        if (!step.expect_reply) continue;
        ReplyRead r = read_until(sock, options.reply_terminators,
                                 step.reply_timeout_ms);
        if (!r.data.empty())
            builder.append(Direction::ServerToClient, r.data, now_us());
        if (!r.saw_terminator && !r.eof) timed_out.push_back(i);
    }
    return ReplayResult{builder.finish(), std::move(timed_out)};
}

}  // namespace hyc
