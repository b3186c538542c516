#include "hyc/sniff.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hyc {

void SniffRuleSet::validate() const {
    if (max_client_packets < 1)
        throw std::invalid_argument("max_client_packets must be >= 1");
    if (auth_markers.empty())
        throw std::invalid_argument("at least one auth marker is required");
    for (const Bytes& m : auth_markers)
        if (m.empty()) throw std::invalid_argument("auth markers must be non-empty");
}

SniffRuleSet SniffRuleSet::parse(std::string_view text) {
    SniffRuleSet rules;
    bool markers_replaced = false;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string line(text.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                                        : eol - pos));
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++lineno;

        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream in(line);
        std::string key;
        if (!(in >> key)) continue;

        auto fail = [&](const std::string& msg) {
            throw std::invalid_argument("sniff rules line " + std::to_string(lineno) +
                                        ": " + msg);
        };
        if (key == "max_client_packets") {
            long n = 0;
            if (!(in >> n) || n < 1) fail("expected a positive integer");
            rules.max_client_packets = static_cast<std::size_t>(n);
        } else if (key == "separators") {
            rules.token_separators.clear();
            std::string tok;
            while (in >> tok) {
                Bytes b = from_hex(tok);
                if (b.size() != 1) fail("separators are single bytes, got '" + tok + "'");
                rules.token_separators.push_back(b[0]);
            }
            if (rules.token_separators.empty()) fail("expected at least one separator");
        } else if (key == "marker") {
            std::string tok;
            if (!(in >> tok)) fail("expected <hex>");
            if (!markers_replaced) {
                rules.auth_markers.clear();
                markers_replaced = true;
            }
            rules.auth_markers.push_back(from_hex(tok));
        } else {
            fail("unknown key '" + key + "'");
        }
        std::string extra;
        if (key != "separators" && (in >> extra)) fail("unexpected token '" + extra + "'");
    }
    rules.validate();
    return rules;
}

SniffRuleSet SniffRuleSet::parse_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open sniff rules file " + path.string());
    std::stringstream buf;
    buf << f.rdbuf();
    return parse(buf.str());
}

namespace {

bool printable_token(std::span<const std::uint8_t> t) {
    return !t.empty() && all_printable(t);
}

}  // namespace

std::vector<CredentialHit> sniff_client_packets(const SessionId& session_id,
                                                std::span<const Packet> client_packets,
                                                const SniffRuleSet& rules) {
    std::vector<CredentialHit> hits;
    std::size_t scanned = 0;
    for (const Packet& p : client_packets) {
        if (scanned++ >= rules.max_client_packets) break;

        const Bytes* marker = nullptr;
        for (const Bytes& m : rules.auth_markers) {
            if (p.payload.size() >= m.size() &&
                std::memcmp(p.payload.data(), m.data(), m.size()) == 0) {
                marker = &m;
                break;
            }
        }
        if (!marker) continue;

        auto is_sep = [&](std::uint8_t b) {
            return std::find(rules.token_separators.begin(), rules.token_separators.end(),
                             b) != rules.token_separators.end();
        };

        std::vector<std::string> tokens;
        std::size_t start = marker->size();
        for (std::size_t i = start; i <= p.payload.size() && tokens.size() < 2; ++i) {
            if (i == p.payload.size() || is_sep(p.payload[i])) {
                std::span<const std::uint8_t> tok(p.payload.data() + start, i - start);
                if (printable_token(tok)) tokens.emplace_back(tok.begin(), tok.end());
                start = i + 1;
            }
        }
        if (tokens.size() < 2) continue;

        CredentialHit hit;
        hit.session_id = session_id;
        hit.packet_seq = p.seq;
        hit.username = std::move(tokens[0]);
        hit.secret = std::move(tokens[1]);
        hit.marker = *marker;
        hits.push_back(std::move(hit));
    }
    return hits;
}

std::vector<CredentialHit> sniff_credentials(const Session& session,
                                             const SniffRuleSet& rules) {
    std::vector<Packet> client;
    for (const Packet& p : session.packets)
        if (p.direction == Direction::ClientToServer) client.push_back(p);
    return sniff_client_packets(session.session_id, client, rules);
}

}  // namespace hyc
