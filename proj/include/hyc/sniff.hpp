// Plaintext credential sniffing over the first client packets of a session.

#ifndef HYC_SNIFF_HPP
#define HYC_SNIFF_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hyc/capture.hpp"

namespace hyc {

/// What counts as an authentication packet and how to tokenize it.
struct SniffRuleSet {
    /// Only this many leading ClientToServer packets are ever scanned.
    std::size_t max_client_packets = 4;
    /// Byte values that end a token.
    std::vector<std::uint8_t> token_separators = {0x20, 0x0a, 0x1f};
    /// Payload prefixes that mark an authentication packet.
    std::vector<Bytes> auth_markers = {to_bytes("AUTH ")};

    /// Throws std::invalid_argument on an empty marker list, a zero packet
    /// window, or an empty marker sequence.
    void validate() const;

    /// Line-based file format:
    ///   max_client_packets <n>
    ///   separators <hex byte> <hex byte> ...
    ///   marker <hex>              (repeatable; replaces the default)
    /// '#' starts a comment. Omitted keys keep their defaults.
    static SniffRuleSet parse(std::string_view text);
    static SniffRuleSet parse_file(const std::filesystem::path& path);
};

/// One credential pair recovered from a client packet. username and secret
/// are runs of visible ASCII (0x21..0x7e), never empty.
struct CredentialHit {
    SessionId session_id{};
    std::uint64_t packet_seq = 0;
    std::string username;
    std::string secret;
    Bytes marker;

    bool operator==(const CredentialHit&) const = default;
};

/// Scans the first rules.max_client_packets ClientToServer packets. A packet
/// whose payload starts with an auth marker is stripped of the marker and
/// split on the separators; the first two non-empty printable tokens become
/// (username, secret). Server packets are never scanned. Deterministic; a
/// marked packet with fewer than two usable tokens yields no hit.
std::vector<CredentialHit> sniff_credentials(const Session& session,
                                             const SniffRuleSet& rules);

/// Same scan over an already-filtered client packet list (seq order).
std::vector<CredentialHit> sniff_client_packets(const SessionId& session_id,
                                                std::span<const Packet> client_packets,
                                                const SniffRuleSet& rules);

}  // namespace hyc

#endif
