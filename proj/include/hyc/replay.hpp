// Captured-session replay: scripts derived from ClientToServer streams,
// placeholder substitution, and a live driver that records both directions.

#ifndef HYC_REPLAY_HPP
#define HYC_REPLAY_HPP

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hyc/bytes.hpp"
#include "hyc/capture.hpp"

namespace hyc {

class ReplayError : public std::runtime_error {
public:
    explicit ReplayError(const std::string& what) : std::runtime_error(what) {}
};

class EmptyClientStream : public ReplayError {
public:
    using ReplayError::ReplayError;
};

class RangeOutOfBounds : public ReplayError {
public:
    using ReplayError::ReplayError;
};

class OverlappingPlaceholder : public ReplayError {
public:
    using ReplayError::ReplayError;
};

class DuplicateName : public ReplayError {
public:
    using ReplayError::ReplayError;
};

class UnboundPlaceholder : public ReplayError {
public:
    using ReplayError::ReplayError;
};

/// Byte span [start, end) of a step template, to be replaced at render time.
struct Placeholder {
    std::string name;
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(const Placeholder&) const = default;
};

struct ReplayStep {
    Bytes template_bytes;
    std::vector<Placeholder> placeholders;  // non-overlapping, sorted by start
    bool expect_reply = true;
    int reply_timeout_ms = 2000;

    bool operator==(const ReplayStep&) const = default;
};

struct ReplayScript {
    SessionId source_session{};
    std::vector<ReplayStep> steps;  // source session's ClientToServer order

    bool operator==(const ReplayScript&) const = default;

    /// Line-based text form:
    ///   source <session-id-hex>
    ///   step <index> payload_hex=<hex> expect_reply=<0|1> timeout_ms=<int>
    ///   placeholder <step-index> <start> <end> <name>
    /// '#' starts a comment. Step indices must be contiguous from 0, and a
    /// placeholder line must follow its step line.
    std::string serialize() const;
    static ReplayScript parse(std::string_view text);
    static ReplayScript parse_file(const std::string& path);
};

struct Substitution {
    std::string name;
    Bytes value;
};

/// One step per ClientToServer packet, template = payload verbatim, no
/// placeholders. expect_reply is true iff a ServerToClient packet follows
/// before the next ClientToServer packet. Throws EmptyClientStream.
ReplayScript build_script(const Session& session);

/// Returns a copy with template bytes [start, end) of the given step marked
/// as a placeholder. Placeholder names are unique across the whole script so
/// a binding addresses one span unambiguously.
/// Throws RangeOutOfBounds, OverlappingPlaceholder, DuplicateName, and
/// std::invalid_argument for a malformed name.
ReplayScript mark_placeholder(const ReplayScript& script, std::size_t step_index,
                              std::size_t start, std::size_t end,
                              const std::string& name);

/// Splices bound values into the placeholder spans; bytes outside spans are
/// copied verbatim. Throws UnboundPlaceholder.
Bytes render_step(const ReplayStep& step, std::span<const Substitution> bindings);

struct ReplayOptions {
    /// Reply framing: a reply is complete at the first of these bytes.
    /// 0x04 matches the mock protocol; real targets may need another set.
    std::vector<std::uint8_t> reply_terminators{0x04};
};

struct ReplayResult {
    Session session;
    /// Steps whose reply window closed without terminator or EOF. Partial
    /// bytes read before the deadline are still in the session.
    std::vector<std::size_t> timed_out_steps;
};

/// Connects once and walks the steps in order: render, send, and when
/// expect_reply read until a terminator byte, EOF, or reply_timeout_ms.
/// Every sent and non-empty received payload lands in a fresh Session.
/// Bindings are checked before connecting: every placeholder must be bound
/// (UnboundPlaceholder) and every binding must address a placeholder exactly
/// once (std::invalid_argument). Throws ConnectFailed. A peer close mid-run
/// ends the walk early; the partial session is still returned.
ReplayResult run_replay(const ReplayScript& script,
                        std::span<const Substitution> bindings,
                        const std::string& server_addr,
                        const ReplayOptions& options = {});

}  // namespace hyc

#endif
