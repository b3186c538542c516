// Packet/session data model and the HYC1 capture file codec.
//
// HYC1 layout (all multi-byte integers big-endian):
//
//   header   magic "HYC1" (4) | version u16 = 1 | session_id (16) |
//            opened_us u64 | record_count u32                       = 34 bytes
//   record   seq u64 | timestamp_us u64 | direction u8 (0|1) |
//            payload_len u32 | payload bytes                         (x count)
//
// Peer address strings are runtime annotations and are not part of the file.

#ifndef HYC_CAPTURE_HPP
#define HYC_CAPTURE_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <stdexcept>
#include <string>

#include "hyc/bytes.hpp"

namespace hyc {

enum class Direction : std::uint8_t {
    ClientToServer = 0,
    ServerToClient = 1,
};

inline const char* direction_tag(Direction d) {
    return d == Direction::ClientToServer ? "c2s" : "s2c";
}

using SessionId = std::array<std::uint8_t, 16>;

std::string session_id_hex(const SessionId& id);
SessionId random_session_id();

/// One relayed read: never empty, at most 16 MiB.
struct Packet {
    std::uint64_t seq = 0;
    std::uint64_t timestamp_us = 0;
    Direction direction = Direction::ClientToServer;
    Bytes payload;

    bool operator==(const Packet&) const = default;
};

inline constexpr std::size_t kMaxPayloadLen = 16u * 1024 * 1024;

/// Ordered, direction-tagged record of one connection. Packets carry
/// gap-free seq numbers 0,1,2,... shared across both directions.
struct Session {
    SessionId session_id{};
    std::uint64_t opened_us = 0;
    std::string peer_client;
    std::string peer_server;
    std::vector<Packet> packets;

    bool operator==(const Session&) const = default;
};

enum class CaptureErrc {
    PayloadTooLarge,
    BadMagic,
    UnsupportedVersion,
    TruncatedRecord,
    SeqGap,
    BadRecord,
    TrailingBytes,
};

const char* capture_errc_name(CaptureErrc c);

class CaptureError : public std::runtime_error {
public:
    CaptureError(CaptureErrc code, std::size_t offset, const std::string& detail);

    CaptureErrc code() const { return code_; }
    /// First offending byte offset in the input (for decode errors).
    std::size_t offset() const { return offset_; }

private:
    CaptureErrc code_;
    std::size_t offset_;
};

/// Serialize a session to HYC1 bytes. Deterministic. Throws PayloadTooLarge.
Bytes encode_capture(const Session& session);

/// Parse HYC1 bytes. Total inverse of encode_capture on valid input; throws
/// CaptureError naming the first offending offset on anything else. Decoded
/// sessions carry empty peer strings (the format does not store them).
Session decode_capture(std::span<const std::uint8_t> data);

/// Concatenation, in seq order, of the payloads matching `direction`.
Bytes concat_raw(const Session& session, Direction direction);

/// NDJSON line for one packet, keys seq, ts_us, dir, payload_hex. No newline.
std::string packet_ndjson(const Packet& p);

void write_capture_file(const std::filesystem::path& path, const Session& session);
Session read_capture_file(const std::filesystem::path& path);

/// Thread-safe session assembly point: one shared seq counter across both
/// directions, single-writer semantics behind a lock. finish() orders the
/// packets by seq and checks the gap-free invariant.
class SessionBuilder {
public:
    SessionBuilder(SessionId id, std::uint64_t opened_us,
                   std::string peer_client = {}, std::string peer_server = {});

    /// Appends a packet with the next seq; returns the seq it got.
    std::uint64_t append(Direction direction, std::span<const std::uint8_t> payload,
                         std::uint64_t timestamp_us);

    /// Adds a packet that already carries a seq (rebuild/merge path).
    void add(Packet packet);

    Session finish();

private:
    std::mutex mu_;
    Session session_;
    std::uint64_t next_seq_ = 0;
};

/// Incremental HYC1 writer: records stream to disk as they arrive, the
/// header's record count is patched in on finalize(). abort() unlinks the
/// partial file. Not thread-safe; callers serialize appends.
class CaptureFileWriter {
public:
    CaptureFileWriter(const std::filesystem::path& path, const SessionId& id,
                      std::uint64_t opened_us);
    ~CaptureFileWriter();

    CaptureFileWriter(const CaptureFileWriter&) = delete;
    CaptureFileWriter& operator=(const CaptureFileWriter&) = delete;

    void append(const Packet& packet);
    void finalize();
    void abort();

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    int fd_ = -1;
    std::uint32_t record_count_ = 0;
    bool done_ = false;
};

}  // namespace hyc

#endif
