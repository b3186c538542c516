#include "hyc/capture.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <random>

namespace hyc {

namespace {

constexpr std::uint8_t kMagic[4] = {0x48, 0x59, 0x43, 0x31};  // "HYC1"
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kHeaderLen = 4 + 2 + 16 + 8 + 4;
constexpr std::size_t kRecordHeadLen = 8 + 8 + 1 + 4;

void put_u16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(Bytes& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8)
        out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void put_u64(Bytes& out, std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8)
        out.push_back(static_cast<std::uint8_t>(v >> shift));
}

// Bounds-checked big-endian reader over arbitrary input.
struct Reader {
    std::span<const std::uint8_t> data;
    std::size_t pos = 0;

    std::size_t remaining() const { return data.size() - pos; }

    void need(std::size_t n) {
        if (remaining() < n)
            throw CaptureError(CaptureErrc::TruncatedRecord, pos,
                               "input ends before " + std::to_string(n) +
                                   " required bytes");
    }

    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(data[pos] << 8 | data[pos + 1]);
        pos += 2;
        return v;
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = v << 8 | data[pos + i];
        pos += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v = v << 8 | data[pos + i];
        pos += 8;
        return v;
    }

    std::uint8_t u8() {
        need(1);
        return data[pos++];
    }
};

void encode_header(Bytes& out, const SessionId& id, std::uint64_t opened_us,
                   std::uint32_t record_count) {
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_u16(out, kVersion);
    out.insert(out.end(), id.begin(), id.end());
    put_u64(out, opened_us);
    put_u32(out, record_count);
}

void encode_record(Bytes& out, const Packet& p) {
    if (p.payload.empty() || p.payload.size() > kMaxPayloadLen)
        throw CaptureError(CaptureErrc::PayloadTooLarge, 0,
                           "packet seq " + std::to_string(p.seq) + " payload of " +
                               std::to_string(p.payload.size()) + " bytes");
    put_u64(out, p.seq);
    put_u64(out, p.timestamp_us);
    out.push_back(static_cast<std::uint8_t>(p.direction));
    put_u32(out, static_cast<std::uint32_t>(p.payload.size()));
    out.insert(out.end(), p.payload.begin(), p.payload.end());
}

}  // namespace

std::string session_id_hex(const SessionId& id) {
    return to_hex(std::span<const std::uint8_t>(id.data(), id.size()));
}

SessionId random_session_id() {
    static std::mutex mu;
    static std::mt19937_64 rng(std::random_device{}());
    std::lock_guard lock(mu);
    SessionId id;
    for (std::size_t i = 0; i < id.size(); i += 8) {
        std::uint64_t v = rng();
        for (std::size_t j = 0; j < 8; ++j)
            id[i + j] = static_cast<std::uint8_t>(v >> (8 * j));
    }
    return id;
}

const char* capture_errc_name(CaptureErrc c) {
    switch (c) {
        case CaptureErrc::PayloadTooLarge: return "PayloadTooLarge";
        case CaptureErrc::BadMagic: return "BadMagic";
        case CaptureErrc::UnsupportedVersion: return "UnsupportedVersion";
        case CaptureErrc::TruncatedRecord: return "TruncatedRecord";
        case CaptureErrc::SeqGap: return "SeqGap";
        case CaptureErrc::BadRecord: return "BadRecord";
        case CaptureErrc::TrailingBytes: return "TrailingBytes";
    }
    return "?";
}

CaptureError::CaptureError(CaptureErrc code, std::size_t offset, const std::string& detail)
    : std::runtime_error(std::string(capture_errc_name(code)) + " at offset " +
                         std::to_string(offset) + ": " + detail),
      code_(code),
      offset_(offset) {}

Bytes encode_capture(const Session& session) {
    if (session.packets.size() > 0xffffffffu)
        throw CaptureError(CaptureErrc::BadRecord, 0, "too many records");
    Bytes out;
    std::size_t total = kHeaderLen;
    for (const Packet& p : session.packets) total += kRecordHeadLen + p.payload.size();
    out.reserve(total);
    encode_header(out, session.session_id, session.opened_us,
                  static_cast<std::uint32_t>(session.packets.size()));
    for (const Packet& p : session.packets) encode_record(out, p);
    return out;
}

Session decode_capture(std::span<const std::uint8_t> data) {
    Reader r{data};
    if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0)
        throw CaptureError(CaptureErrc::BadMagic, 0, "expected HYC1");
    r.pos = 4;
    std::size_t version_off = r.pos;
    std::uint16_t version = r.u16();
    if (version != kVersion)
        throw CaptureError(CaptureErrc::UnsupportedVersion, version_off,
                           "version " + std::to_string(version));

    Session s;
    r.need(16);
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(r.pos), 16,
                s.session_id.begin());
    r.pos += 16;
    s.opened_us = r.u64();
    std::uint32_t count = r.u32();

    s.packets.reserve(std::min<std::size_t>(count, 4096));
    for (std::uint32_t i = 0; i < count; ++i) {
        std::size_t record_off = r.pos;
        Packet p;
        p.seq = r.u64();
        if (p.seq != i)
            throw CaptureError(CaptureErrc::SeqGap, record_off,
                               "record " + std::to_string(i) + " carries seq " +
                                   std::to_string(p.seq));
        p.timestamp_us = r.u64();
        std::size_t dir_off = r.pos;
        std::uint8_t dir = r.u8();
        if (dir > 1)
            throw CaptureError(CaptureErrc::BadRecord, dir_off,
                               "direction byte " + std::to_string(dir));
        p.direction = static_cast<Direction>(dir);
        std::size_t len_off = r.pos;
        std::uint32_t len = r.u32();
        if (len == 0 || len > kMaxPayloadLen)
            throw CaptureError(CaptureErrc::BadRecord, len_off,
                               "payload length " + std::to_string(len));
        r.need(len);
        p.payload.assign(data.begin() + static_cast<std::ptrdiff_t>(r.pos),
                         data.begin() + static_cast<std::ptrdiff_t>(r.pos + len));
        r.pos += len;
        s.packets.push_back(std::move(p));
    }
    if (r.remaining() != 0)
        throw CaptureError(CaptureErrc::TrailingBytes, r.pos,
                           std::to_string(r.remaining()) + " bytes after last record");
    return s;
}

Bytes concat_raw(const Session& session, Direction direction) {
    Bytes out;
    std::size_t total = 0;
    for (const Packet& p : session.packets)
        if (p.direction == direction) total += p.payload.size();
    out.reserve(total);
    for (const Packet& p : session.packets)
        if (p.direction == direction)
            out.insert(out.end(), p.payload.begin(), p.payload.end());
    return out;
}

std::string packet_ndjson(const Packet& p) {
    std::string line = "{\"seq\":" + std::to_string(p.seq);
    line += ",\"ts_us\":" + std::to_string(p.timestamp_us);
    line += ",\"dir\":\"";
    line += direction_tag(p.direction);
    line += "\",\"payload_hex\":\"" + to_hex(p.payload) + "\"}";
    return line;
}

void write_capture_file(const std::filesystem::path& path, const Session& session) {
    Bytes encoded = encode_capture(session);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(encoded.data()),
            static_cast<std::streamsize>(encoded.size()));
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

Session read_capture_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    Bytes data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_capture(data);
}

SessionBuilder::SessionBuilder(SessionId id, std::uint64_t opened_us,
                               std::string peer_client, std::string peer_server) {
    session_.session_id = id;
    session_.opened_us = opened_us;
    session_.peer_client = std::move(peer_client);
    session_.peer_server = std::move(peer_server);
}

std::uint64_t SessionBuilder::append(Direction direction,
                                     std::span<const std::uint8_t> payload,
                                     std::uint64_t timestamp_us) {
    std::lock_guard lock(mu_);
    Packet p;
    p.seq = next_seq_++;
    p.timestamp_us = timestamp_us;
    p.direction = direction;
    p.payload.assign(payload.begin(), payload.end());
    session_.packets.push_back(std::move(p));
    return session_.packets.back().seq;
}

void SessionBuilder::add(Packet packet) {
    std::lock_guard lock(mu_);
    next_seq_ = std::max(next_seq_, packet.seq + 1);
    session_.packets.push_back(std::move(packet));
}

Session SessionBuilder::finish() {
    std::lock_guard lock(mu_);
    std::sort(session_.packets.begin(), session_.packets.end(),
              [](const Packet& a, const Packet& b) { return a.seq < b.seq; });
    for (std::size_t i = 0; i < session_.packets.size(); ++i)
        if (session_.packets[i].seq != i)
            throw CaptureError(CaptureErrc::SeqGap, i,
                               "packet " + std::to_string(i) + " carries seq " +
                                   std::to_string(session_.packets[i].seq));
    return std::move(session_);
}

CaptureFileWriter::CaptureFileWriter(const std::filesystem::path& path,
                                     const SessionId& id, std::uint64_t opened_us)
    : path_(path) {
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd_ < 0)
        throw std::runtime_error("cannot open " + path.string() + ": " +
                                 std::strerror(errno));
    Bytes header;
    encode_header(header, id, opened_us, 0);
    if (::write(fd_, header.data(), header.size()) !=
        static_cast<ssize_t>(header.size())) {
        int err = errno;
        ::close(fd_);
        fd_ = -1;
        ::unlink(path.c_str());
        throw std::runtime_error("write failed on " + path.string() + ": " +
                                 std::strerror(err));
    }
}

CaptureFileWriter::~CaptureFileWriter() {
    if (!done_) {
        if (fd_ >= 0) ::close(fd_);
        ::unlink(path_.c_str());
    }
}

void CaptureFileWriter::append(const Packet& packet) {
    Bytes record;
    encode_record(record, packet);
    if (::write(fd_, record.data(), record.size()) !=
        static_cast<ssize_t>(record.size()))
        throw std::runtime_error("write failed on " + path_.string() + ": " +
                                 std::strerror(errno));
    ++record_count_;
}

void CaptureFileWriter::finalize() {
    // record_count lives in the last 4 header bytes.
    Bytes count;
    put_u32(count, record_count_);
    if (::pwrite(fd_, count.data(), 4, static_cast<off_t>(kHeaderLen - 4)) != 4)
        throw std::runtime_error("header patch failed on " + path_.string());
    ::close(fd_);
    fd_ = -1;
    done_ = true;
}

void CaptureFileWriter::abort() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    ::unlink(path_.c_str());
    done_ = true;
}

}  // namespace hyc
