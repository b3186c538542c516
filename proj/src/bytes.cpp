#include "hyc/bytes.hpp"

#include <stdexcept>

namespace hyc {

static const char* kHexDigits = "0123456789abcdef";

std::string to_hex(std::span<const std::uint8_t> data) {
    std::string out;
    out.reserve(data.size() * 2);
    for (std::uint8_t b : data) {
        out.push_back(kHexDigits[b >> 4]);
        out.push_back(kHexDigits[b & 0x0f]);
    }
    return out;
}

static int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0)
        throw std::invalid_argument("from_hex: odd number of digits");
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        int hi = hex_nibble(hex[i]);
        int lo = hex_nibble(hex[i + 1]);
        if (hi < 0 || lo < 0)
            throw std::invalid_argument("from_hex: non-hex character at position " +
                                        std::to_string(i));
        out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
    }
    return out;
}

bool all_printable(std::span<const std::uint8_t> data) {
    for (std::uint8_t b : data)
        if (b < 0x21 || b > 0x7e) return false;
    return true;
}

}  // namespace hyc
