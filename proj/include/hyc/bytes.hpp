// Shared byte-buffer alias and hex helpers.

#ifndef HYC_BYTES_HPP
#define HYC_BYTES_HPP

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hyc {

using Bytes = std::vector<std::uint8_t>;

inline Bytes to_bytes(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

inline std::string to_string(std::span<const std::uint8_t> b) {
    return std::string(b.begin(), b.end());
}

/// Lowercase hex, two digits per byte, no separators.
std::string to_hex(std::span<const std::uint8_t> data);

/// Inverse of to_hex. Accepts upper or lower case; throws std::invalid_argument
/// on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

/// True if every byte is in the visible ASCII range 0x21..0x7e.
bool all_printable(std::span<const std::uint8_t> data);

}  // namespace hyc

#endif
