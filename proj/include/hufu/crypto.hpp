#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace hufu {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(const std::uint8_t* data, std::size_t len);
Digest sha256(const std::vector<std::uint8_t>& data);

/// HMAC-SHA256 per RFC 2104 (block size 64; long keys are hashed first).
Digest hmac_sha256(const std::uint8_t* key, std::size_t key_len,
                   const std::uint8_t* msg, std::size_t msg_len);

std::string hex_encode(const std::uint8_t* data, std::size_t len);
std::string hex_encode(const Digest& d);
std::vector<std::uint8_t> hex_decode(const std::string& hex);

} // namespace hufu
