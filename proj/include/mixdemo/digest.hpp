#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace mixdemo {

// Lowercase hex SHA-256 of the bytes of `data`.
std::string sha256_hex(std::string_view data);

// Stable 64-bit hashing used wherever results must not depend on the
// standard library's std::hash.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t mix64(std::uint64_t x);

}  // namespace mixdemo
