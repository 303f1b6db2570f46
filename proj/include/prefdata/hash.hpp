#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

#include "prefdata/types.hpp"

namespace prefdata {

// Lowercase hex SHA-256 of the input bytes.
std::string sha256_hex(std::string_view data);

// First 8 bytes of SHA-256 over the parts joined by a unit separator (0x1f),
// read big-endian. Stable across platforms and runs.
std::uint64_t stable_hash64(std::initializer_list<std::string_view> parts);

// stable_hash64 mapped to [0, 1) with 53 bits of resolution.
double hash_fraction(std::initializer_list<std::string_view> parts);

std::string to_hex16(std::uint64_t value);

// Content-derived id: hash(prompt_id, origin, sample_index, text) truncated to
// 16 hex characters, so reruns of the same generation get the same id.
std::string make_response_id(std::string_view prompt_id, Origin origin, int sample_index, std::string_view text);

// 16-hex key for a piece of text, used for embedding cache entries.
std::string text_key(std::string_view text);

// Derive an independent 64-bit seed from a base seed and a stream index.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace prefdata
