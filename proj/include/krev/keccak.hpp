/*
   Copyright 2026 The krev Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "krev/bytes.hpp"

/// Keccak-f[800] (25 lanes of 32 bits), pad10*1 and the duplex construction
/// used as the hash function of the revocation tree.
///
/// State bytes follow the Keccak reference convention: lane (x, y) occupies
/// bytes 4*(x + 5*y) .. 4*(x + 5*y) + 3, little-endian.
namespace krev::keccak {

inline constexpr unsigned kLaneBits = 32;
inline constexpr unsigned kStateBits = 800;
inline constexpr unsigned kStateBytes = kStateBits / 8;
// Keccak-f[b] has 12 + 2*log2(w) rounds; w = 32 gives 22.
inline constexpr unsigned kRounds = 22;
inline constexpr unsigned kRateBits = 352;
inline constexpr unsigned kRateBytes = kRateBits / 8;
inline constexpr unsigned kCapacityBits = kStateBits - kRateBits;
inline constexpr unsigned kDigestBits = 224;
inline constexpr unsigned kDigestBytes = kDigestBits / 8;
// Longest input a single duplexing call accepts (pad10*1 needs two bits).
inline constexpr unsigned kMaxDuplexInputBits = kRateBits - 2;
// hash() feeds byte-aligned chunks of this size.
inline constexpr unsigned kChunkBytes = kMaxDuplexInputBits / 8;

static_assert(kRateBits + kCapacityBits == kStateBits);
static_assert(kCapacityBits == 2 * kDigestBits);

struct LaneMatrix {
    std::array<uint32_t, 25> lanes{};

    uint32_t& at(unsigned x, unsigned y) { return lanes[x + 5 * y]; }
    uint32_t at(unsigned x, unsigned y) const { return lanes[x + 5 * y]; }

    static LaneMatrix from_bytes(std::span<const uint8_t, kStateBytes> bytes);
    std::array<uint8_t, kStateBytes> to_bytes() const;

    bool operator==(const LaneMatrix&) const = default;
};

/// One round of the permutation, exposed for round-by-round tracing.
void permute_round(LaneMatrix& state, unsigned round);

void permute_in_place(LaneMatrix& state);

inline LaneMatrix keccak_f800(LaneMatrix state) {
    permute_in_place(state);
    return state;
}

/// Multi-rate padding pad10*1: returns message || 1 || 0* || 1 split into
/// `rate_bits`-long blocks.
std::vector<BitString> pad(const BitString& message, unsigned rate_bits = kRateBits);

// Inverse of pad(); throws DecodeError if the blocks are not a valid padding.
BitString unpad(std::span<const BitString> blocks);

struct Digest {
    std::array<uint8_t, kDigestBytes> bytes{};

    std::string hex() const { return to_hex(bytes); }
    static Digest from_bytes(ByteView data);

    auto operator<=>(const Digest&) const = default;
};

struct DuplexState {
    LaneMatrix state;
    unsigned rate_bits = kRateBits;
    unsigned capacity_bits = kCapacityBits;
    unsigned output_bits = kDigestBits;
    uint64_t call_count = 0;

    bool operator==(const DuplexState&) const = default;
};

// Throws std::invalid_argument unless output_bits < rate.
DuplexState duplex_init(unsigned output_bits = kDigestBits);

struct DuplexResult {
    DuplexState state;
    BitString output;
};

/// One duplexing call: pad the input into a single rate block, XOR it into
/// the outer part of the state, permute, and return the first output_bits
/// bits of the rate. Throws InputTooLong above kMaxDuplexInputBits.
DuplexResult duplexing(const DuplexState& state, const BitString& input);

// In-place duplexing call for byte-aligned input (at most kChunkBytes bytes).
// Writes ceil(output_bits/8) bytes to `out`, with unused high bits of the
// final byte cleared.
void duplex_bytes(DuplexState& state, ByteView input, std::span<uint8_t> out);

/// The 224-bit tree hash h.
///
/// The message is cut into kChunkBytes-byte chunks (one empty chunk for an
/// empty message) that are fed through successive duplexing calls on a
/// fresh state with l = 224. The digest is the output of the last call, so
/// every chunk influences it.
Digest hash(ByteView message);

namespace detail {
// XOR an already padded rate block into the state (no permutation).
void xor_rate_block(LaneMatrix& state, std::span<const uint8_t, kRateBytes> block);
}  // namespace detail

}  // namespace krev::keccak
