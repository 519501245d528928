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

#include "krev/keccak.hpp"

#include <algorithm>
#include <bit>
#include <stdexcept>

#include "krev/error.hpp"

namespace krev::keccak {

namespace {

// Low 32 bits of the first 22 Keccak round constants.
constexpr std::array<uint32_t, kRounds> kRoundConstants = {
    0x00000001, 0x00008082, 0x0000808A, 0x80008000, 0x0000808B, 0x80000001,
    0x80008081, 0x00008009, 0x0000008A, 0x00000088, 0x80008009, 0x8000000A,
    0x8000808B, 0x0000008B, 0x00008089, 0x00008003, 0x00008002, 0x00000080,
    0x0000800A, 0x8000000A, 0x80008081, 0x00008080,
};

// rho offsets indexed x + 5*y, reduced mod 32.
constexpr std::array<unsigned, 25> kRho = [] {
    constexpr std::array<unsigned, 25> full = {
        0,  1,  62, 28, 27,  //
        36, 44, 6,  55, 20,  //
        3,  10, 43, 25, 39,  //
        41, 45, 15, 21, 8,   //
        18, 2,  61, 56, 14,
    };
    std::array<unsigned, 25> out{};
    for (size_t i = 0; i < 25; ++i) out[i] = full[i] % kLaneBits;
    return out;
}();

}  // namespace

LaneMatrix LaneMatrix::from_bytes(std::span<const uint8_t, kStateBytes> bytes) {
    LaneMatrix m;
    for (size_t i = 0; i < 25; ++i) {
        m.lanes[i] = uint32_t(bytes[4 * i]) | (uint32_t(bytes[4 * i + 1]) << 8) |
                     (uint32_t(bytes[4 * i + 2]) << 16) | (uint32_t(bytes[4 * i + 3]) << 24);
    }
    return m;
}

std::array<uint8_t, kStateBytes> LaneMatrix::to_bytes() const {
    std::array<uint8_t, kStateBytes> out{};
    for (size_t i = 0; i < 25; ++i) {
        for (size_t j = 0; j < 4; ++j) out[4 * i + j] = uint8_t(lanes[i] >> (8 * j));
    }
    return out;
}

void permute_round(LaneMatrix& s, unsigned round) {
    auto& a = s.lanes;

    // theta
    std::array<uint32_t, 5> c{};
    for (unsigned x = 0; x < 5; ++x) c[x] = a[x] ^ a[x + 5] ^ a[x + 10] ^ a[x + 15] ^ a[x + 20];
    for (unsigned x = 0; x < 5; ++x) {
        const uint32_t d = c[(x + 4) % 5] ^ std::rotl(c[(x + 1) % 5], 1);
        for (unsigned y = 0; y < 5; ++y) a[x + 5 * y] ^= d;
    }

    // rho and pi: B[y, 2x+3y] = rot(A[x, y], r[x, y])
    std::array<uint32_t, 25> b{};
    for (unsigned x = 0; x < 5; ++x) {
        for (unsigned y = 0; y < 5; ++y) {
            b[y + 5 * ((2 * x + 3 * y) % 5)] = std::rotl(a[x + 5 * y], int(kRho[x + 5 * y]));
        }
    }

    // chi
    for (unsigned y = 0; y < 5; ++y) {
        for (unsigned x = 0; x < 5; ++x) {
            a[x + 5 * y] = b[x + 5 * y] ^ (~b[(x + 1) % 5 + 5 * y] & b[(x + 2) % 5 + 5 * y]);
        }
    }

    // iota
    a[0] ^= kRoundConstants[round];
}

void permute_in_place(LaneMatrix& state) {
    for (unsigned round = 0; round < kRounds; ++round) permute_round(state, round);
}

std::vector<BitString> pad(const BitString& message, unsigned rate_bits) {
    if (rate_bits < 2) throw std::invalid_argument("rate must be at least 2 bits");
    BitString padded = message;
    padded.push_back(true);
    while ((padded.size() + 1) % rate_bits != 0) padded.push_back(false);
    padded.push_back(true);

    std::vector<BitString> blocks;
    for (size_t off = 0; off < padded.size(); off += rate_bits) blocks.push_back(padded.slice(off, rate_bits));
    return blocks;
}

BitString unpad(std::span<const BitString> blocks) {
    BitString all;
    for (const auto& b : blocks) all.append(b);
    if (all.size() < 2 || !all.bit(all.size() - 1)) throw DecodeError("missing final pad bit");
    size_t i = all.size() - 1;
    while (i > 0 && !all.bit(i - 1)) --i;
    if (i == 0) throw DecodeError("missing initial pad bit");
    return all.prefix(i - 1);
}

Digest Digest::from_bytes(ByteView data) {
    if (data.size() != kDigestBytes) throw DecodeError("digest must be 28 bytes");
    Digest d;
    std::copy(data.begin(), data.end(), d.bytes.begin());
    return d;
}

DuplexState duplex_init(unsigned output_bits) {
    if (output_bits == 0 || output_bits >= kRateBits) throw std::invalid_argument("duplex output must satisfy 0 < l < r");
    DuplexState st;
    st.output_bits = output_bits;
    return st;
}

namespace detail {

void xor_rate_block(LaneMatrix& state, std::span<const uint8_t, kRateBytes> block) {
    for (unsigned i = 0; i < kRateBytes / 4; ++i) {
        state.lanes[i] ^= uint32_t(block[4 * i]) | (uint32_t(block[4 * i + 1]) << 8) |
                          (uint32_t(block[4 * i + 2]) << 16) | (uint32_t(block[4 * i + 3]) << 24);
    }
}

}  // namespace detail

namespace {

void squeeze_rate(const LaneMatrix& state, unsigned bits, std::span<uint8_t> out) {
    const unsigned nbytes = (bits + 7) / 8;
    for (unsigned i = 0; i < nbytes; ++i) out[i] = uint8_t(state.lanes[i / 4] >> (8 * (i % 4)));
    if (bits % 8 != 0) out[nbytes - 1] &= uint8_t((1u << (bits % 8)) - 1);
}

}  // namespace

DuplexResult duplexing(const DuplexState& state, const BitString& input) {
    if (input.size() > kMaxDuplexInputBits) throw InputTooLong("duplexing input exceeds r-2 bits");
    auto blocks = pad(input, state.rate_bits);
    std::array<uint8_t, kRateBytes> block{};
    std::copy(blocks.front().bytes().begin(), blocks.front().bytes().end(), block.begin());

    DuplexResult res{state, {}};
    detail::xor_rate_block(res.state.state, block);
    permute_in_place(res.state.state);
    ++res.state.call_count;

    std::array<uint8_t, kRateBytes> out{};
    squeeze_rate(res.state.state, state.output_bits, out);
    res.output = BitString(out, state.output_bits);
    return res;
}

void duplex_bytes(DuplexState& state, ByteView input, std::span<uint8_t> out) {
    if (input.size() > kChunkBytes) throw InputTooLong("duplexing input exceeds r-2 bits");
    std::array<uint8_t, kRateBytes> block{};
    std::copy(input.begin(), input.end(), block.begin());
    block[input.size()] ^= 0x01;
    block[kRateBytes - 1] ^= 0x80;
    detail::xor_rate_block(state.state, block);
    permute_in_place(state.state);
    ++state.call_count;
    squeeze_rate(state.state, state.output_bits, out);
}

Digest hash(ByteView message) {
    DuplexState st = duplex_init();
    std::array<uint8_t, kRateBytes> out{};
    size_t off = 0;
    do {
        const size_t take = std::min<size_t>(kChunkBytes, message.size() - off);
        duplex_bytes(st, message.subspan(off, take), out);
        off += take;
    } while (off < message.size());

    // output_bits == kDigestBits here, so the last call covers the digest.
    Digest d;
    std::copy_n(out.begin(), kDigestBytes, d.bytes.begin());
    return d;
}

}  // namespace krev::keccak
