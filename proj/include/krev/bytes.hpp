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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace krev {

using Bytes = std::vector<uint8_t>;
using ByteView = std::span<const uint8_t>;

std::string to_hex(ByteView data);

// Throws DecodeError on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

/// A string of bits in Keccak order: bit i lives in byte i/8 at position i%8
/// (least significant first). Unused high bits of the last byte are zero.
class BitString {
  public:
    BitString() = default;
    explicit BitString(ByteView bytes) : bytes_(bytes.begin(), bytes.end()), bits_(bytes.size() * 8) {}
    BitString(ByteView bytes, size_t bits);

    static BitString zeros(size_t bits);

    size_t size() const { return bits_; }
    bool empty() const { return bits_ == 0; }
    bool bit(size_t i) const { return (bytes_[i / 8] >> (i % 8)) & 1u; }
    void set(size_t i, bool v);
    void flip(size_t i) { bytes_[i / 8] ^= uint8_t(1u << (i % 8)); }
    void push_back(bool v);
    void append(const BitString& other);

    // First `bits` bits; bits must not exceed size().
    BitString prefix(size_t bits) const;
    BitString slice(size_t offset, size_t bits) const;

    const Bytes& bytes() const { return bytes_; }

    bool operator==(const BitString&) const = default;

  private:
    Bytes bytes_;
    size_t bits_ = 0;
};

}  // namespace krev
