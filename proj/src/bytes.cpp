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

#include "krev/bytes.hpp"

#include <cassert>

#include "krev/error.hpp"

namespace krev {

std::string to_hex(ByteView data) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (uint8_t b : data) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0x0f]);
    }
    return out;
}

namespace {

int nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

Bytes from_hex(std::string_view hex) {
    if (hex.starts_with("0x") || hex.starts_with("0X")) hex.remove_prefix(2);
    if (hex.size() % 2 != 0) throw DecodeError("hex string has odd length");
    Bytes out(hex.size() / 2);
    for (size_t i = 0; i < out.size(); ++i) {
        int hi = nibble(hex[2 * i]);
        int lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw DecodeError("invalid hex digit");
        out[i] = uint8_t((hi << 4) | lo);
    }
    return out;
}

BitString::BitString(ByteView bytes, size_t bits) : bytes_((bits + 7) / 8), bits_(bits) {
    assert(bits <= bytes.size() * 8);
    for (size_t i = 0; i < bytes_.size(); ++i) bytes_[i] = bytes[i];
    if (bits % 8 != 0) bytes_.back() &= uint8_t((1u << (bits % 8)) - 1);
}

BitString BitString::zeros(size_t bits) {
    BitString out;
    out.bytes_.assign((bits + 7) / 8, 0);
    out.bits_ = bits;
    return out;
}

void BitString::set(size_t i, bool v) {
    const auto mask = uint8_t(1u << (i % 8));
    if (v)
        bytes_[i / 8] |= mask;
    else
        bytes_[i / 8] &= uint8_t(~mask);
}

void BitString::push_back(bool v) {
    if (bits_ % 8 == 0) bytes_.push_back(0);
    ++bits_;
    set(bits_ - 1, v);
}

void BitString::append(const BitString& other) {
    if (bits_ % 8 == 0) {
        bytes_.insert(bytes_.end(), other.bytes_.begin(), other.bytes_.end());
        bits_ += other.bits_;
        return;
    }
    for (size_t i = 0; i < other.size(); ++i) push_back(other.bit(i));
}

BitString BitString::prefix(size_t bits) const {
    assert(bits <= bits_);
    return BitString(bytes_, bits);
}

BitString BitString::slice(size_t offset, size_t bits) const {
    assert(offset + bits <= bits_);
    if (offset % 8 == 0) return BitString(ByteView(bytes_).subspan(offset / 8), bits);
    BitString out = zeros(bits);
    for (size_t i = 0; i < bits; ++i) out.set(i, bit(offset + i));
    return out;
}

}  // namespace krev
