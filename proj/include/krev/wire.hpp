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

#include <algorithm>
#include <cstdint>
#include <string_view>

#include "krev/bytes.hpp"
#include "krev/error.hpp"

namespace krev {

// Big-endian writer shared by all wire formats.
class ByteWriter {
  public:
    void u8(uint8_t v) { out_.push_back(v); }
    void u16(uint16_t v) { put(v, 2); }
    void u32(uint32_t v) { put(v, 4); }
    void u64(uint64_t v) { put(v, 8); }
    void raw(ByteView data) { out_.insert(out_.end(), data.begin(), data.end()); }
    void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

    size_t size() const { return out_.size(); }
    Bytes take() { return std::move(out_); }
    const Bytes& view() const { return out_; }

  private:
    void put(uint64_t v, int width) {
        for (int i = width - 1; i >= 0; --i) out_.push_back(uint8_t(v >> (8 * i)));
    }

    Bytes out_;
};

// Big-endian reader; every short read throws DecodeError.
class ByteReader {
  public:
    explicit ByteReader(ByteView data) : data_(data) {}

    uint8_t u8() { return uint8_t(get(1)); }
    uint16_t u16() { return uint16_t(get(2)); }
    uint32_t u32() { return uint32_t(get(4)); }
    uint64_t u64() { return get(8); }

    ByteView raw(size_t n) {
        need(n);
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    void expect(std::string_view magic) {
        auto got = raw(magic.size());
        if (!std::equal(got.begin(), got.end(), magic.begin())) throw DecodeError("bad magic");
    }

    size_t remaining() const { return data_.size() - pos_; }
    size_t position() const { return pos_; }

    void finish() const {
        if (remaining() != 0) throw DecodeError("trailing bytes");
    }

  private:
    void need(size_t n) const {
        if (remaining() < n) throw DecodeError("truncated input");
    }

    uint64_t get(int width) {
        need(size_t(width));
        uint64_t v = 0;
        for (int i = 0; i < width; ++i) v = (v << 8) | data_[pos_++];
        return v;
    }

    ByteView data_;
    size_t pos_ = 0;
};

}  // namespace krev
