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

#include "krev/tree.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "krev/error.hpp"
#include "krev/wire.hpp"

namespace krev::tree {

namespace {

constexpr char kTreeMagic[] = "KREV";
constexpr uint8_t kTreeFormatVersion = 1;

uint64_t ipow_saturating(uint64_t base, unsigned exp) {
    uint64_t out = 1;
    for (unsigned i = 0; i < exp; ++i) {
        if (out > std::numeric_limits<uint64_t>::max() / base) return std::numeric_limits<uint64_t>::max();
        out *= base;
    }
    return out;
}

bool block_bit(const Block& b, unsigned i) { return (b.bytes[i / 8] >> (i % 8)) & 1u; }

}  // namespace

TreePath TreePath::from_slot(uint64_t slot, unsigned k, unsigned depth) {
    TreePath p;
    p.digits.assign(depth, 0);
    for (unsigned i = depth; i > 0; --i) {
        p.digits[i - 1] = uint8_t(slot % k);
        slot /= k;
    }
    return p;
}

uint64_t TreePath::to_slot(unsigned k) const {
    uint64_t slot = 0;
    for (uint8_t d : digits) slot = slot * k + d;
    return slot;
}

unsigned truncation_bits(unsigned n_bits, unsigned m, unsigned index) {
    return n_bits / m + (index < n_bits % m ? 1u : 0u);
}

Digest parent_digest(std::span<const Block> child_outputs, unsigned l_bits) {
    const auto m = unsigned(child_outputs.size());
    if (m == 0) throw EmptyChildren("parent digest needs at least one child");
    if (truncation_bits(keccak::kDigestBits, m, 0) > l_bits) throw BadBlockLength("output blocks shorter than the truncation");

    Digest out;
    unsigned pos = 0;
    for (unsigned j = 0; j < m; ++j) {
        const unsigned take = truncation_bits(keccak::kDigestBits, m, j);
        const Block& b = child_outputs[j];
        if (pos % 8 == 0 && take % 8 == 0) {
            std::copy_n(b.bytes.begin(), take / 8, out.bytes.begin() + pos / 8);
            pos += take;
            continue;
        }
        for (unsigned i = 0; i < take; ++i, ++pos) {
            if (block_bit(b, i)) out.bytes[pos / 8] |= uint8_t(1u << (pos % 8));
        }
    }
    return out;
}

Digest parent_digest(std::span<const BitString> child_outputs, unsigned l_bits) {
    if (child_outputs.empty()) throw EmptyChildren("parent digest needs at least one child");
    if (l_bits >= keccak::kRateBits) throw BadBlockLength("output blocks must be shorter than the rate");
    std::vector<Block> blocks(child_outputs.size());
    for (size_t j = 0; j < child_outputs.size(); ++j) {
        if (child_outputs[j].size() != l_bits) throw BadBlockLength("child output block has the wrong length");
        std::copy(child_outputs[j].bytes().begin(), child_outputs[j].bytes().end(), blocks[j].bytes.begin());
    }
    return parent_digest(std::span<const Block>(blocks), l_bits);
}

Digest fold_children(std::span<const Digest> children, unsigned l_bits) {
    keccak::DuplexState st = keccak::duplex_init(l_bits);
    std::vector<Block> blocks(children.size());
    for (size_t j = 0; j < children.size(); ++j) keccak::duplex_bytes(st, children[j].bytes, blocks[j].bytes);
    return parent_digest(std::span<const Block>(blocks), l_bits);
}

Bytes encode_delta(const MutationReport& report) {
    ByteWriter w;
    w.u64(report.version);
    w.u32(uint32_t(report.changed.size()));
    for (const auto& c : report.changed) {
        w.u8(uint8_t(c.path.digits.size()));
        w.raw(c.path.digits);
        w.u8(uint8_t(c.kind));
        w.raw(c.digest.bytes);
    }
    return w.take();
}

MutationReport decode_delta(ByteView data) {
    ByteReader r(data);
    MutationReport rep;
    rep.version = r.u64();
    const uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
        ChangedNode c;
        auto digits = r.raw(r.u8());
        c.path.digits.assign(digits.begin(), digits.end());
        const uint8_t kind = r.u8();
        if (kind > 1) throw DecodeError("unknown node kind");
        c.kind = NodeKind(kind);
        c.digest = Digest::from_bytes(r.raw(keccak::kDigestBytes));
        rep.changed.push_back(std::move(c));
    }
    r.finish();
    return rep;
}

RevocationTree::RevocationTree(unsigned k, unsigned l_bits) : k_(k), l_bits_(l_bits) {
    if (k < 2 || k > kMaxK) throw std::invalid_argument("k must be in [2, 255]");
    if (l_bits < keccak::kDigestBits || l_bits >= keccak::kRateBits)
        throw std::invalid_argument("l must be in [n, r)");
    rebuild(1);
}

void RevocationTree::absorb_child(InternalNode& node, unsigned position, const Digest& child) const {
    keccak::DuplexState base;
    if (position == node.child_outputs.size()) {
        base = node.retained.value_or(keccak::duplex_init(l_bits_));
    } else {
        // Only the last child of a node on the rightmost path can change.
        base = node.last_child_base;
        node.child_outputs.pop_back();
    }
    node.last_child_base = base;
    Block block;
    keccak::duplex_bytes(base, child.bytes, block.bytes);
    node.child_outputs.push_back(block);
    if (node.child_outputs.size() < k_)
        node.retained = base;
    else
        node.retained.reset();
    node.digest = parent_digest(std::span<const Block>(node.child_outputs), l_bits_);
}

void RevocationTree::rebuild(unsigned depth) {
    depth_ = depth;
    levels_.assign(depth, {});
    uint64_t below = leaves_.size();
    for (unsigned h = 1; h <= depth; ++h) {
        const uint64_t nodes = h == depth ? 1 : (below + k_ - 1) / k_;
        auto& level = levels_[h - 1];
        level.resize(nodes);
        for (uint64_t j = 0; j < nodes; ++j) {
            InternalNode& node = level[j];
            node.retained = keccak::duplex_init(l_bits_);
            node.last_child_base = *node.retained;
            const uint64_t first = j * k_;
            const uint64_t count = below > first ? std::min<uint64_t>(k_, below - first) : 0;
            for (uint64_t c = 0; c < count; ++c) {
                const Digest& child = h == 1 ? leaves_[first + c].digest : levels_[h - 2][first + c].digest;
                absorb_child(node, unsigned(c), child);
            }
            if (count == 0) node.digest = keccak::hash({});
        }
        below = nodes;
    }
}

void RevocationTree::reindex() {
    index_.clear();
    for (uint64_t i = 0; i < leaves_.size(); ++i) index_.emplace(key(leaves_[i].serial.value), i);
}

const Digest& RevocationTree::node_digest(unsigned height, uint64_t index) const {
    return height == 0 ? leaves_.at(index).digest : internal(height, index).digest;
}

ChangedNode RevocationTree::describe(unsigned height, uint64_t index) const {
    ChangedNode c;
    c.height = height;
    c.index = index;
    c.path = TreePath::from_slot(index, k_, depth_ - height);
    c.kind = height == 0 ? NodeKind::leaf : NodeKind::internal;
    c.digest = node_digest(height, index);
    return c;
}

MutationReport RevocationTree::full_report() const {
    MutationReport rep;
    rep.version = version_;
    rep.reconstructed = true;
    for (unsigned h = depth_; h >= 1; --h) {
        for (uint64_t j = 0; j < levels_[h - 1].size(); ++j) rep.changed.push_back(describe(h, j));
    }
    for (uint64_t i = 0; i < leaves_.size(); ++i) rep.changed.push_back(describe(0, i));
    return rep;
}

MutationReport RevocationTree::insert(SerialNumber serial) {
    if (serial.value.empty()) throw std::invalid_argument("serial must be non-empty");
    if (serial.value.size() > std::numeric_limits<uint16_t>::max()) throw std::invalid_argument("serial too long");
    if (contains(serial.value)) throw DuplicateSerial("serial already revoked: " + to_hex(serial.value));

    const uint64_t slot = leaves_.size();
    const bool grow = slot == ipow_saturating(k_, depth_);
    if (grow) rebuild(depth_ + 1);

    Leaf leaf;
    leaf.digest = keccak::hash(serial.value);
    leaf.serial = std::move(serial);
    index_.emplace(key(leaf.serial.value), slot);
    leaves_.push_back(std::move(leaf));

    MutationReport rep;
    uint64_t child = slot;
    for (unsigned h = 1; h <= depth_; ++h) {
        const uint64_t parent = child / k_;
        auto& level = levels_[h - 1];
        if (parent == level.size()) {
            InternalNode fresh;
            fresh.retained = keccak::duplex_init(l_bits_);
            fresh.last_child_base = *fresh.retained;
            level.push_back(std::move(fresh));
        }
        absorb_child(level[parent], unsigned(child % k_), node_digest(h - 1, child));
        child = parent;
    }
    ++version_;

    if (grow) return full_report();
    rep.version = version_;
    rep.changed.push_back(describe(0, slot));
    child = slot;
    for (unsigned h = 1; h <= depth_; ++h) {
        child /= k_;
        rep.changed.push_back(describe(h, child));
    }
    return rep;
}

MutationReport RevocationTree::erase(ByteView serial) {
    auto it = index_.find(key(serial));
    if (it == index_.end()) throw UnknownSerial("serial not in tree: " + to_hex(serial));
    leaves_.erase(leaves_.begin() + std::ptrdiff_t(it->second));
    reindex();
    rebuild(min_depth(k_, leaves_.size()));
    ++version_;
    return full_report();
}

MutationReport RevocationTree::reconstruct() {
    const Digest before = root_digest();
    const unsigned depth_before = depth_;
    reindex();
    rebuild(min_depth(k_, leaves_.size()));
    if (root_digest() != before || depth_ != depth_before) ++version_;
    return full_report();
}

MutationReport RevocationTree::expire_sweep(uint64_t now) {
    MutationReport rep;
    rep.version = version_;

    bool sibling_set_expired = false;
    for (uint64_t first = 0; first < leaves_.size(); first += k_) {
        const uint64_t last = std::min<uint64_t>(first + k_, leaves_.size());
        bool all = true;
        for (uint64_t i = first; i < last && all; ++i) all = leaves_[i].serial.expiry < now;
        if (all) {
            sibling_set_expired = true;
            break;
        }
    }

    if (sibling_set_expired) {
        std::erase_if(leaves_, [now](const Leaf& l) { return l.serial.expiry < now; });
        reindex();
        rebuild(min_depth(k_, leaves_.size()));
        ++version_;
        return full_report();
    }

    for (auto& leaf : leaves_) {
        if (leaf.serial.expiry < now && !leaf.tombstoned) {
            leaf.tombstoned = true;
            rep.tombstoned.push_back(leaf.serial.value);
        }
    }
    return rep;
}

bool RevocationTree::is_live(ByteView serial) const {
    auto it = index_.find(key(serial));
    return it != index_.end() && !leaves_[it->second].tombstoned;
}

const Leaf* RevocationTree::find(ByteView serial) const {
    auto it = index_.find(key(serial));
    return it == index_.end() ? nullptr : &leaves_[it->second];
}

std::optional<TreePath> RevocationTree::path_of(ByteView serial) const {
    auto it = index_.find(key(serial));
    if (it == index_.end()) return std::nullopt;
    return TreePath::from_slot(it->second, k_, depth_);
}

std::optional<PathBundle> RevocationTree::search(ByteView serial) const {
    auto it = index_.find(key(serial));
    if (it == index_.end()) return std::nullopt;
    const uint64_t slot = it->second;

    PathBundle b;
    b.root = root_digest();
    b.path = TreePath::from_slot(slot, k_, depth_);
    for (unsigned h = depth_; h >= 1; --h) {
        const uint64_t parent = slot / ipow_saturating(k_, h);
        const uint64_t first = parent * k_;
        const uint64_t count = std::min<uint64_t>(k_, level_width(h - 1) - first);
        BundleLevel level;
        for (uint64_t c = 0; c < count; ++c) {
            level.positions.push_back(uint8_t(c));
            level.digests.push_back(node_digest(h - 1, first + c));
        }
        b.levels.push_back(std::move(level));
    }
    return b;
}

Bytes RevocationTree::serialize() const {
    ByteWriter w;
    w.raw(std::string_view(kTreeMagic, 4));
    w.u8(kTreeFormatVersion);
    w.u16(uint16_t(k_));
    w.u16(uint16_t(depth_));
    w.u16(uint16_t(n_bits()));
    w.u16(uint16_t(l_bits_));
    w.u64(leaves_.size());
    w.u64(version_);
    for (const auto& leaf : leaves_) {
        w.u16(uint16_t(leaf.serial.value.size()));
        w.raw(leaf.serial.value);
        w.u64(leaf.serial.expiry);
    }
    for (unsigned h = depth_; h >= 1; --h) {
        const auto& level = levels_[h - 1];
        for (uint64_t j = 0; j < level.size(); ++j) {
            if (!level[j].retained) continue;
            const TreePath p = TreePath::from_slot(j, k_, depth_ - h);
            w.u8(uint8_t(p.digits.size()));
            w.raw(p.digits);
            w.raw(level[j].retained->state.to_bytes());
        }
    }
    w.raw(root_digest().bytes);
    return w.take();
}

RevocationTree RevocationTree::deserialize(ByteView data) {
    ByteReader r(data);
    r.expect(std::string_view(kTreeMagic, 4));
    if (r.u8() != kTreeFormatVersion) throw DecodeError("unsupported tree format version");
    const unsigned k = r.u16();
    const unsigned depth = r.u16();
    const unsigned n = r.u16();
    const unsigned l = r.u16();
    const uint64_t s = r.u64();
    const uint64_t version = r.u64();
    if (k < 2 || k > kMaxK) throw DecodeError("k out of range");
    if (n != keccak::kDigestBits) throw DecodeError("unsupported digest size");
    if (l < n || l >= keccak::kRateBits) throw DecodeError("l out of range");
    if (s > r.remaining() / 11) throw DecodeError("leaf count exceeds input");
    if (depth != min_depth(k, s)) throw DecodeError("depth does not match leaf count");

    RevocationTree t(k, l);
    for (uint64_t i = 0; i < s; ++i) {
        Leaf leaf;
        auto value = r.raw(r.u16());
        if (value.empty()) throw DecodeError("empty serial");
        leaf.serial.value.assign(value.begin(), value.end());
        leaf.serial.expiry = r.u64();
        leaf.digest = keccak::hash(leaf.serial.value);
        if (!t.index_.emplace(key(leaf.serial.value), i).second) throw DecodeError("duplicate serial");
        t.leaves_.push_back(std::move(leaf));
    }
    t.rebuild(depth);
    t.version_ = version;

    for (unsigned h = depth; h >= 1; --h) {
        const auto& level = t.levels_[h - 1];
        for (uint64_t j = 0; j < level.size(); ++j) {
            if (!level[j].retained) continue;
            const TreePath expected = TreePath::from_slot(j, k, depth - h);
            auto digits = r.raw(r.u8());
            if (!std::equal(digits.begin(), digits.end(), expected.digits.begin(), expected.digits.end()))
                throw DecodeError("unexpected retained-state path");
            auto state = r.raw(keccak::kStateBytes);
            if (!std::equal(state.begin(), state.end(), level[j].retained->state.to_bytes().begin()))
                throw DecodeError("retained duplex state mismatch");
        }
    }
    if (Digest::from_bytes(r.raw(keccak::kDigestBytes)) != t.root_digest()) throw DecodeError("root digest mismatch");
    r.finish();
    return t;
}

void RevocationTree::check_invariants() const {
    const uint64_t s = leaves_.size();
    if (s > ipow_saturating(k_, depth_)) throw Error("capacity exceeded");
    if (depth_ != min_depth(k_, s)) throw Error("depth is not minimal");
    if (index_.size() != s) throw Error("index size differs from leaf count");
    for (const auto& [serial, slot] : index_) {
        if (slot >= s || key(leaves_[slot].serial.value) != serial) throw Error("index entry points at wrong leaf");
    }
    for (const auto& leaf : leaves_) {
        if (leaf.digest != keccak::hash(leaf.serial.value)) throw Error("leaf digest is not h(serial)");
    }

    std::vector<Digest> below;
    for (const auto& leaf : leaves_) below.push_back(leaf.digest);
    for (unsigned h = 1; h <= depth_; ++h) {
        const auto& level = levels_[h - 1];
        const uint64_t expect_nodes = h == depth_ ? 1 : (below.size() + k_ - 1) / k_;
        if (level.size() != expect_nodes) throw Error("wrong node count at height " + std::to_string(h));
        std::vector<Digest> here;
        for (uint64_t j = 0; j < level.size(); ++j) {
            const uint64_t first = j * k_;
            const uint64_t count = below.size() > first ? std::min<uint64_t>(k_, below.size() - first) : 0;
            const InternalNode& node = level[j];
            if (node.child_outputs.size() != count) throw Error("child_outputs length differs from child count");
            if (node.retained.has_value() != (count < k_)) throw Error("retained state presence is wrong");
            const Digest expect = count == 0 ? keccak::hash({})
                                             : fold_children(std::span(below).subspan(first, count), l_bits_);
            if (node.digest != expect) throw Error("stored digest differs from batch recomputation");
            here.push_back(node.digest);
        }
        below = std::move(here);
    }
}

unsigned min_depth(unsigned k, uint64_t s) {
    unsigned d = 1;
    uint64_t cap = k;
    while (cap < s) {
        cap = ipow_saturating(k, ++d);
    }
    return d;
}

uint64_t tree_size_bits(unsigned k, unsigned depth, unsigned n_bits) {
    if (k < 2 || depth < 1) throw std::invalid_argument("tree_size_bits needs k >= 2, D >= 1");
    constexpr auto kMax = std::numeric_limits<uint64_t>::max();
    // (k^(D+1) - 1)/(k - 1) computed by Horner to avoid the division.
    unsigned __int128 nodes = 0;
    for (unsigned i = 0; i <= depth; ++i) {
        nodes = nodes * k + 1;
        if (nodes > kMax) return kMax;
    }
    const unsigned __int128 bits = nodes * n_bits;
    return bits > kMax ? kMax : uint64_t(bits);
}

KChoice choose_k(uint64_t s, uint64_t memory_bits, unsigned n_bits) {
    if (s == 0) throw std::invalid_argument("choose_k needs s >= 1");
    std::optional<KChoice> best;
    for (unsigned k = 2; k <= 64; ++k) {
        const unsigned depth = min_depth(k, s);
        const uint64_t size = tree_size_bits(k, depth, n_bits);
        if (size > memory_bits) continue;
        const uint64_t proof = uint64_t(n_bits) * (uint64_t(k) * depth + 1);
        if (!best || proof < best->proof_bits) best = KChoice{k, depth, proof, size};
    }
    if (!best) throw Infeasible("no k in [2, 64] fits the memory bound");
    return *best;
}

}  // namespace krev::tree
