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
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "krev/bytes.hpp"
#include "krev/keccak.hpp"

/// Dynamic perfect k-ary revocation tree.
///
/// Leaves hold h(serial) in revocation order and fill slots strictly left to
/// right. Every internal node absorbs the digests of its children, one
/// duplexing call per child, and its digest is the concatenation of the
/// children's output blocks, each truncated so that the total is n bits.
/// Because the fill order is left to right, only the rightmost path ever
/// changes on insertion: appending a child costs one duplexing call from the
/// node's retained state, and refreshing the last child costs one call from
/// the state saved just before it.
namespace krev::tree {

using keccak::Digest;

inline constexpr unsigned kMaxK = 255;  // path digits are one byte on the wire

struct SerialNumber {
    Bytes value;
    uint64_t expiry = 0;  // seconds

    bool operator==(const SerialNumber&) const = default;
};

/// Root-to-leaf child indices, most significant first.
struct TreePath {
    std::vector<uint8_t> digits;

    size_t depth() const { return digits.size(); }

    static TreePath from_slot(uint64_t slot, unsigned k, unsigned depth);
    uint64_t to_slot(unsigned k) const;

    bool operator==(const TreePath&) const = default;
};

/// One l-bit duplex output block (bits beyond l are zero).
struct Block {
    std::array<uint8_t, keccak::kRateBytes> bytes{};

    bool operator==(const Block&) const = default;
};

/// Bits contributed by child `index` of an m-child parent: floor(n/m), plus
/// one for each of the first (n mod m) children.
unsigned truncation_bits(unsigned n_bits, unsigned m, unsigned index);

/// Concatenate each child's block truncated per truncation_bits().
/// Throws EmptyChildren for m = 0 and BadBlockLength if a block is not
/// exactly l_bits long or l_bits is too short for the truncation.
Digest parent_digest(std::span<const BitString> child_outputs, unsigned l_bits = keccak::kDigestBits);
Digest parent_digest(std::span<const Block> child_outputs, unsigned l_bits);

/// Fresh duplex over the child digests followed by parent_digest. This is
/// the batch route used by reconstruction and by proof verification.
Digest fold_children(std::span<const Digest> children, unsigned l_bits);

enum class NodeKind : uint8_t { leaf = 0, internal = 1 };

struct ChangedNode {
    unsigned height = 0;  // 0 for leaves
    uint64_t index = 0;   // position within its level
    TreePath path;        // digits from the root to this node
    NodeKind kind = NodeKind::leaf;
    Digest digest;

    bool operator==(const ChangedNode&) const = default;
};

struct MutationReport {
    uint64_t version = 0;
    bool reconstructed = false;
    std::vector<ChangedNode> changed;
    std::vector<Bytes> tombstoned;  // expire_sweep only

    bool empty() const { return changed.empty() && tombstoned.empty(); }
};

/// Delta wire format: version u64 || count u32 || records of
/// (path length u8, digits, kind u8, digest[28]).
Bytes encode_delta(const MutationReport& report);
MutationReport decode_delta(ByteView data);

struct Leaf {
    SerialNumber serial;
    Digest digest;
    bool tombstoned = false;
};

struct InternalNode {
    Digest digest;
    std::vector<Block> child_outputs;
    // State after absorbing every child; kept only while the node is under-full.
    std::optional<keccak::DuplexState> retained;
    // State just before the last child was absorbed.
    keccak::DuplexState last_child_base;
};

/// The present children of one node on a search path.
struct BundleLevel {
    std::vector<uint8_t> positions;
    std::vector<Digest> digests;
};

struct PathBundle {
    Digest root;
    TreePath path;
    std::vector<BundleLevel> levels;  // root's children first, leaves last
};

class RevocationTree {
  public:
    explicit RevocationTree(unsigned k, unsigned l_bits = keccak::kDigestBits);

    unsigned k() const { return k_; }
    unsigned depth() const { return depth_; }
    unsigned n_bits() const { return keccak::kDigestBits; }
    unsigned l_bits() const { return l_bits_; }
    uint64_t size() const { return leaves_.size(); }
    uint64_t version() const { return version_; }
    const Digest& root_digest() const { return levels_.back().front().digest; }

    /// Throws DuplicateSerial, or std::invalid_argument for an empty serial.
    MutationReport insert(SerialNumber serial);

    /// Throws UnknownSerial.
    MutationReport erase(ByteView serial);

    /// Rebuild every internal node from the leaves at the minimal depth.
    MutationReport reconstruct();

    /// Tombstone leaves with expiry < now; when some internal node has every
    /// child expired, physically remove all expired leaves and reconstruct.
    MutationReport expire_sweep(uint64_t now);

    std::optional<PathBundle> search(ByteView serial) const;

    bool contains(ByteView serial) const { return index_.contains(key(serial)); }
    bool is_live(ByteView serial) const;
    const Leaf* find(ByteView serial) const;
    std::optional<TreePath> path_of(ByteView serial) const;

    const std::vector<Leaf>& leaves() const { return leaves_; }
    const InternalNode& internal(unsigned height, uint64_t index) const { return levels_.at(height - 1).at(index); }
    uint64_t level_width(unsigned height) const { return height == 0 ? leaves_.size() : levels_.at(height - 1).size(); }
    const Digest& node_digest(unsigned height, uint64_t index) const;

    /// Byte-exact persistent form; internal digests are recomputed on load
    /// and checked against the trailing root digest.
    Bytes serialize() const;
    static RevocationTree deserialize(ByteView data);

    /// Throws krev::Error describing the first violated structural invariant.
    void check_invariants() const;

  private:
    static std::string key(ByteView serial) { return std::string(serial.begin(), serial.end()); }

    void rebuild(unsigned depth);
    void reindex();
    MutationReport full_report() const;
    ChangedNode describe(unsigned height, uint64_t index) const;
    void absorb_child(InternalNode& node, unsigned position, const Digest& child) const;

    unsigned k_;
    unsigned l_bits_;
    unsigned depth_ = 1;
    uint64_t version_ = 0;
    std::vector<Leaf> leaves_;
    std::vector<std::vector<InternalNode>> levels_;  // levels_[h - 1] holds height h
    std::unordered_map<std::string, uint64_t> index_;
};

/// Smallest D >= 1 with k^D >= s.
unsigned min_depth(unsigned k, uint64_t s);

/// n(k^(D+1) - 1)/(k - 1), saturating at UINT64_MAX.
uint64_t tree_size_bits(unsigned k, unsigned depth, unsigned n_bits = keccak::kDigestBits);

struct KChoice {
    unsigned k = 0;
    unsigned depth = 0;
    uint64_t proof_bits = 0;  // n(kD + 1)
    uint64_t tree_bits = 0;
};

/// k in [2, 64] minimising n(kD + 1) subject to the tree fitting in
/// memory_bits; ties go to the smaller k. Throws Infeasible.
KChoice choose_k(uint64_t s, uint64_t memory_bits, unsigned n_bits = keccak::kDigestBits);

}  // namespace krev::tree
