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

#include "krev/auth.hpp"

#include <algorithm>
#include <limits>

#include "krev/error.hpp"

namespace krev::auth {

namespace {

constexpr char kProofMagic[] = "KPRF";
constexpr uint8_t kProofFormatVersion = 1;
constexpr char kOkMagic[] = "KOK1";

bool constant_time_equal(ByteView a, ByteView b) {
    if (a.size() != b.size()) return false;
    uint8_t diff = 0;
    for (size_t i = 0; i < a.size(); ++i) diff |= uint8_t(a[i] ^ b[i]);
    return diff == 0;
}

}  // namespace

KeyPair KeyedDigestScheme::generate(uint32_t signer_id, uint64_t seed) const {
    ByteWriter w;
    w.raw(std::string_view("krev-key"));
    w.u32(signer_id);
    w.u64(seed);
    const Digest d = keccak::hash(w.view());
    Bytes secret(d.bytes.begin(), d.bytes.end());
    return KeyPair{SigningKey{signer_id, secret}, VerifyKey{signer_id, secret}};
}

Bytes KeyedDigestScheme::sign(ByteView message, const SigningKey& key) const {
    Bytes input = key.secret;
    input.insert(input.end(), message.begin(), message.end());
    const Digest d = keccak::hash(input);
    return Bytes(d.bytes.begin(), d.bytes.end());
}

bool KeyedDigestScheme::verify(ByteView message, ByteView signature, const VerifyKey& key) const {
    const Bytes expect = sign(message, SigningKey{key.signer_id, key.material});
    return constant_time_equal(expect, signature);
}

const SignatureScheme& default_scheme() {
    static const KeyedDigestScheme scheme;
    return scheme;
}

TreeShape TreeShape::of(const tree::RevocationTree& t) {
    return TreeShape{uint16_t(t.k()), uint16_t(t.depth()), uint16_t(t.n_bits()), uint16_t(t.l_bits())};
}

Bytes signed_root_message(const SignedRoot& root, const TreeShape& shape) {
    ByteWriter w;
    w.raw(root.root_digest.bytes);
    w.u64(root.tree_version);
    w.u64(root.issued_at);
    w.u16(uint16_t(root.signer_id));
    w.u16(shape.k);
    w.u16(shape.depth);
    w.u16(shape.n_bits);
    w.u16(shape.l_bits);
    return w.take();
}

SignedRoot sign_root(const tree::RevocationTree& tree, const SigningKey& key, uint64_t issued_at,
                     const SignatureScheme& scheme) {
    SignedRoot root;
    root.root_digest = tree.root_digest();
    root.tree_version = tree.version();
    root.issued_at = issued_at;
    root.signer_id = key.signer_id & 0xffff;
    root.signature = scheme.sign(signed_root_message(root, TreeShape::of(tree)), key);
    return root;
}

bool verify_signed_root(const SignedRoot& root, const TreeShape& shape, const VerifyKey& key,
                        const SignatureScheme& scheme) {
    if ((key.signer_id & 0xffff) != root.signer_id) return false;
    return scheme.verify(signed_root_message(root, shape), root.signature, key);
}

void write_signed_root(ByteWriter& w, const SignedRoot& root) {
    w.raw(root.root_digest.bytes);
    w.u64(root.tree_version);
    w.u64(root.issued_at);
    w.u16(uint16_t(root.signer_id));
    w.u16(uint16_t(root.signature.size()));
    w.raw(root.signature);
}

SignedRoot read_signed_root(ByteReader& r) {
    SignedRoot root;
    root.root_digest = Digest::from_bytes(r.raw(keccak::kDigestBytes));
    root.tree_version = r.u64();
    root.issued_at = r.u64();
    root.signer_id = r.u16();
    auto sig = r.raw(r.u16());
    root.signature.assign(sig.begin(), sig.end());
    return root;
}

std::optional<RevocationProof> build_proof(const tree::RevocationTree& tree, ByteView serial,
                                           const SignedRoot& signed_root) {
    if (signed_root.tree_version != tree.version())
        throw VersionMismatch("signed root is for version " + std::to_string(signed_root.tree_version) +
                              ", tree is at " + std::to_string(tree.version()));
    auto bundle = tree.search(serial);
    if (!bundle) return std::nullopt;

    RevocationProof p;
    p.signed_root = signed_root;
    p.shape = TreeShape::of(tree);
    p.leaf_serial.assign(serial.begin(), serial.end());
    p.path = bundle->path;
    for (auto& level : bundle->levels) p.levels.push_back(ProofLevel{level.positions, level.digests});
    return p;
}

Bytes encode_proof(const RevocationProof& p) {
    ByteWriter w;
    w.raw(std::string_view(kProofMagic, 4));
    w.u8(kProofFormatVersion);
    w.u16(p.shape.k);
    w.u16(p.shape.depth);
    w.u16(p.shape.n_bits);
    w.u16(p.shape.l_bits);
    w.u16(uint16_t(p.leaf_serial.size()));
    w.raw(p.leaf_serial);
    w.u8(uint8_t(p.path.digits.size()));
    w.raw(p.path.digits);
    for (const auto& level : p.levels) {
        w.u8(uint8_t(level.digests.size()));
        for (size_t i = 0; i < level.digests.size(); ++i) {
            w.u8(level.indices[i]);
            w.raw(level.digests[i].bytes);
        }
    }
    write_signed_root(w, p.signed_root);
    return w.take();
}

RevocationProof decode_proof(ByteView data) {
    ByteReader r(data);
    r.expect(std::string_view(kProofMagic, 4));
    if (r.u8() != kProofFormatVersion) throw DecodeError("unsupported proof format version");
    RevocationProof p;
    p.shape.k = r.u16();
    p.shape.depth = r.u16();
    p.shape.n_bits = r.u16();
    p.shape.l_bits = r.u16();
    if (p.shape.n_bits != keccak::kDigestBits) throw DecodeError("unsupported digest size");
    auto serial = r.raw(r.u16());
    p.leaf_serial.assign(serial.begin(), serial.end());
    auto digits = r.raw(r.u8());
    p.path.digits.assign(digits.begin(), digits.end());
    if (p.path.digits.size() != p.shape.depth) throw DecodeError("path length differs from depth");
    for (unsigned d = 0; d < p.shape.depth; ++d) {
        ProofLevel level;
        const uint8_t count = r.u8();
        for (uint8_t i = 0; i < count; ++i) {
            level.indices.push_back(r.u8());
            level.digests.push_back(Digest::from_bytes(r.raw(keccak::kDigestBytes)));
        }
        p.levels.push_back(std::move(level));
    }
    p.signed_root = read_signed_root(r);
    r.finish();
    return p;
}

std::string_view to_string(RejectReason r) {
    switch (r) {
        case RejectReason::none: return "Accept";
        case RejectReason::bad_leaf_digest: return "BadLeafDigest";
        case RejectReason::bad_path_fold: return "BadPathFold";
        case RejectReason::bad_signature: return "BadSignature";
        case RejectReason::malformed_proof: return "MalformedProof";
        case RejectReason::stale: return "Stale";
    }
    return "Unknown";
}

namespace {

bool well_formed(const RevocationProof& p) {
    const auto& s = p.shape;
    if (s.k < 2 || s.k > tree::kMaxK) return false;
    if (s.n_bits != keccak::kDigestBits) return false;
    if (s.l_bits < s.n_bits || s.l_bits >= keccak::kRateBits) return false;
    if (s.depth < 1 || p.path.digits.size() != s.depth || p.levels.size() != s.depth) return false;
    if (p.leaf_serial.empty()) return false;
    for (size_t d = 0; d < p.levels.size(); ++d) {
        const auto& level = p.levels[d];
        const size_t m = level.digests.size();
        if (m == 0 || m > s.k || level.indices.size() != m) return false;
        for (size_t i = 0; i < m; ++i) {
            if (level.indices[i] != i) return false;
        }
        if (p.path.digits[d] >= m) return false;
    }
    return true;
}

}  // namespace

Verdict verify_proof(const RevocationProof& p, const VerifyKey& ttp_key, const SignatureScheme& scheme) {
    if (!well_formed(p)) return Verdict::reject(RejectReason::malformed_proof);

    const size_t depth = p.levels.size();
    const auto& leaf_level = p.levels[depth - 1];
    if (leaf_level.digests[p.path.digits[depth - 1]] != keccak::hash(p.leaf_serial))
        return Verdict::reject(RejectReason::bad_leaf_digest);

    Digest folded = tree::fold_children(leaf_level.digests, p.shape.l_bits);
    for (size_t d = depth - 1; d-- > 0;) {
        const auto& level = p.levels[d];
        if (level.digests[p.path.digits[d]] != folded) return Verdict::reject(RejectReason::bad_path_fold);
        folded = tree::fold_children(level.digests, p.shape.l_bits);
    }
    if (folded != p.signed_root.root_digest) return Verdict::reject(RejectReason::bad_path_fold);

    if (!verify_signed_root(p.signed_root, p.shape, ttp_key, scheme)) return Verdict::reject(RejectReason::bad_signature);
    return Verdict::accept();
}

Verdict verify_proof_bytes(ByteView proof, const VerifyKey& ttp_key, const SignatureScheme& scheme) {
    RevocationProof p;
    try {
        p = decode_proof(proof);
    } catch (const DecodeError&) {
        return Verdict::reject(RejectReason::malformed_proof);
    }
    return verify_proof(p, ttp_key, scheme);
}

Bytes ok_message(const OkResponse& ok) {
    ByteWriter w;
    w.raw(std::string_view("OK"));
    w.u16(uint16_t(ok.queried_serial.size()));
    w.raw(ok.queried_serial);
    w.u64(ok.tree_version);
    w.u64(ok.issued_at);
    w.u32(ok.rsu_id);
    return w.take();
}

OkResponse sign_ok(ByteView serial, uint64_t tree_version, uint64_t issued_at, const SigningKey& rsu_key,
                   const SignatureScheme& scheme) {
    OkResponse ok;
    ok.queried_serial.assign(serial.begin(), serial.end());
    ok.tree_version = tree_version;
    ok.issued_at = issued_at;
    ok.rsu_id = rsu_key.signer_id;
    ok.signature = scheme.sign(ok_message(ok), rsu_key);
    return ok;
}

Verdict verify_ok(const OkResponse& ok, const VerifyKey& rsu_key, uint64_t now, uint64_t max_age,
                  const SignatureScheme& scheme) {
    if (ok.rsu_id != rsu_key.signer_id || !scheme.verify(ok_message(ok), ok.signature, rsu_key))
        return Verdict::reject(RejectReason::bad_signature);
    const uint64_t age = now > ok.issued_at ? now - ok.issued_at : ok.issued_at - now;
    if (age > max_age) return Verdict::reject(RejectReason::stale);
    return Verdict::accept();
}

Bytes encode_ok(const OkResponse& ok) {
    ByteWriter w;
    w.raw(std::string_view(kOkMagic, 4));
    w.u16(uint16_t(ok.queried_serial.size()));
    w.raw(ok.queried_serial);
    w.u64(ok.tree_version);
    w.u64(ok.issued_at);
    w.u32(ok.rsu_id);
    w.u16(uint16_t(ok.signature.size()));
    w.raw(ok.signature);
    return w.take();
}

OkResponse decode_ok(ByteView data) {
    ByteReader r(data);
    r.expect(std::string_view(kOkMagic, 4));
    OkResponse ok;
    auto serial = r.raw(r.u16());
    ok.queried_serial.assign(serial.begin(), serial.end());
    ok.tree_version = r.u64();
    ok.issued_at = r.u64();
    ok.rsu_id = r.u32();
    auto sig = r.raw(r.u16());
    ok.signature.assign(sig.begin(), sig.end());
    r.finish();
    return ok;
}

}  // namespace krev::auth
