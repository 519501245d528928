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

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "krev/bytes.hpp"
#include "krev/keccak.hpp"
#include "krev/tree.hpp"
#include "krev/wire.hpp"

namespace krev::auth {

using keccak::Digest;

struct SigningKey {
    uint32_t signer_id = 0;
    Bytes secret;
};

struct VerifyKey {
    uint32_t signer_id = 0;
    Bytes material;

    bool operator==(const VerifyKey&) const = default;
};

struct KeyPair {
    SigningKey signing;
    VerifyKey verify;
};

/// Pluggable signature algorithm. Implementations must be stateless.
class SignatureScheme {
  public:
    virtual ~SignatureScheme() = default;
    virtual KeyPair generate(uint32_t signer_id, uint64_t seed) const = 0;
    virtual Bytes sign(ByteView message, const SigningKey& key) const = 0;
    virtual bool verify(ByteView message, ByteView signature, const VerifyKey& key) const = 0;
};

/// Deterministic test scheme: signature = h(secret || message), checked by
/// recomputation. The verification key is the secret itself, so this only
/// models a signature inside a harness that controls every key.
class KeyedDigestScheme final : public SignatureScheme {
  public:
    KeyPair generate(uint32_t signer_id, uint64_t seed) const override;
    Bytes sign(ByteView message, const SigningKey& key) const override;
    bool verify(ByteView message, ByteView signature, const VerifyKey& key) const override;
};

const SignatureScheme& default_scheme();

/// Tree parameters bound into every root signature.
struct TreeShape {
    uint16_t k = 0;
    uint16_t depth = 0;
    uint16_t n_bits = keccak::kDigestBits;
    uint16_t l_bits = keccak::kDigestBits;

    static TreeShape of(const tree::RevocationTree& t);
    bool operator==(const TreeShape&) const = default;
};

struct SignedRoot {
    Digest root_digest;
    uint64_t tree_version = 0;
    uint64_t issued_at = 0;
    uint32_t signer_id = 0;  // 16 bits on the wire
    Bytes signature;

    bool operator==(const SignedRoot&) const = default;
};

/// Bytes covered by the root signature.
Bytes signed_root_message(const SignedRoot& root, const TreeShape& shape);

SignedRoot sign_root(const tree::RevocationTree& tree, const SigningKey& key, uint64_t issued_at,
                     const SignatureScheme& scheme = default_scheme());
bool verify_signed_root(const SignedRoot& root, const TreeShape& shape, const VerifyKey& key,
                        const SignatureScheme& scheme = default_scheme());

void write_signed_root(ByteWriter& w, const SignedRoot& root);
SignedRoot read_signed_root(ByteReader& r);

/// Each level lists the digests of all present children of the path node,
/// in child order, so the verifier re-runs the same duplex chain the tree
/// builder ran.
struct ProofLevel {
    std::vector<uint8_t> indices;
    std::vector<Digest> digests;

    bool operator==(const ProofLevel&) const = default;
};

struct RevocationProof {
    SignedRoot signed_root;
    TreeShape shape;
    Bytes leaf_serial;
    tree::TreePath path;
    std::vector<ProofLevel> levels;  // root's children first

    bool operator==(const RevocationProof&) const = default;
};

/// Throws VersionMismatch if signed_root is not for the tree's version.
std::optional<RevocationProof> build_proof(const tree::RevocationTree& tree, ByteView serial,
                                           const SignedRoot& signed_root);

Bytes encode_proof(const RevocationProof& proof);
RevocationProof decode_proof(ByteView data);  // throws DecodeError

enum class RejectReason { none, bad_leaf_digest, bad_path_fold, bad_signature, malformed_proof, stale };

std::string_view to_string(RejectReason r);

struct Verdict {
    RejectReason reason = RejectReason::none;

    bool accepted() const { return reason == RejectReason::none; }
    static Verdict accept() { return {}; }
    static Verdict reject(RejectReason r) { return {r}; }
};

/// Checks, in order: proof well-formed, leaf digest = h(serial), the fold
/// along the path reproduces the signed root, TTP signature. Uses nothing
/// but the proof and the key.
Verdict verify_proof(const RevocationProof& proof, const VerifyKey& ttp_key,
                     const SignatureScheme& scheme = default_scheme());
Verdict verify_proof_bytes(ByteView proof, const VerifyKey& ttp_key, const SignatureScheme& scheme = default_scheme());

struct OkResponse {
    Bytes queried_serial;
    uint64_t tree_version = 0;
    uint64_t issued_at = 0;
    uint32_t rsu_id = 0;
    Bytes signature;

    bool operator==(const OkResponse&) const = default;
};

inline constexpr uint64_t kDefaultOkMaxAge = 60;

Bytes ok_message(const OkResponse& ok);
OkResponse sign_ok(ByteView serial, uint64_t tree_version, uint64_t issued_at, const SigningKey& rsu_key,
                   const SignatureScheme& scheme = default_scheme());
Verdict verify_ok(const OkResponse& ok, const VerifyKey& rsu_key, uint64_t now, uint64_t max_age = kDefaultOkMaxAge,
                  const SignatureScheme& scheme = default_scheme());

Bytes encode_ok(const OkResponse& ok);
OkResponse decode_ok(ByteView data);

}  // namespace krev::auth
