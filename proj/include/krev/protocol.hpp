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
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "krev/auth.hpp"
#include "krev/tree.hpp"

/// TTP, RSU and OBU roles as single-threaded state machines. They never
/// talk to each other directly: every output is an Envelope that the caller
/// (normally the simulation harness) delivers.
namespace krev::protocol {

using NodeId = uint32_t;
inline constexpr NodeId kBroadcast = 0xffffffffu;

struct PseudonymGroup {
    NodeId obu_id = 0;
    std::vector<tree::SerialNumber> pseudonyms;
    std::vector<Bytes> key_handles;  // opaque, one per pseudonym
};

struct Impeachment {
    NodeId accused_rsu_id = 0;
    auth::OkResponse conflicting_ok;
    auth::RevocationProof contradicting_proof;
    NodeId reporter_obu_id = 0;

    bool operator==(const Impeachment&) const = default;
};

Bytes encode_impeachment(const Impeachment& imp);
Impeachment decode_impeachment(ByteView data);

// Message payloads.
struct StatusQuery {
    Bytes serial;
    bool operator==(const StatusQuery&) const = default;
};
struct ProofAnswer {
    auth::RevocationProof proof;
    bool operator==(const ProofAnswer&) const = default;
};
struct OkAnswer {
    auth::OkResponse ok;
    bool operator==(const OkAnswer&) const = default;
};
/// Incremental update: the RSU replays the insertions and checks the
/// changed-node records against its own result.
struct TreeDelta {
    std::vector<tree::SerialNumber> added;
    Bytes delta;  // tree::encode_delta of the merged mutation report
    auth::SignedRoot root;
    bool operator==(const TreeDelta&) const = default;
};
/// Full replacement, sent after any reconstruction.
struct TreeReload {
    Bytes tree;  // RevocationTree::serialize
    auth::SignedRoot root;
    bool operator==(const TreeReload&) const = default;
};
struct ImpeachmentMsg {
    Impeachment impeachment;
    bool operator==(const ImpeachmentMsg&) const = default;
};
struct RsuRevocationNotice {
    NodeId rsu_id = 0;
    bool operator==(const RsuRevocationNotice&) const = default;
};

using Payload = std::variant<StatusQuery, ProofAnswer, OkAnswer, TreeDelta, TreeReload, ImpeachmentMsg,
                             RsuRevocationNotice>;

enum class MsgType : uint8_t {
    status_query = 1,
    proof_answer = 2,
    ok_answer = 3,
    tree_delta = 4,
    tree_reload = 5,
    impeachment = 6,
    rsu_revocation = 7,
};

MsgType type_of(const Payload& p);

struct Envelope {
    NodeId sender = 0;
    NodeId receiver = 0;
    uint64_t sim_time = 0;
    Payload payload;

    MsgType type() const { return type_of(payload); }
    bool operator==(const Envelope&) const = default;
};

/// type u8 || sender u32 || receiver u32 || sim-time u64 || payload.
Bytes encode_envelope(const Envelope& e);
Envelope decode_envelope(ByteView data);

/// Replay log: each envelope prefixed by its u32 length.
Bytes encode_replay_log(std::span<const Envelope> log);
std::vector<Envelope> decode_replay_log(ByteView data);

using Answer = std::variant<auth::RevocationProof, auth::OkResponse>;

enum class ImpeachmentError {
    none,
    unknown_rsu,
    bad_ok_signature,
    bad_proof,
    serial_mismatch,
    version_order,
    ok_predates_revocation,
};

std::string_view to_string(ImpeachmentError e);

struct ImpeachmentOutcome {
    ImpeachmentError error = ImpeachmentError::none;
    std::vector<Envelope> notices;  // RSU revocation broadcast on success

    bool accepted() const { return error == ImpeachmentError::none; }
};

class Ttp {
  public:
    Ttp(NodeId id, unsigned k, auth::KeyPair key, const auth::SignatureScheme& scheme = auth::default_scheme());

    NodeId id() const { return id_; }
    const tree::RevocationTree& tree() const { return tree_; }
    const auth::SignedRoot& signed_root() const { return root_; }
    const auth::VerifyKey& verify_key() const { return key_.verify; }

    void register_group(PseudonymGroup group);
    void register_rsu(NodeId rsu_id, auth::VerifyKey key);
    bool is_rsu_revoked(NodeId rsu_id) const { return revoked_rsus_.contains(rsu_id); }
    bool is_obu_revoked(NodeId obu_id) const { return revoked_obus_.contains(obu_id); }
    const PseudonymGroup* group(NodeId obu_id) const;

    /// Full tree for an RSU joining the system.
    Envelope bootstrap(NodeId rsu_id, uint64_t now) const;

    /// Insert every pseudonym of the OBU's group; one update per live RSU.
    /// Throws UnknownObu. Revoking an already revoked OBU returns nothing.
    std::vector<Envelope> revoke_obu(NodeId obu_id, uint64_t now);

    /// Expiry sweep; emits updates only if the tree changed.
    std::vector<Envelope> periodic_update(uint64_t now);

    ImpeachmentOutcome handle_impeachment(const Impeachment& imp, uint64_t now);

  private:
    std::vector<Envelope> publish(const std::vector<tree::SerialNumber>& added,
                                  const std::vector<tree::MutationReport>& reports, uint64_t now);

    NodeId id_;
    auth::KeyPair key_;
    const auth::SignatureScheme* scheme_;
    tree::RevocationTree tree_;
    auth::SignedRoot root_;
    std::map<NodeId, PseudonymGroup> groups_;
    std::map<NodeId, auth::VerifyKey> rsus_;
    std::set<NodeId> revoked_rsus_;
    std::set<NodeId> revoked_obus_;
    std::unordered_map<std::string, uint64_t> revoked_at_version_;
};

class Rsu {
  public:
    Rsu(NodeId id, auth::KeyPair key, auth::VerifyKey ttp_key, bool cheating = false,
        const auth::SignatureScheme& scheme = auth::default_scheme());

    NodeId id() const { return id_; }
    bool cheating() const { return cheating_; }
    const auth::VerifyKey& verify_key() const { return key_.verify; }
    bool has_tree() const { return tree_.has_value(); }
    const tree::RevocationTree& tree() const { return *tree_; }
    const auth::SignedRoot& signed_root() const { return root_; }
    bool needs_reload() const { return needs_reload_; }

    /// Returns false (and flags needs_reload) when the update does not
    /// reproduce the signed root.
    bool apply(const TreeDelta& delta);
    bool apply(const TreeReload& reload);

    /// Proof for a live, unexpired leaf; signed OK otherwise. A cheating RSU
    /// always answers OK.
    Answer answer_query(ByteView serial, uint64_t now) const;

    /// Forward an OBU's impeachment to the TTP.
    Envelope relay_impeachment(const Impeachment& imp, NodeId ttp_id, uint64_t now) const;

  private:
    NodeId id_;
    auth::KeyPair key_;
    auth::VerifyKey ttp_key_;
    bool cheating_;
    const auth::SignatureScheme* scheme_;
    std::optional<tree::RevocationTree> tree_;
    auth::SignedRoot root_;
    bool needs_reload_ = true;
};

struct ObuConfig {
    unsigned trust_threshold = 3;
    uint64_t ok_max_age = auth::kDefaultOkMaxAge;
};

struct ReliableEntry {
    uint64_t tree_version = 0;
    uint64_t checked_at = 0;
    std::vector<auth::OkResponse> oks;
};

struct PendingOk {
    std::vector<auth::OkResponse> oks;  // at most one per RSU
    std::set<NodeId> asked;             // RSUs already queried

    size_t count() const { return oks.size(); }
};

struct TrustCache {
    std::map<Bytes, auth::RevocationProof> unreliable;
    std::map<Bytes, ReliableEntry> reliable;
};

enum class Precheck { known_revoked, known_reliable, unknown };

namespace action {
struct AskAgain {
    Bytes serial;
    std::set<NodeId> exclude;
};
struct Impeach {
    Impeachment impeachment;
    NodeId via_rsu = 0;
};
struct CacheUpdate {
    Bytes serial;
    bool revoked = false;
};
}  // namespace action

using Action = std::variant<action::AskAgain, action::Impeach, action::CacheUpdate>;

class Obu {
  public:
    Obu(NodeId id, auth::VerifyKey ttp_key, ObuConfig config = {},
        const auth::SignatureScheme& scheme = auth::default_scheme());

    NodeId id() const { return id_; }
    const TrustCache& cache() const { return cache_; }
    const std::map<Bytes, PendingOk>& pending() const { return pending_; }
    uint64_t latest_version() const { return latest_version_; }

    void learn_rsu_key(NodeId rsu_id, auth::VerifyKey key) { rsu_keys_[rsu_id] = std::move(key); }
    void handle_rsu_revocation(NodeId rsu_id);
    bool knows_revoked_rsu(NodeId rsu_id) const { return revoked_rsus_.contains(rsu_id); }

    Precheck precheck(ByteView serial) const;

    /// Whether to talk to a peer using `serial` when no RSU is reachable:
    /// only a current reliable entry allows it.
    bool allow_without_rsu(ByteView serial) const { return precheck(serial) == Precheck::known_reliable; }

    void note_query(ByteView serial, NodeId rsu_id);

    /// Verifies the answer (unverifiable answers are dropped and yield no
    /// actions), then updates the trust cache.
    std::vector<Action> handle_answer(const Answer& answer, NodeId responding_rsu, uint64_t now);

    uint64_t dropped_answers() const { return dropped_; }

  private:
    std::vector<Action> on_proof(const auth::RevocationProof& proof, NodeId rsu);
    std::vector<Action> on_ok(const auth::OkResponse& ok, uint64_t now);

    NodeId id_;
    auth::VerifyKey ttp_key_;
    ObuConfig config_;
    const auth::SignatureScheme* scheme_;
    std::map<NodeId, auth::VerifyKey> rsu_keys_;
    std::set<NodeId> revoked_rsus_;
    TrustCache cache_;
    std::map<Bytes, PendingOk> pending_;
    uint64_t latest_version_ = 0;
    uint64_t dropped_ = 0;
};

}  // namespace krev::protocol
