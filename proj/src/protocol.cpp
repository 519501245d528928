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

#include "krev/protocol.hpp"

#include <algorithm>

#include "krev/error.hpp"
#include "krev/wire.hpp"

namespace krev::protocol {

namespace {

    void write_blob(ByteWriter& w, ByteView b) {
        w.u32(uint32_t(b.size()));
        w.raw(b);
    }

    ByteView read_blob(ByteReader& r) { return r.raw(r.u32()); }

    void write_serial(ByteWriter& w, ByteView s) {
        if (s.size() > 0xffff) throw std::invalid_argument("serial too long");
        w.u16(uint16_t(s.size()));
        w.raw(s);
    }

    Bytes read_serial(ByteReader& r) {
        auto v = r.raw(r.u16());
        return Bytes(v.begin(), v.end());
    }

    using NodeKey = std::pair<std::vector<uint8_t>, uint8_t>;

    // Latest digest per node over a sequence of reports.
    std::map<NodeKey, keccak::Digest> merge_changes(const std::vector<tree::MutationReport>& reports) {
        std::map<NodeKey, keccak::Digest> out;
        for (const auto& rep : reports)
            for (const auto& c : rep.changed) out[{c.path.digits, uint8_t(c.kind)}] = c.digest;
        return out;
    }

    std::string key_of(ByteView b) { return std::string(b.begin(), b.end()); }

}  // namespace

Bytes encode_impeachment(const Impeachment& imp) {
    ByteWriter w;
    w.u32(imp.accused_rsu_id);
    w.u32(imp.reporter_obu_id);
    write_blob(w, auth::encode_ok(imp.conflicting_ok));
    write_blob(w, auth::encode_proof(imp.contradicting_proof));
    return w.take();
}

Impeachment decode_impeachment(ByteView data) {
    ByteReader r(data);
    Impeachment imp;
    imp.accused_rsu_id = r.u32();
    imp.reporter_obu_id = r.u32();
    imp.conflicting_ok = auth::decode_ok(read_blob(r));
    imp.contradicting_proof = auth::decode_proof(read_blob(r));
    r.finish();
    return imp;
}

MsgType type_of(const Payload& p) { return MsgType(uint8_t(p.index() + 1)); }

Bytes encode_envelope(const Envelope& e) {
    ByteWriter w;
    w.u8(uint8_t(e.type()));
    w.u32(e.sender);
    w.u32(e.receiver);
    w.u64(e.sim_time);
    std::visit(
        [&w](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, StatusQuery>) {
                write_serial(w, m.serial);
            } else if constexpr (std::is_same_v<T, ProofAnswer>) {
                w.raw(auth::encode_proof(m.proof));
            } else if constexpr (std::is_same_v<T, OkAnswer>) {
                w.raw(auth::encode_ok(m.ok));
            } else if constexpr (std::is_same_v<T, TreeDelta>) {
                w.u32(uint32_t(m.added.size()));
                for (const auto& s : m.added) {
                    write_serial(w, s.value);
                    w.u64(s.expiry);
                }
                write_blob(w, m.delta);
                auth::write_signed_root(w, m.root);
            } else if constexpr (std::is_same_v<T, TreeReload>) {
                write_blob(w, m.tree);
                auth::write_signed_root(w, m.root);
            } else if constexpr (std::is_same_v<T, ImpeachmentMsg>) {
                w.raw(encode_impeachment(m.impeachment));
            } else {
                w.u32(m.rsu_id);
            }
        },
        e.payload);
    return w.take();
}

Envelope decode_envelope(ByteView data) {
    ByteReader r(data);
    Envelope e;
    const uint8_t type = r.u8();
    e.sender = r.u32();
    e.receiver = r.u32();
    e.sim_time = r.u64();
    switch (MsgType(type)) {
        case MsgType::status_query:
            e.payload = StatusQuery{read_serial(r)};
            break;
        case MsgType::proof_answer:
            e.payload = ProofAnswer{auth::decode_proof(r.raw(r.remaining()))};
            break;
        case MsgType::ok_answer:
            e.payload = OkAnswer{auth::decode_ok(r.raw(r.remaining()))};
            break;
        case MsgType::tree_delta: {
            TreeDelta d;
            const uint32_t count = r.u32();
            if (count > r.remaining()) throw DecodeError("bad added count");
            for (uint32_t i = 0; i < count; ++i) {
                tree::SerialNumber s;
                s.value = read_serial(r);
                s.expiry = r.u64();
                d.added.push_back(std::move(s));
            }
            auto blob = read_blob(r);
            d.delta.assign(blob.begin(), blob.end());
            d.root = auth::read_signed_root(r);
            e.payload = std::move(d);
            break;
        }
        case MsgType::tree_reload: {
            TreeReload t;
            auto blob = read_blob(r);
            t.tree.assign(blob.begin(), blob.end());
            t.root = auth::read_signed_root(r);
            e.payload = std::move(t);
            break;
        }
        case MsgType::impeachment:
            e.payload = ImpeachmentMsg{decode_impeachment(r.raw(r.remaining()))};
            break;
        case MsgType::rsu_revocation:
            e.payload = RsuRevocationNotice{r.u32()};
            break;
        default:
            throw DecodeError("unknown message type");
    }
    r.finish();
    return e;
}

Bytes encode_replay_log(std::span<const Envelope> log) {
    ByteWriter w;
    for (const auto& e : log) write_blob(w, encode_envelope(e));
    return w.take();
}

std::vector<Envelope> decode_replay_log(ByteView data) {
    ByteReader r(data);
    std::vector<Envelope> out;
    while (r.remaining() > 0) out.push_back(decode_envelope(read_blob(r)));
    return out;
}

std::string_view to_string(ImpeachmentError e) {
    switch (e) {
        case ImpeachmentError::none:
            return "none";
        case ImpeachmentError::unknown_rsu:
            return "unknown_rsu";
        case ImpeachmentError::bad_ok_signature:
            return "bad_ok_signature";
        case ImpeachmentError::bad_proof:
            return "bad_proof";
        case ImpeachmentError::serial_mismatch:
            return "serial_mismatch";
        case ImpeachmentError::version_order:
            return "version_order";
        case ImpeachmentError::ok_predates_revocation:
            return "ok_predates_revocation";
    }
    return "?";
}

// ---------------------------------------------------------------- TTP

Ttp::Ttp(NodeId id, unsigned k, auth::KeyPair key, const auth::SignatureScheme& scheme)
    : id_(id), key_(std::move(key)), scheme_(&scheme), tree_(k) {
    root_ = auth::sign_root(tree_, key_.signing, 0, *scheme_);
}

void Ttp::register_group(PseudonymGroup group) {
    const NodeId id = group.obu_id;
    groups_[id] = std::move(group);
}

void Ttp::register_rsu(NodeId rsu_id, auth::VerifyKey key) { rsus_[rsu_id] = std::move(key); }

const PseudonymGroup* Ttp::group(NodeId obu_id) const {
    auto it = groups_.find(obu_id);
    return it == groups_.end() ? nullptr : &it->second;
}

Envelope Ttp::bootstrap(NodeId rsu_id, uint64_t now) const {
    return Envelope{id_, rsu_id, now, TreeReload{tree_.serialize(), root_}};
}

std::vector<Envelope> Ttp::publish(const std::vector<tree::SerialNumber>& added,
                                   const std::vector<tree::MutationReport>& reports, uint64_t now) {
    root_ = auth::sign_root(tree_, key_.signing, now, *scheme_);
    const bool reload = std::any_of(reports.begin(), reports.end(), [](const auto& r) { return r.reconstructed; });

    Payload payload;
    if (reload) {
        payload = TreeReload{tree_.serialize(), root_};
    } else {
        tree::MutationReport merged;
        merged.version = tree_.version();
        for (const auto& [key, digest] : merge_changes(reports)) {
            tree::ChangedNode c;
            c.path.digits = key.first;
            c.kind = tree::NodeKind(key.second);
            c.digest = digest;
            merged.changed.push_back(std::move(c));
        }
        payload = TreeDelta{added, tree::encode_delta(merged), root_};
    }

    std::vector<Envelope> out;
    for (const auto& [rsu, _] : rsus_)
        if (!revoked_rsus_.contains(rsu)) out.push_back(Envelope{id_, rsu, now, payload});
    return out;
}

std::vector<Envelope> Ttp::revoke_obu(NodeId obu_id, uint64_t now) {
    auto it = groups_.find(obu_id);
    if (it == groups_.end()) throw UnknownObu("unknown OBU " + std::to_string(obu_id));
    if (revoked_obus_.contains(obu_id)) return {};
    revoked_obus_.insert(obu_id);

    std::vector<tree::SerialNumber> added;
    std::vector<tree::MutationReport> reports;
    for (const auto& s : it->second.pseudonyms) {
        if (tree_.contains(s.value)) continue;
        reports.push_back(tree_.insert(s));
        revoked_at_version_[key_of(s.value)] = tree_.version();
        added.push_back(s);
    }
    if (added.empty()) return {};
    return publish(added, reports, now);
}

std::vector<Envelope> Ttp::periodic_update(uint64_t now) {
    const uint64_t before = tree_.version();
    auto rep = tree_.expire_sweep(now);
    if (tree_.version() == before) return {};
    for (auto it = revoked_at_version_.begin(); it != revoked_at_version_.end();) {
        if (!tree_.contains(ByteView(reinterpret_cast<const uint8_t*>(it->first.data()), it->first.size())))
            it = revoked_at_version_.erase(it);
        else
            ++it;
    }
    return publish({}, {rep}, now);
}

ImpeachmentOutcome Ttp::handle_impeachment(const Impeachment& imp, uint64_t now) {
    ImpeachmentOutcome out;
    auto fail = [&out](ImpeachmentError e) {
        out.error = e;
        return out;
    };
    auto rsu = rsus_.find(imp.accused_rsu_id);
    if (rsu == rsus_.end()) return fail(ImpeachmentError::unknown_rsu);

    const auth::OkResponse& ok = imp.conflicting_ok;
    if (ok.rsu_id != imp.accused_rsu_id || !scheme_->verify(auth::ok_message(ok), ok.signature, rsu->second))
        return fail(ImpeachmentError::bad_ok_signature);

    const auth::RevocationProof& proof = imp.contradicting_proof;
    if (!auth::verify_proof(proof, key_.verify, *scheme_).accepted()) return fail(ImpeachmentError::bad_proof);
    if (proof.leaf_serial != ok.queried_serial) return fail(ImpeachmentError::serial_mismatch);
    if (ok.tree_version > proof.signed_root.tree_version) return fail(ImpeachmentError::version_order);

    // The OK must claim a tree version that already contained the serial.
    auto when = revoked_at_version_.find(key_of(ok.queried_serial));
    if (when == revoked_at_version_.end() || ok.tree_version < when->second)
        return fail(ImpeachmentError::ok_predates_revocation);

    if (!revoked_rsus_.contains(imp.accused_rsu_id)) {
        revoked_rsus_.insert(imp.accused_rsu_id);
        out.notices.push_back(Envelope{id_, kBroadcast, now, RsuRevocationNotice{imp.accused_rsu_id}});
    }
    return out;
}

// ---------------------------------------------------------------- RSU

Rsu::Rsu(NodeId id, auth::KeyPair key, auth::VerifyKey ttp_key, bool cheating, const auth::SignatureScheme& scheme)
    : id_(id), key_(std::move(key)), ttp_key_(std::move(ttp_key)), cheating_(cheating), scheme_(&scheme) {}

bool Rsu::apply(const TreeReload& reload) {
    try {
        auto t = tree::RevocationTree::deserialize(reload.tree);
        if (t.root_digest() != reload.root.root_digest || t.version() != reload.root.tree_version ||
            !auth::verify_signed_root(reload.root, auth::TreeShape::of(t), ttp_key_, *scheme_)) {
            needs_reload_ = true;
            return false;
        }
        tree_ = std::move(t);
        root_ = reload.root;
        needs_reload_ = false;
        return true;
    } catch (const Error&) {
        needs_reload_ = true;
        return false;
    }
}

bool Rsu::apply(const TreeDelta& delta) {
    if (!tree_ || needs_reload_) return false;
    tree::RevocationTree candidate = *tree_;
    try {
        std::vector<tree::MutationReport> reports;
        for (const auto& s : delta.added) {
            reports.push_back(candidate.insert(s));
            if (reports.back().reconstructed) throw Error("delta implies reconstruction");
        }
        const auto claimed = tree::decode_delta(delta.delta);
        std::map<NodeKey, keccak::Digest> theirs;
        for (const auto& c : claimed.changed) theirs[{c.path.digits, uint8_t(c.kind)}] = c.digest;
        if (claimed.version != candidate.version() || theirs != merge_changes(reports)) throw Error("delta mismatch");
    } catch (const std::exception&) {
        needs_reload_ = true;
        return false;
    }
    if (candidate.root_digest() != delta.root.root_digest || candidate.version() != delta.root.tree_version ||
        !auth::verify_signed_root(delta.root, auth::TreeShape::of(candidate), ttp_key_, *scheme_)) {
        needs_reload_ = true;
        return false;
    }
    tree_ = std::move(candidate);
    root_ = delta.root;
    return true;
}

Answer Rsu::answer_query(ByteView serial, uint64_t now) const {
    const uint64_t version = tree_ ? tree_->version() : 0;
    if (!cheating_ && tree_) {
        const tree::Leaf* leaf = tree_->find(serial);
        if (leaf && !leaf->tombstoned && leaf->serial.expiry >= now)
            return *auth::build_proof(*tree_, serial, root_);
    }
    return auth::sign_ok(serial, version, now, key_.signing, *scheme_);
}

Envelope Rsu::relay_impeachment(const Impeachment& imp, NodeId ttp_id, uint64_t now) const {
    return Envelope{id_, ttp_id, now, ImpeachmentMsg{imp}};
}

// ---------------------------------------------------------------- OBU

Obu::Obu(NodeId id, auth::VerifyKey ttp_key, ObuConfig config, const auth::SignatureScheme& scheme)
    : id_(id), ttp_key_(std::move(ttp_key)), config_(config), scheme_(&scheme) {
    if (config_.trust_threshold == 0) throw ConfigInvalid("trust threshold must be positive");
}

void Obu::handle_rsu_revocation(NodeId rsu_id) {
    revoked_rsus_.insert(rsu_id);
    for (auto& [serial, p] : pending_)
        std::erase_if(p.oks, [rsu_id](const auth::OkResponse& ok) { return ok.rsu_id == rsu_id; });
}

Precheck Obu::precheck(ByteView serial) const {
    const Bytes key(serial.begin(), serial.end());
    if (cache_.unreliable.contains(key)) return Precheck::known_revoked;
    auto it = cache_.reliable.find(key);
    if (it != cache_.reliable.end() && it->second.tree_version == latest_version_) return Precheck::known_reliable;
    return Precheck::unknown;
}

void Obu::note_query(ByteView serial, NodeId rsu_id) { pending_[Bytes(serial.begin(), serial.end())].asked.insert(rsu_id); }

std::vector<Action> Obu::handle_answer(const Answer& answer, NodeId responding_rsu, uint64_t now) {
    if (revoked_rsus_.contains(responding_rsu)) {
        ++dropped_;
        return {};
    }
    if (const auto* proof = std::get_if<auth::RevocationProof>(&answer)) {
        if (!auth::verify_proof(*proof, ttp_key_, *scheme_).accepted()) {
            ++dropped_;
            return {};
        }
        return on_proof(*proof, responding_rsu);
    }
    const auto& ok = std::get<auth::OkResponse>(answer);
    auto key = rsu_keys_.find(responding_rsu);
    if (ok.rsu_id != responding_rsu || key == rsu_keys_.end() ||
        !auth::verify_ok(ok, key->second, now, config_.ok_max_age, *scheme_).accepted()) {
        ++dropped_;
        return {};
    }
    return on_ok(ok, now);
}

std::vector<Action> Obu::on_proof(const auth::RevocationProof& proof, NodeId rsu) {
    latest_version_ = std::max(latest_version_, proof.signed_root.tree_version);
    const Bytes& serial = proof.leaf_serial;
    std::vector<Action> out;

    // Every OK this OBU holds for the serial now contradicts a TTP proof.
    std::vector<auth::OkResponse> conflicting;
    if (auto it = pending_.find(serial); it != pending_.end()) {
        conflicting = it->second.oks;
        pending_.erase(it);
    }
    if (auto it = cache_.reliable.find(serial); it != cache_.reliable.end()) {
        conflicting.insert(conflicting.end(), it->second.oks.begin(), it->second.oks.end());
        cache_.reliable.erase(it);
    }
    std::set<NodeId> accused;
    for (const auto& ok : conflicting) {
        if (ok.tree_version > proof.signed_root.tree_version || revoked_rsus_.contains(ok.rsu_id)) continue;
        if (!accused.insert(ok.rsu_id).second) continue;
        out.push_back(action::Impeach{Impeachment{ok.rsu_id, ok, proof, id_}, rsu});
    }

    const bool fresh = !cache_.unreliable.contains(serial);
    cache_.unreliable[serial] = proof;
    if (fresh) out.push_back(action::CacheUpdate{serial, true});
    return out;
}

std::vector<Action> Obu::on_ok(const auth::OkResponse& ok, uint64_t now) {
    const Bytes& serial = ok.queried_serial;
    // A proof always dominates.
    if (cache_.unreliable.contains(serial)) return {};
    latest_version_ = std::max(latest_version_, ok.tree_version);

    if (auto it = cache_.reliable.find(serial); it != cache_.reliable.end()) {
        if (it->second.tree_version >= ok.tree_version) return {};
        cache_.reliable.erase(it);  // stale after a version bump: count again
    }

    PendingOk& p = pending_[serial];
    p.asked.insert(ok.rsu_id);
    const bool seen = std::any_of(p.oks.begin(), p.oks.end(), [&](const auto& o) { return o.rsu_id == ok.rsu_id; });
    if (!seen) p.oks.push_back(ok);

    if (p.count() >= config_.trust_threshold) {
        ReliableEntry entry;
        entry.checked_at = now;
        entry.oks = std::move(p.oks);
        entry.tree_version = 0;
        for (const auto& o : entry.oks) entry.tree_version = std::max(entry.tree_version, o.tree_version);
        pending_.erase(serial);
        cache_.reliable[serial] = std::move(entry);
        return {action::CacheUpdate{serial, false}};
    }
    return {action::AskAgain{serial, p.asked}};
}

}  // namespace krev::protocol
