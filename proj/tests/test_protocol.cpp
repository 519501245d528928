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

#include <algorithm>
#include <random>

#include "doctest.h"
#include "krev/error.hpp"
#include "krev/protocol.hpp"
#include "krev/wire.hpp"

using namespace krev;
using namespace krev::protocol;

namespace {

constexpr NodeId kTtp = 1;
constexpr uint64_t kFar = 1'000'000'000;

Bytes pseudonym(NodeId obu, unsigned i) {
    ByteWriter w;
    w.raw(std::string_view("pn"));
    w.u32(obu);
    w.u8(uint8_t(i));
    return w.take();
}

PseudonymGroup group_for(NodeId obu, unsigned count = 5, uint64_t expiry = kFar) {
    PseudonymGroup g;
    g.obu_id = obu;
    for (unsigned i = 0; i < count; ++i) {
        g.pseudonyms.push_back({pseudonym(obu, i), expiry});
        g.key_handles.push_back(Bytes{uint8_t(i)});
    }
    return g;
}

// One TTP, some RSUs, some OBUs, delivering envelopes synchronously.
struct World {
    explicit World(unsigned k, unsigned honest, unsigned cheaters, unsigned obus = 10, unsigned threshold = 3)
        : ttp(kTtp, k, auth::default_scheme().generate(kTtp, 1)) {
        for (unsigned i = 0; i < honest + cheaters; ++i) {
            const NodeId id = 100 + i;
            rsus.emplace_back(id, auth::default_scheme().generate(id, 2), ttp.verify_key(), i >= honest);
            ttp.register_rsu(id, rsus.back().verify_key());
            deliver(ttp.bootstrap(id, 0));
        }
        for (unsigned i = 0; i < obus; ++i) {
            const NodeId id = 1000 + i;
            ttp.register_group(group_for(id));
            obu.emplace_back(id, ttp.verify_key(), ObuConfig{threshold, 60});
            for (const auto& r : rsus) obu.back().learn_rsu_key(r.id(), r.verify_key());
        }
    }

    Rsu& rsu(NodeId id) { return rsus.at(id - 100); }

    void deliver(const Envelope& e) {
        log.push_back(e);
        if (e.receiver == kBroadcast) {
            if (const auto* n = std::get_if<RsuRevocationNotice>(&e.payload))
                for (auto& o : obu) o.handle_rsu_revocation(n->rsu_id);
            return;
        }
        if (e.receiver == kTtp) {
            const auto& imp = std::get<ImpeachmentMsg>(e.payload).impeachment;
            auto outcome = ttp.handle_impeachment(imp, e.sim_time);
            last_impeachment = outcome.error;
            for (const auto& n : outcome.notices) deliver(n);
            return;
        }
        Rsu& r = rsu(e.receiver);
        if (const auto* d = std::get_if<TreeDelta>(&e.payload)) {
            if (!r.apply(*d)) deliver(ttp.bootstrap(r.id(), e.sim_time));
        } else if (const auto* t = std::get_if<TreeReload>(&e.payload)) {
            r.apply(*t);
        }
    }

    void deliver(const std::vector<Envelope>& es) {
        for (const auto& e : es) deliver(e);
    }

    // Query one RSU on behalf of an OBU and act on the answer. Returns the
    // actions produced.
    std::vector<Action> query(Obu& o, NodeId rsu_id, ByteView serial, uint64_t now) {
        o.note_query(serial, rsu_id);
        const Answer a = rsu(rsu_id).answer_query(serial, now);
        auto actions = o.handle_answer(a, rsu_id, now);
        for (const auto& act : actions)
            if (const auto* imp = std::get_if<action::Impeach>(&act))
                deliver(rsu(imp->via_rsu).relay_impeachment(imp->impeachment, kTtp, now));
        return actions;
    }

    Ttp ttp;
    std::vector<Rsu> rsus;
    std::vector<Obu> obu;
    std::vector<Envelope> log;
    ImpeachmentError last_impeachment = ImpeachmentError::none;
};

template <class T>
size_t count_actions(const std::vector<Action>& v) {
    return size_t(std::count_if(v.begin(), v.end(), [](const Action& a) { return std::holds_alternative<T>(a); }));
}

}  // namespace

TEST_CASE("revocation reaches every RSU and their roots converge") {
    World w(3, 4, 0);
    for (NodeId obu = 1000; obu < 1006; ++obu) w.deliver(w.ttp.revoke_obu(obu, obu));
    CHECK(w.ttp.tree().size() == 30);
    for (const auto& r : w.rsus) {
        CHECK_FALSE(r.needs_reload());
        CHECK(r.tree().root_digest() == w.ttp.tree().root_digest());
        CHECK(r.signed_root() == w.ttp.signed_root());
    }
    bool saw_delta = false, saw_reload = false;
    for (const auto& e : w.log) {
        saw_delta |= e.type() == MsgType::tree_delta;
        saw_reload |= e.type() == MsgType::tree_reload;
    }
    CHECK(saw_delta);
    CHECK(saw_reload);
}

TEST_CASE("revoke_obu is idempotent and rejects unknown OBUs") {
    World w(4, 2, 0);
    CHECK_FALSE(w.ttp.revoke_obu(1000, 1).empty());
    const uint64_t v = w.ttp.tree().version();
    CHECK(w.ttp.revoke_obu(1000, 2).empty());
    CHECK(w.ttp.tree().version() == v);
    CHECK_THROWS_AS(w.ttp.revoke_obu(4242, 3), UnknownObu);
}

TEST_CASE("tampered deltas are refused and trigger a reload") {
    World w(4, 1, 0);
    auto updates = w.ttp.revoke_obu(1000, 1);
    w.deliver(updates);
    updates = w.ttp.revoke_obu(1001, 2);
    REQUIRE(updates.size() == 1);
    const auto* delta = std::get_if<TreeDelta>(&updates[0].payload);
    REQUIRE(delta != nullptr);
    {
        TreeDelta bad = *delta;
        bad.delta.back() ^= 1;
        Rsu copy = w.rsus[0];
        CHECK_FALSE(copy.apply(bad));
        CHECK(copy.needs_reload());
        CHECK(copy.apply(std::get<TreeReload>(w.ttp.bootstrap(100, 2).payload)));
        CHECK(copy.tree().root_digest() == w.ttp.tree().root_digest());
    }
    w.deliver(updates);
    CHECK(w.rsus[0].tree().root_digest() == w.ttp.tree().root_digest());

    TreeReload forged{w.ttp.tree().serialize(), w.ttp.signed_root()};
    forged.root.signature[0] ^= 1;
    Rsu copy = w.rsus[0];
    CHECK_FALSE(copy.apply(forged));
}

TEST_CASE("honest RSUs answer proofs for revoked and OKs for the rest") {
    World w(3, 3, 0);
    w.deliver(w.ttp.revoke_obu(1000, 1));
    Obu& o = w.obu[5];

    auto acts = w.query(o, 100, pseudonym(1000, 2), 10);
    CHECK(count_actions<action::CacheUpdate>(acts) == 1);
    CHECK(o.precheck(pseudonym(1000, 2)) == Precheck::known_revoked);

    const Bytes good = pseudonym(1003, 0);
    CHECK(o.precheck(good) == Precheck::unknown);
    CHECK_FALSE(o.allow_without_rsu(good));
    acts = w.query(o, 100, good, 11);
    CHECK(count_actions<action::AskAgain>(acts) == 1);
    acts = w.query(o, 100, good, 12);  // same RSU again does not count twice
    CHECK(o.pending().at(good).count() == 1);
    acts = w.query(o, 101, good, 13);
    CHECK(o.pending().at(good).count() == 2);
    acts = w.query(o, 102, good, 14);
    CHECK(count_actions<action::CacheUpdate>(acts) == 1);
    CHECK(o.precheck(good) == Precheck::known_reliable);
    CHECK(o.allow_without_rsu(good));
    CHECK_FALSE(o.pending().contains(good));

    // A later proof from a newer tree still dominates.
    w.deliver(w.ttp.revoke_obu(1003, 20));
    acts = w.query(o, 101, good, 21);
    CHECK(o.precheck(good) == Precheck::known_revoked);
    CHECK(o.cache().unreliable.contains(good));
    CHECK_FALSE(o.cache().reliable.contains(good));
    CHECK(w.last_impeachment != ImpeachmentError::none);  // honest OKs predate the revocation
    CHECK_FALSE(w.ttp.is_rsu_revoked(100));
}

TEST_CASE("expired leaves are not proven") {
    World w(3, 1, 0, 2);
    PseudonymGroup g = group_for(77, 2, 50);
    w.ttp.register_group(g);
    w.deliver(w.ttp.revoke_obu(77, 1));
    CHECK(std::holds_alternative<auth::RevocationProof>(w.rsus[0].answer_query(pseudonym(77, 0), 50)));
    CHECK(std::holds_alternative<auth::OkResponse>(w.rsus[0].answer_query(pseudonym(77, 0), 51)));
}

TEST_CASE("stale and forged answers are dropped") {
    World w(3, 2, 0, 1);
    Obu& o = w.obu[0];
    const Bytes s = pseudonym(1000, 1);
    const Answer old = w.rsus[0].answer_query(s, 0);
    CHECK(o.handle_answer(old, 100, 61).empty());
    CHECK(o.handle_answer(old, 101, 0).empty());  // signed by 100, presented as 101
    CHECK(o.dropped_answers() == 2);

    w.deliver(w.ttp.revoke_obu(1000, 1));
    auto proof = std::get<auth::RevocationProof>(w.rsus[0].answer_query(s, 2));
    proof.leaf_serial = pseudonym(1000, 9);
    CHECK(o.handle_answer(proof, 100, 2).empty());
    CHECK(o.precheck(pseudonym(1000, 9)) == Precheck::unknown);
}

TEST_CASE("a cheating RSU is impeached and its OKs stop counting") {
    World w(3, 3, 1, 2);
    const NodeId cheater = 103;
    w.deliver(w.ttp.revoke_obu(1000, 1));
    Obu& o = w.obu[1];
    const Bytes revoked = pseudonym(1000, 3);

    auto acts = w.query(o, cheater, revoked, 5);
    CHECK(count_actions<action::AskAgain>(acts) == 1);
    CHECK(o.precheck(revoked) == Precheck::unknown);

    acts = w.query(o, 100, revoked, 6);
    CHECK(count_actions<action::Impeach>(acts) == 1);
    CHECK(w.last_impeachment == ImpeachmentError::none);
    CHECK(w.ttp.is_rsu_revoked(cheater));
    CHECK(o.knows_revoked_rsu(cheater));
    CHECK(w.obu[0].knows_revoked_rsu(cheater));
    CHECK(o.precheck(revoked) == Precheck::known_revoked);

    // Deltas no longer go to the revoked RSU.
    const auto updates = w.ttp.revoke_obu(1001, 7);
    CHECK(updates.size() == 3);
    for (const auto& e : updates) CHECK(e.receiver != cheater);

    // Answers from a revoked RSU are ignored.
    const Answer late = w.rsu(cheater).answer_query(pseudonym(1001, 0), 8);
    CHECK(w.obu[0].handle_answer(late, cheater, 8).empty());
}

TEST_CASE("impeachment validation") {
    World w(3, 2, 1, 1);
    w.deliver(w.ttp.revoke_obu(1000, 1));
    const Bytes s = pseudonym(1000, 0);
    const auto ok = std::get<auth::OkResponse>(w.rsu(102).answer_query(s, 5));
    const auto proof = std::get<auth::RevocationProof>(w.rsu(100).answer_query(s, 5));
    Impeachment good{102, ok, proof, 1000};

    SUBCASE("wrong accused") {
        Impeachment imp = good;
        imp.accused_rsu_id = 101;
        CHECK(w.ttp.handle_impeachment(imp, 6).error == ImpeachmentError::bad_ok_signature);
        imp.accused_rsu_id = 555;
        CHECK(w.ttp.handle_impeachment(imp, 6).error == ImpeachmentError::unknown_rsu);
    }
    SUBCASE("forged OK") {
        Impeachment imp = good;
        imp.conflicting_ok.signature[0] ^= 1;
        CHECK(w.ttp.handle_impeachment(imp, 6).error == ImpeachmentError::bad_ok_signature);
    }
    SUBCASE("bad proof") {
        Impeachment imp = good;
        imp.contradicting_proof.signed_root.signature[0] ^= 1;
        CHECK(w.ttp.handle_impeachment(imp, 6).error == ImpeachmentError::bad_proof);
    }
    SUBCASE("serial mismatch") {
        Impeachment imp = good;
        imp.conflicting_ok = std::get<auth::OkResponse>(w.rsu(102).answer_query(pseudonym(1000, 1), 5));
        CHECK(w.ttp.handle_impeachment(imp, 6).error == ImpeachmentError::serial_mismatch);
    }
    SUBCASE("OK newer than the proof") {
        w.ttp.register_group(group_for(1001));
        w.deliver(w.ttp.revoke_obu(1001, 3));
        Impeachment imp = good;
        imp.conflicting_ok = std::get<auth::OkResponse>(w.rsu(102).answer_query(s, 5));
        CHECK(imp.conflicting_ok.tree_version > proof.signed_root.tree_version);
        CHECK(w.ttp.handle_impeachment(imp, 6).error == ImpeachmentError::version_order);
    }
    SUBCASE("honest OK given before the revocation") {
        World w2(3, 1, 0, 1);
        const auto early = std::get<auth::OkResponse>(w2.rsus[0].answer_query(s, 0));
        w2.deliver(w2.ttp.revoke_obu(1000, 1));
        const auto p = std::get<auth::RevocationProof>(w2.rsus[0].answer_query(s, 2));
        CHECK(w2.ttp.handle_impeachment({100, early, p, 1000}, 3).error ==
              ImpeachmentError::ok_predates_revocation);
        CHECK_FALSE(w2.ttp.is_rsu_revoked(100));
    }
    SUBCASE("valid") {
        const auto out = w.ttp.handle_impeachment(good, 6);
        CHECK(out.accepted());
        REQUIRE(out.notices.size() == 1);
        CHECK(out.notices[0].receiver == kBroadcast);
        CHECK(w.ttp.is_rsu_revoked(102));
        CHECK(w.ttp.handle_impeachment(good, 7).notices.empty());
    }
}

TEST_CASE("honest world produces no impeachments") {
    std::mt19937_64 rng(3);
    World w(3, 4, 0, 20);
    for (NodeId obu = 1000; obu < 1005; ++obu) w.deliver(w.ttp.revoke_obu(obu, 1));
    size_t impeach = 0;
    for (int i = 0; i < 500; ++i) {
        Obu& o = w.obu[rng() % w.obu.size()];
        const Bytes s = pseudonym(NodeId(1000 + rng() % 20), unsigned(rng() % 5));
        if (o.precheck(s) != Precheck::unknown) continue;
        impeach += count_actions<action::Impeach>(w.query(o, NodeId(100 + rng() % 4), s, 10 + uint64_t(i) / 20));
    }
    CHECK(impeach == 0);
    for (NodeId r = 100; r < 104; ++r) CHECK_FALSE(w.ttp.is_rsu_revoked(r));
}

TEST_CASE("periodic update only publishes structural change") {
    World w(2, 2, 0, 0);
    w.ttp.register_group(group_for(1, 2, 100));
    w.ttp.register_group(group_for(2, 2, 500));
    w.deliver(w.ttp.revoke_obu(1, 1));
    w.deliver(w.ttp.revoke_obu(2, 2));
    CHECK(w.ttp.periodic_update(50).empty());
    const auto ups = w.ttp.periodic_update(101);
    CHECK(ups.size() == 2);
    w.deliver(ups);
    CHECK(w.ttp.tree().size() == 2);
    for (const auto& r : w.rsus) CHECK(r.tree().root_digest() == w.ttp.tree().root_digest());
}

TEST_CASE("envelopes and the replay log round-trip") {
    World w(4, 2, 1, 2);
    w.deliver(w.ttp.revoke_obu(1000, 1));
    w.deliver(w.ttp.revoke_obu(1001, 2));
    Obu& o = w.obu[1];
    w.query(o, 102, pseudonym(1000, 0), 3);
    w.query(o, 100, pseudonym(1000, 0), 4);
    w.log.push_back(Envelope{1000, 100, 9, StatusQuery{pseudonym(5, 5)}});
    w.log.push_back(
        Envelope{100, 1000, 9, ProofAnswer{std::get<auth::RevocationProof>(w.rsus[0].answer_query(pseudonym(1000, 0), 9))}});
    w.log.push_back(Envelope{100, 1000, 9, OkAnswer{std::get<auth::OkResponse>(w.rsus[0].answer_query(pseudonym(9, 9), 9))}});

    std::set<MsgType> types;
    for (const auto& e : w.log) {
        types.insert(e.type());
        CHECK(decode_envelope(encode_envelope(e)) == e);
    }
    CHECK(types.size() == 7);

    const Bytes replay = encode_replay_log(w.log);
    CHECK(decode_replay_log(replay) == w.log);
    Bytes cut = replay;
    cut.pop_back();
    CHECK_THROWS_AS(decode_replay_log(cut), DecodeError);
    Bytes bad = encode_envelope(w.log[0]);
    bad[0] = 42;
    CHECK_THROWS_AS(decode_envelope(bad), DecodeError);
}
