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

#include "doctest.h"
#include "krev/auth.hpp"
#include "krev/error.hpp"
#include "krev/sim.hpp"
#include "krev/wire.hpp"

using namespace krev;
using namespace krev::sim;

namespace {

ScenarioConfig small() {
    ScenarioConfig c;
    c.n_vehicles = 300;
    c.sim_duration_s = 300;
    c.area_km2 = 4;
    c.n_rsus = 4;
    c.rsu_rows = 2;
    c.rsu_cols = 2;
    c.query_rate = 0.3;
    return c;
}

}  // namespace

TEST_CASE("same config and seed give identical results") {
    const ScenarioConfig c = small();
    const SimResult a = run_simulation(c);
    const SimResult b = run_simulation(c);
    CHECK(a.metrics == b.metrics);
    CHECK(a.metrics.queries > 0);
    REQUIRE(a.queries.size() == b.queries.size());
    for (size_t i = 0; i < a.queries.size(); ++i) CHECK(a.queries[i].serial == b.queries[i].serial);
    const Metrics ms[] = {a.metrics};
    CHECK(emit_report(ms) == emit_report(std::span<const Metrics>(&b.metrics, 1)));

    ScenarioConfig other = c;
    other.rng_seed = 2;
    CHECK_FALSE(run_simulation(other).metrics == a.metrics);
}

TEST_CASE("an empty population produces zero counters") {
    ScenarioConfig c = small();
    c.n_vehicles = 0;
    const Metrics m = run_simulation(c).metrics;
    CHECK(m.queries == 0);
    CHECK(m.proof_bytes == 0);
    CHECK(m.ok_bytes == 0);
    CHECK(m.delta_bytes == 0);
    CHECK(m.crl_bytes == 0);
    CHECK(m.impeachments == 0);
    CHECK(m.encounters == 0);
}

TEST_CASE("both schemes are charged over the same query log") {
    const SimResult r = run_simulation(small());
    const Metrics& m = r.metrics;
    CHECK(r.queries.size() == m.queries);
    uint64_t proof = 0, ok = 0, proofs = 0;
    std::set<NodeId> obus;
    for (const auto& e : r.queries) {
        (e.proof ? proof : ok) += e.answer_bytes;
        proofs += e.proof;
        obus.insert(e.obu);
    }
    CHECK(proof == m.proof_bytes);
    CHECK(ok == m.ok_bytes);
    CHECK(proofs == m.proofs);
    CHECK(m.crl_bytes == obus.size() * crl_download_bytes(m.revoked_serials));
    CHECK(m.revoked_serials == 30);  // ceil(10% of 300) pseudonyms, whole groups of 5
    CHECK(m.impeachments == 0);
    CHECK(m.revoked_cached_reliable == 0);
}

TEST_CASE("CRL arithmetic") {
    CHECK(crl_size_bits(1'000'000'000) == 224'000'000'000ull);
    CHECK(crl_size_bits(135) == 30240);
    CHECK(crl_size_bits(0) == 0);
    CHECK(crl_download_bytes(0) == kCrlSignatureBytes);
    CHECK(crl_download_bytes(135) == 3780 + kCrlSignatureBytes);
    CHECK(crl_download_bytes(1'000'000'000, 224, 0) * 8 == 224'000'000'000ull);

    std::vector<QueryEvent> log = {{0, 1, 9, {}, false, 0}, {5, 1, 9, {}, false, 0}, {7, 2, 9, {}, true, 0},
                                   {150, 1, 9, {}, false, 0}};
    CHECK(crl_baseline_bytes(log, 135) == 2 * crl_download_bytes(135));
    CHECK(crl_baseline_bytes(log, 135, 224, 100) == 3 * crl_download_bytes(135));
    CHECK(crl_baseline_bytes({}, 135) == 0);
    CHECK(crl_baseline_bytes(log, 0) == 2 * kCrlSignatureBytes);
}

TEST_CASE("proof size closed form") {
    CHECK(proof_size_bits(5, 4, 224, {}, 0) == 4704);
    CHECK(proof_size_bits(5, 4, 224, {}, 224) == 4704 + 224);
    CHECK(proof_size_bits(2, 1, 224, {}, 0) == 224 * 3);

    const auto key = auth::default_scheme().generate(1, 1);
    for (unsigned k : {2u, 3u, 5u, 8u}) {
        for (uint64_t s : {1u, 2u, 7u, 25u, 64u, 135u}) {
            tree::RevocationTree t(k);
            for (uint64_t i = 0; i < s; ++i) {
                ByteWriter w;
                w.u64(i);
                t.insert({w.take(), 0});
            }
            const auto root = auth::sign_root(t, key.signing, 1);
            for (uint64_t i = 0; i < s; i += 1 + s / 5) {
                ByteWriter w;
                w.u64(i);
                const auto proof = *auth::build_proof(t, w.view(), root);
                std::vector<unsigned> counts;
                for (const auto& l : proof.levels) counts.push_back(unsigned(l.digests.size()));
                const Bytes wire = auth::encode_proof(proof);
                CHECK(proof_wire_bytes(8, t.depth(), counts, root.signature.size()) == wire.size());

                uint64_t listed = 0;
                for (unsigned c : counts) listed += c;
                CHECK(proof_size_bits(k, t.depth(), 224, counts, root.signature.size() * 8) ==
                      224 * (1 + listed) + root.signature.size() * 8);
            }
        }
    }
}

TEST_CASE("CSV report") {
    Metrics m;
    m.seed = 3;
    m.penetration = 40;
    m.queries = 11;
    m.proof_bytes = 22;
    m.ok_bytes = 33;
    m.delta_bytes = 44;
    m.crl_bytes = 55;
    m.impeachments = 1;
    m.runtime_ms = 7;
    const std::string one = emit_report(std::span<const Metrics>(&m, 1));
    CHECK(one == std::string(kCsvHeader) + "\n3,40,11,22,33,44,55,1,7\n");
    CHECK(parse_report(one).at(0) == m);
    CHECK_THROWS(emit_report({}));

    std::vector<Metrics> many;
    for (unsigned p = 100; p >= 10; p -= 10) {
        Metrics x = m;
        x.penetration = p;
        x.queries = p * 3;
        many.push_back(x);
    }
    const std::string csv = emit_report(many);
    const auto back = parse_report(csv);
    REQUIRE(back.size() == 10);
    for (size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].penetration == 10 * (i + 1));
        CHECK(back[i].queries == back[i].penetration * 3);
    }
    CHECK_THROWS_AS(parse_report("nope\n1,2\n"), DecodeError);
    CHECK_THROWS_AS(parse_report(std::string(kCsvHeader) + "\n1,2,3\n"), DecodeError);
    CHECK_THROWS_AS(parse_report(std::string(kCsvHeader) + "\n1,2,3,4,5,6,7,8,x\n"), DecodeError);
}

TEST_CASE("queries never decrease with penetration") {
    const unsigned pens[] = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    const uint64_t seeds[] = {1, 2};
    const auto rows = run_sweep(small(), pens, seeds);
    REQUIRE(rows.size() == 20);
    for (uint64_t seed : seeds) {
        uint64_t last = 0;
        for (const auto& r : rows) {
            if (r.seed != seed) continue;
            CHECK(r.queries >= last);
            last = r.queries;
        }
    }
}

TEST_CASE("crossover exists and is tight") {
    for (unsigned k : {2u, 3u, 5u, 8u}) {
        for (uint64_t s : {135u, 1000u, 100000u}) {
            const Crossover c = find_crossover(k, s, 25);
            CAPTURE(k);
            CAPTURE(s);
            REQUIRE(c.queries.has_value());
            const uint64_t q = *c.queries;
            CHECK(q * c.crl_bytes > c.distribution_bytes + q * c.answer_bytes);
            CHECK((q - 1) * c.crl_bytes <= c.distribution_bytes + (q - 1) * c.answer_bytes);
        }
    }
    CHECK_FALSE(find_crossover(2, 1, 25).queries.has_value());  // a one-entry CRL beats any proof
}

TEST_CASE("scenario files") {
    const ScenarioConfig d;
    CHECK(parse_scenario(format_scenario(d)).n_vehicles == 1349);
    const ScenarioConfig c = parse_scenario(
        "# comment\n"
        "n_vehicles = 10\n"
        "rsu_cell_layout=3x2\n"
        "n_rsus=6\n"
        "speed_range_mps=[5,20]\n"
        "query_rate=0.5\n");
    CHECK(c.n_vehicles == 10);
    CHECK(c.rsu_rows == 3);
    CHECK(c.rsu_cols == 2);
    CHECK(c.speed_min_mps == 5);
    CHECK(c.speed_max_mps == 20);
    CHECK(format_scenario(parse_scenario(format_scenario(c))) == format_scenario(c));

    CHECK_THROWS_AS(parse_scenario("n_rsus=7\n"), ConfigInvalid);
    CHECK_THROWS_AS(parse_scenario("obu_penetration_percent=0\n"), ConfigInvalid);
    CHECK_THROWS_AS(parse_scenario("bogus=1\n"), ConfigInvalid);
    CHECK_THROWS_AS(parse_scenario("n_vehicles=ten\n"), ConfigInvalid);
    CHECK_THROWS_AS(parse_scenario("just words\n"), ConfigInvalid);
    ScenarioConfig bad = d;
    bad.query_rate = 1.5;
    CHECK_THROWS_AS(run_simulation(bad), ConfigInvalid);
}

TEST_CASE("a cheating RSU gets impeached inside the simulation") {
    ScenarioConfig c = small();
    c.n_cheating_rsus = 1;
    const Metrics m = run_simulation(c).metrics;
    REQUIRE(m.cheating_rsus.size() == 1);
    CHECK(m.revoked_rsus == m.cheating_rsus);
    CHECK(m.impeachments >= 1);
    CHECK(m.revoked_cached_reliable == 0);
}

TEST_CASE("replay log matches the counters") {
    ScenarioConfig c = small();
    c.sim_duration_s = 60;
    const SimResult r = run_simulation(c, {false, true});
    const Bytes log = protocol::encode_replay_log(r.replay);
    const auto back = protocol::decode_replay_log(log);
    CHECK(back == r.replay);
    const auto queries = std::count_if(back.begin(), back.end(),
                                       [](const auto& e) { return e.type() == protocol::MsgType::status_query; });
    CHECK(uint64_t(queries) == r.metrics.queries);
}
