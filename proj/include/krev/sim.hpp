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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "krev/bytes.hpp"
#include "krev/keccak.hpp"
#include "krev/protocol.hpp"

/// Seeded, time-stepped simulation of vehicles, RSU cells and status
/// queries, with side-by-side byte accounting for the tree scheme and a
/// plain CRL download baseline.
namespace krev::sim {

using protocol::NodeId;

struct ScenarioConfig {
    uint64_t n_vehicles = 1349;
    unsigned obu_penetration_percent = 100;
    uint64_t sim_duration_s = 1000;
    double area_km2 = 25;
    double revocation_rate_percent = 10;
    unsigned n_rsus = 25;
    unsigned rsu_rows = 5;  // rsu_cell_layout = ROWSxCOLS
    unsigned rsu_cols = 5;
    double speed_min_mps = 0;  // speed_range_mps = MIN-MAX
    double speed_max_mps = 33;
    double tx_range_m = 55;
    double query_rate = 0.05;  // probability that an encounter triggers mutual authentication
    unsigned pseudonyms_per_obu = 5;
    uint64_t pseudonym_lifetime_s = 0;  // 0: a vehicle keeps its first pseudonym
    unsigned trust_threshold = 3;
    unsigned n_cheating_rsus = 0;
    unsigned tree_k = 0;  // 0: choose_k
    uint64_t rsu_memory_bits = 10'000'000;
    uint64_t crl_epoch_s = 0;  // 0: one epoch per run
    uint64_t ok_max_age_s = auth::kDefaultOkMaxAge;

    // Carried for completeness, never read by the model.
    double tx_power_mw = 1.4;
    double rx_power_mw = 0.9;
    double sense_power_mw = 1.75e-6;
    double idle_power_mw = 0;
    double initial_energy_j = 75;

    uint64_t rng_seed = 1;

    void validate() const;  // throws ConfigInvalid
};

/// Flat key=value text, one key per line, '#' comments.
ScenarioConfig parse_scenario(std::string_view text, ScenarioConfig base = {});
std::string format_scenario(const ScenarioConfig& c);

struct Metrics {
    uint64_t seed = 0;
    unsigned penetration = 0;
    uint64_t queries = 0;
    uint64_t proof_bytes = 0;
    uint64_t ok_bytes = 0;
    uint64_t delta_bytes = 0;
    uint64_t crl_bytes = 0;
    uint64_t impeachments = 0;
    uint64_t runtime_ms = 0;

    // Not part of the CSV report.
    uint64_t n_obus = 0;
    uint64_t revoked_serials = 0;
    uint64_t encounters = 0;
    uint64_t query_bytes = 0;
    uint64_t proofs = 0;
    uint64_t oks = 0;
    uint64_t refused = 0;  // no usable RSU in reach
    uint64_t revoked_cached_reliable = 0;
    unsigned tree_k = 0;
    unsigned tree_depth = 0;
    std::vector<NodeId> cheating_rsus;
    std::vector<NodeId> revoked_rsus;

    uint64_t verification_bytes() const { return proof_bytes + ok_bytes; }
    bool operator==(const Metrics&) const = default;
};

struct QueryEvent {
    uint64_t time = 0;
    NodeId obu = 0;
    NodeId rsu = 0;
    Bytes serial;
    bool proof = false;
    uint32_t answer_bytes = 0;
};

struct RunOptions {
    bool timing = false;       // fill runtime_ms from a wall clock
    bool keep_replay = false;  // record every envelope
};

struct SimResult {
    Metrics metrics;
    std::vector<QueryEvent> queries;
    std::vector<protocol::Envelope> replay;
};

inline constexpr NodeId kTtpId = 1;
inline constexpr NodeId kFirstRsuId = 1000;
inline constexpr NodeId kFirstObuId = 100000;

/// Throws ConfigInvalid. Internally asserts (std::logic_error) that every
/// delivered proof and OK passes its verifier.
SimResult run_simulation(const ScenarioConfig& config, RunOptions options = {});

/// One run per (seed, penetration), sorted by penetration then seed.
std::vector<Metrics> run_sweep(const ScenarioConfig& base, std::span<const unsigned> penetrations,
                               std::span<const uint64_t> seeds, RunOptions options = {});

inline constexpr unsigned kCertBits = keccak::kDigestBits;
inline constexpr uint64_t kCrlSignatureBytes = keccak::kDigestBytes;

/// Body of a CRL listing s certificates.
uint64_t crl_size_bits(uint64_t s, unsigned cert_bits = kCertBits);

/// One full download: body plus signature.
uint64_t crl_download_bytes(uint64_t s, unsigned cert_bits = kCertBits,
                            uint64_t signature_bytes = kCrlSignatureBytes);

/// One download per OBU for its first query in each epoch; epoch_s = 0
/// means one epoch for the whole log.
uint64_t crl_baseline_bytes(std::span<const QueryEvent> log, uint64_t s, unsigned cert_bits = kCertBits,
                            uint64_t epoch_s = 0, uint64_t signature_bytes = kCrlSignatureBytes);

/// Authenticated content of a proof: the signed root digest, every listed
/// child digest and the signature. Empty counts mean a full tree.
uint64_t proof_size_bits(unsigned k, unsigned depth, unsigned n_bits, std::span<const unsigned> per_level_counts,
                         uint64_t signature_bits);

/// Exact length of auth::encode_proof for the given layout.
uint64_t proof_wire_bytes(size_t serial_bytes, unsigned depth, std::span<const unsigned> per_level_counts,
                          size_t signature_bytes);

struct Crossover {
    unsigned k = 0;
    uint64_t s = 0;
    uint64_t distribution_bytes = 0;  // one tree per RSU
    uint64_t answer_bytes = 0;        // worst case: a full-width proof
    uint64_t crl_bytes = 0;           // one download
    std::optional<uint64_t> queries;  // smallest count where the CRL costs more
};

/// Tree scheme: ship the tree to every RSU, then one proof per query. CRL:
/// one download per query.
Crossover find_crossover(unsigned k, uint64_t s, unsigned n_rsus, size_t serial_bytes = 8);

inline constexpr std::string_view kCsvHeader =
    "seed,penetration,queries,proof_bytes,ok_bytes,delta_bytes,crl_bytes,impeachments,runtime_ms";

/// Rows sorted ascending by penetration (then seed). Throws on empty input.
std::string emit_report(std::span<const Metrics> metrics);
std::vector<Metrics> parse_report(std::string_view csv);  // throws DecodeError

}  // namespace krev::sim
