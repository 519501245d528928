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

#include "krev/sim.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "krev/error.hpp"
#include "krev/tree.hpp"
#include "krev/wire.hpp"

namespace krev::sim {

namespace {

    uint64_t splitmix(uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    uint64_t mix(uint64_t a, uint64_t b, uint64_t c = 0, uint64_t d = 0) {
        return splitmix(splitmix(splitmix(splitmix(a) ^ b) ^ c) ^ d);
    }

    double unit(uint64_t x) { return double(x >> 11) * 0x1.0p-53; }

    // Counter-based stream; identical on every platform.
    struct Rng {
        uint64_t state;
        uint64_t next() { return splitmix(state++); }
        double uniform() { return unit(next()); }
        uint64_t below(uint64_t n) { return n == 0 ? 0 : next() % n; }
    };

    std::vector<uint64_t> permutation(uint64_t n, uint64_t seed) {
        std::vector<uint64_t> p(n);
        std::iota(p.begin(), p.end(), 0);
        Rng rng{seed};
        for (uint64_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
        return p;
    }

    // Stream tags keep the per-purpose randomness independent.
    constexpr uint64_t kTagMobility = 0x6d6f62;
    constexpr uint64_t kTagEquip = 0x657175;
    constexpr uint64_t kTagRevoke = 0x726576;
    constexpr uint64_t kTagAuth = 0x617574;
    constexpr uint64_t kTagCheat = 0x636874;

    Bytes pseudonym_serial(uint64_t vehicle, unsigned index) {
        ByteWriter w;
        w.u32(uint32_t(vehicle));
        w.u32(index);
        return w.take();
    }

    struct Vehicle {
        int64_t x = 0, y = 0;    // millimetres
        int64_t vx = 0, vy = 0;  // millimetres per second
        uint32_t segment_left = 0;
        unsigned cell = 0;
        Rng rng{0};
    };

    void new_segment(Vehicle& v, const ScenarioConfig& c) {
        const double speed = c.speed_min_mps + (c.speed_max_mps - c.speed_min_mps) * v.rng.uniform();
        double dx, dy, r2;
        do {
            dx = 2 * v.rng.uniform() - 1;
            dy = 2 * v.rng.uniform() - 1;
            r2 = dx * dx + dy * dy;
        } while (r2 > 1 || r2 < 1e-6);
        const double len = std::sqrt(r2);
        v.vx = std::llround(speed * 1000 * dx / len);
        v.vy = std::llround(speed * 1000 * dy / len);
        v.segment_left = uint32_t(10 + v.rng.below(111));
    }

    void reflect(int64_t& pos, int64_t& vel, int64_t side) {
        if (pos < 0) {
            pos = -pos;
            vel = -vel;
        } else if (pos > side) {
            pos = 2 * side - pos;
            vel = -vel;
        }
        pos = std::clamp<int64_t>(pos, 0, side);
    }

    // ---- scenario text

    template <class T>
    T parse_number(std::string_view key, std::string_view v) {
        T out{};
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc() || p != v.data() + v.size())
            throw ConfigInvalid("bad value for " + std::string(key) + ": '" + std::string(v) + "'");
        return out;
    }

    std::string_view trim(std::string_view s) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
        return s;
    }

    std::pair<std::string_view, std::string_view> split_pair(std::string_view key, std::string_view v,
                                                             std::string_view seps) {
        if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
        const size_t at = v.find_first_of(seps, 1);
        if (at == std::string_view::npos) throw ConfigInvalid("bad value for " + std::string(key));
        return {trim(v.substr(0, at)), trim(v.substr(at + 1))};
    }

    std::string fmt(double d) {
        char buf[64];
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
        return std::string(buf, p);
    }

}  // namespace

void ScenarioConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigInvalid(m); };
    if (obu_penetration_percent < 1 || obu_penetration_percent > 100) fail("obu_penetration_percent must be in [1, 100]");
    if (!(revocation_rate_percent >= 0 && revocation_rate_percent <= 100))
        fail("revocation_rate_percent must be in [0, 100]");
    if (n_vehicles > 0xffffffffull) fail("n_vehicles too large");
    if (sim_duration_s == 0) fail("sim_duration_s must be positive");
    if (!(area_km2 > 0)) fail("area_km2 must be positive");
    if (n_rsus == 0 || rsu_rows == 0 || rsu_cols == 0) fail("RSU counts must be positive");
    if (uint64_t(rsu_rows) * rsu_cols != n_rsus) fail("rsu_cell_layout does not match n_rsus");
    if (!(speed_min_mps >= 0 && speed_max_mps >= speed_min_mps && speed_max_mps < 1000))
        fail("speed_range_mps must satisfy 0 <= min <= max");
    if (!(tx_range_m > 0)) fail("tx_range_m must be positive");
    if (!(query_rate >= 0 && query_rate <= 1)) fail("query_rate must be in [0, 1]");
    if (pseudonyms_per_obu == 0) fail("pseudonyms_per_obu must be positive");
    if (trust_threshold == 0) fail("trust_threshold must be positive");
    if (n_cheating_rsus > n_rsus) fail("n_cheating_rsus exceeds n_rsus");
    if (tree_k != 0 && (tree_k < 2 || tree_k > tree::kMaxK)) fail("tree_k must be 0 or in [2, 255]");
    if (rsu_memory_bits == 0) fail("rsu_memory_bits must be positive");
    if (ok_max_age_s == 0) fail("ok_max_age_s must be positive");
}

ScenarioConfig parse_scenario(std::string_view text, ScenarioConfig c) {
    size_t line_no = 0;
    while (!text.empty()) {
        const size_t nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigInvalid("line " + std::to_string(line_no) + ": expected key=value");
        const std::string_view key = trim(line.substr(0, eq));
        const std::string_view v = trim(line.substr(eq + 1));

        if (key == "n_vehicles") c.n_vehicles = parse_number<uint64_t>(key, v);
        else if (key == "obu_penetration_percent") c.obu_penetration_percent = parse_number<unsigned>(key, v);
        else if (key == "sim_duration_s") c.sim_duration_s = parse_number<uint64_t>(key, v);
        else if (key == "area_km2") c.area_km2 = parse_number<double>(key, v);
        else if (key == "revocation_rate_percent") c.revocation_rate_percent = parse_number<double>(key, v);
        else if (key == "n_rsus") c.n_rsus = parse_number<unsigned>(key, v);
        else if (key == "rsu_cell_layout") {
            auto [r, col] = split_pair(key, v, "xX");
            c.rsu_rows = parse_number<unsigned>(key, r);
            c.rsu_cols = parse_number<unsigned>(key, col);
        } else if (key == "speed_range_mps") {
            auto [lo, hi] = split_pair(key, v, "-,");
            c.speed_min_mps = parse_number<double>(key, lo);
            c.speed_max_mps = parse_number<double>(key, hi);
        } else if (key == "tx_range_m") c.tx_range_m = parse_number<double>(key, v);
        else if (key == "query_rate") c.query_rate = parse_number<double>(key, v);
        else if (key == "pseudonyms_per_obu") c.pseudonyms_per_obu = parse_number<unsigned>(key, v);
        else if (key == "pseudonym_lifetime_s") c.pseudonym_lifetime_s = parse_number<uint64_t>(key, v);
        else if (key == "trust_threshold") c.trust_threshold = parse_number<unsigned>(key, v);
        else if (key == "n_cheating_rsus") c.n_cheating_rsus = parse_number<unsigned>(key, v);
        else if (key == "tree_k") c.tree_k = parse_number<unsigned>(key, v);
        else if (key == "rsu_memory_bits") c.rsu_memory_bits = parse_number<uint64_t>(key, v);
        else if (key == "crl_epoch_s") c.crl_epoch_s = parse_number<uint64_t>(key, v);
        else if (key == "ok_max_age_s") c.ok_max_age_s = parse_number<uint64_t>(key, v);
        else if (key == "tx_power_mw") c.tx_power_mw = parse_number<double>(key, v);
        else if (key == "rx_power_mw") c.rx_power_mw = parse_number<double>(key, v);
        else if (key == "sense_power_mw") c.sense_power_mw = parse_number<double>(key, v);
        else if (key == "idle_power_mw") c.idle_power_mw = parse_number<double>(key, v);
        else if (key == "initial_energy_j") c.initial_energy_j = parse_number<double>(key, v);
        else if (key == "rng_seed") c.rng_seed = parse_number<uint64_t>(key, v);
        else throw ConfigInvalid("line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    }
    c.validate();
    return c;
}

std::string format_scenario(const ScenarioConfig& c) {
    std::ostringstream o;
    o << "n_vehicles=" << c.n_vehicles << '\n'
      << "obu_penetration_percent=" << c.obu_penetration_percent << '\n'
      << "sim_duration_s=" << c.sim_duration_s << '\n'
      << "area_km2=" << fmt(c.area_km2) << '\n'
      << "revocation_rate_percent=" << fmt(c.revocation_rate_percent) << '\n'
      << "n_rsus=" << c.n_rsus << '\n'
      << "rsu_cell_layout=" << c.rsu_rows << 'x' << c.rsu_cols << '\n'
      << "speed_range_mps=" << fmt(c.speed_min_mps) << '-' << fmt(c.speed_max_mps) << '\n'
      << "tx_range_m=" << fmt(c.tx_range_m) << '\n'
      << "query_rate=" << fmt(c.query_rate) << '\n'
      << "pseudonyms_per_obu=" << c.pseudonyms_per_obu << '\n'
      << "pseudonym_lifetime_s=" << c.pseudonym_lifetime_s << '\n'
      << "trust_threshold=" << c.trust_threshold << '\n'
      << "n_cheating_rsus=" << c.n_cheating_rsus << '\n'
      << "tree_k=" << c.tree_k << '\n'
      << "rsu_memory_bits=" << c.rsu_memory_bits << '\n'
      << "crl_epoch_s=" << c.crl_epoch_s << '\n'
      << "ok_max_age_s=" << c.ok_max_age_s << '\n'
      << "tx_power_mw=" << fmt(c.tx_power_mw) << '\n'
      << "rx_power_mw=" << fmt(c.rx_power_mw) << '\n'
      << "sense_power_mw=" << fmt(c.sense_power_mw) << '\n'
      << "idle_power_mw=" << fmt(c.idle_power_mw) << '\n'
      << "initial_energy_j=" << fmt(c.initial_energy_j) << '\n'
      << "rng_seed=" << c.rng_seed << '\n';
    return o.str();
}

// ---------------------------------------------------------------- the run

namespace {

    class Run {
      public:
        Run(const ScenarioConfig& c, RunOptions opt) : c_(c), opt_(opt) {}

        SimResult go();

      private:
        void setup();
        void step(uint64_t t);
        void check(size_t obu, uint64_t counterpart, uint64_t t);
        void query(size_t obu, const Bytes& serial, uint64_t t);
        void reask(size_t obu, uint64_t t);
        void send_updates(const std::vector<protocol::Envelope>& updates);
        void record(const protocol::Envelope& e) {
            if (opt_.keep_replay) out_.replay.push_back(e);
        }

        Bytes shown_serial(uint64_t vehicle, uint64_t t) const {
            const unsigned idx =
                c_.pseudonym_lifetime_s == 0 ? 0 : unsigned((t / c_.pseudonym_lifetime_s) % c_.pseudonyms_per_obu);
            return pseudonym_serial(vehicle, idx);
        }

        unsigned cell_of(const Vehicle& v) const {
            const auto col = unsigned(std::min<int64_t>(c_.rsu_cols - 1, v.x * c_.rsu_cols / side_));
            const auto row = unsigned(std::min<int64_t>(c_.rsu_rows - 1, v.y * c_.rsu_rows / side_));
            return row * c_.rsu_cols + col;
        }

        const ScenarioConfig& c_;
        RunOptions opt_;
        SimResult out_;
        int64_t side_ = 0;
        int64_t range_ = 0;
        std::vector<uint64_t> equipped_;  // vehicle ids, ascending
        std::vector<Vehicle> vehicles_;   // parallel to equipped_
        std::optional<protocol::Ttp> ttp_;
        std::vector<protocol::Rsu> rsus_;
        std::vector<protocol::Obu> obus_;  // parallel to equipped_
        std::vector<uint64_t> in_range_;   // pair keys from the previous tick
    };

    SimResult Run::go() {
        c_.validate();
        const auto start = std::chrono::steady_clock::now();
        setup();
        for (uint64_t t = 1; t <= c_.sim_duration_s; ++t) step(t);

        Metrics& m = out_.metrics;
        m.crl_bytes = crl_baseline_bytes(out_.queries, m.revoked_serials, kCertBits, c_.crl_epoch_s);
        for (const auto& o : obus_)
            for (const auto& [serial, _] : o.cache().reliable)
                if (ttp_->tree().contains(serial)) ++m.revoked_cached_reliable;
        if (opt_.timing)
            m.runtime_ms = uint64_t(std::chrono::duration_cast<std::chrono::milliseconds>(
                                        std::chrono::steady_clock::now() - start)
                                        .count());
        return std::move(out_);
    }

    void Run::setup() {
        Metrics& m = out_.metrics;
        m.seed = c_.rng_seed;
        m.penetration = c_.obu_penetration_percent;
        side_ = std::llround(std::sqrt(c_.area_km2) * 1e6);
        range_ = std::llround(c_.tx_range_m * 1000);

        // Revocation targets, independent of penetration.
        const uint64_t n = c_.n_vehicles;
        const auto wanted = uint64_t(std::ceil(double(n) * c_.revocation_rate_percent / 100.0));
        const uint64_t groups = std::min<uint64_t>(n, (wanted + c_.pseudonyms_per_obu - 1) / c_.pseudonyms_per_obu);
        m.revoked_serials = groups * c_.pseudonyms_per_obu;

        if (c_.tree_k != 0) {
            m.tree_k = c_.tree_k;
        } else {
            m.tree_k = tree::choose_k(std::max<uint64_t>(1, m.revoked_serials), c_.rsu_memory_bits).k;
        }

        const auto& scheme = auth::default_scheme();
        ttp_.emplace(kTtpId, m.tree_k, scheme.generate(kTtpId, c_.rng_seed));

        const auto cheat_order = permutation(c_.n_rsus, mix(c_.rng_seed, kTagCheat));
        std::set<unsigned> cheaters(cheat_order.begin(), cheat_order.begin() + c_.n_cheating_rsus);
        for (unsigned cell = 0; cell < c_.n_rsus; ++cell) {
            const NodeId id = kFirstRsuId + cell;
            rsus_.emplace_back(id, scheme.generate(id, c_.rng_seed), ttp_->verify_key(), cheaters.contains(cell));
            if (cheaters.contains(cell)) m.cheating_rsus.push_back(id);
            ttp_->register_rsu(id, rsus_.back().verify_key());
            // Provisioning is not counted as update traffic.
            const auto boot = ttp_->bootstrap(id, 0);
            record(boot);
            rsus_.back().apply(std::get<protocol::TreeReload>(boot.payload));
        }

        const uint64_t expiry = c_.sim_duration_s + 365ull * 86400;
        for (uint64_t v = 0; v < n; ++v) {
            protocol::PseudonymGroup g;
            g.obu_id = NodeId(kFirstObuId + v);
            for (unsigned i = 0; i < c_.pseudonyms_per_obu; ++i) {
                g.pseudonyms.push_back({pseudonym_serial(v, i), expiry});
                g.key_handles.push_back(Bytes{uint8_t(i)});
            }
            ttp_->register_group(std::move(g));
        }

        const auto victims = permutation(n, mix(c_.rng_seed, kTagRevoke));
        for (uint64_t i = 0; i < groups; ++i) send_updates(ttp_->revoke_obu(NodeId(kFirstObuId + victims[i]), 0));
        m.tree_depth = ttp_->tree().depth();

        // Equipped vehicles: a prefix of one fixed order, so a higher
        // penetration only ever adds vehicles.
        const uint64_t n_obus = (n * c_.obu_penetration_percent + 99) / 100;
        const auto order = permutation(n, mix(c_.rng_seed, kTagEquip));
        equipped_.assign(order.begin(), order.begin() + n_obus);
        std::sort(equipped_.begin(), equipped_.end());
        m.n_obus = n_obus;

        const protocol::ObuConfig oc{c_.trust_threshold, c_.ok_max_age_s};
        for (uint64_t v : equipped_) {
            Vehicle veh;
            veh.rng = Rng{mix(c_.rng_seed, kTagMobility, v)};
            veh.x = int64_t(veh.rng.below(uint64_t(side_) + 1));
            veh.y = int64_t(veh.rng.below(uint64_t(side_) + 1));
            new_segment(veh, c_);
            veh.cell = cell_of(veh);
            vehicles_.push_back(veh);

            obus_.emplace_back(NodeId(kFirstObuId + v), ttp_->verify_key(), oc);
            for (const auto& r : rsus_) obus_.back().learn_rsu_key(r.id(), r.verify_key());
        }
    }

    void Run::send_updates(const std::vector<protocol::Envelope>& updates) {
        for (const auto& e : updates) {
            out_.metrics.delta_bytes += encode_envelope(e).size();
            record(e);
            auto& rsu = rsus_.at(e.receiver - kFirstRsuId);
            bool ok = false;
            if (const auto* d = std::get_if<protocol::TreeDelta>(&e.payload)) ok = rsu.apply(*d);
            else if (const auto* r = std::get_if<protocol::TreeReload>(&e.payload)) ok = rsu.apply(*r);
            if (!ok) {
                const auto boot = ttp_->bootstrap(rsu.id(), e.sim_time);
                out_.metrics.delta_bytes += encode_envelope(boot).size();
                record(boot);
                if (!rsu.apply(std::get<protocol::TreeReload>(boot.payload)))
                    throw std::logic_error("RSU rejected a genuine reload");
            }
        }
    }

    void Run::step(uint64_t t) {
        // Movement and cell changes.
        for (size_t i = 0; i < vehicles_.size(); ++i) {
            Vehicle& v = vehicles_[i];
            if (v.segment_left == 0) new_segment(v, c_);
            --v.segment_left;
            v.x += v.vx;
            v.y += v.vy;
            reflect(v.x, v.vx, side_);
            reflect(v.y, v.vy, side_);
            const unsigned cell = cell_of(v);
            if (cell != v.cell) {
                v.cell = cell;
                reask(i, t);
            }
        }

        // Pairs in radio range, via a grid of range-sized buckets.
        std::vector<std::pair<uint64_t, uint32_t>> buckets;
        buckets.reserve(vehicles_.size());
        const int64_t cells = side_ / range_ + 2;
        auto bucket_of = [&](int64_t bx, int64_t by) { return uint64_t(by * cells + bx); };
        for (size_t i = 0; i < vehicles_.size(); ++i)
            buckets.emplace_back(bucket_of(vehicles_[i].x / range_, vehicles_[i].y / range_), uint32_t(i));
        std::sort(buckets.begin(), buckets.end());

        std::vector<uint64_t> pairs;
        for (size_t i = 0; i < vehicles_.size(); ++i) {
            const Vehicle& a = vehicles_[i];
            const int64_t bx = a.x / range_, by = a.y / range_;
            for (int64_t dy = -1; dy <= 1; ++dy) {
                for (int64_t dx = -1; dx <= 1; ++dx) {
                    if (bx + dx < 0 || by + dy < 0) continue;
                    const uint64_t key = bucket_of(bx + dx, by + dy);
                    auto lo = std::lower_bound(buckets.begin(), buckets.end(), std::make_pair(key, uint32_t(0)));
                    for (auto it = lo; it != buckets.end() && it->first == key; ++it) {
                        const uint32_t j = it->second;
                        if (j <= i) continue;
                        const Vehicle& b = vehicles_[j];
                        const int64_t ddx = a.x - b.x, ddy = a.y - b.y;
                        if (ddx * ddx + ddy * ddy <= range_ * range_)
                            pairs.push_back((uint64_t(equipped_[i]) << 32) | equipped_[j]);
                    }
                }
            }
        }
        std::sort(pairs.begin(), pairs.end());

        std::vector<uint64_t> fresh;
        std::set_difference(pairs.begin(), pairs.end(), in_range_.begin(), in_range_.end(), std::back_inserter(fresh));
        in_range_ = std::move(pairs);

        for (uint64_t key : fresh) {
            ++out_.metrics.encounters;
            if (unit(mix(c_.rng_seed, kTagAuth, key, t)) >= c_.query_rate) continue;
            const uint64_t va = key >> 32, vb = key & 0xffffffffu;
            const size_t ia = size_t(std::lower_bound(equipped_.begin(), equipped_.end(), va) - equipped_.begin());
            const size_t ib = size_t(std::lower_bound(equipped_.begin(), equipped_.end(), vb) - equipped_.begin());
            check(ia, vb, t);
            check(ib, va, t);
        }
    }

    void Run::check(size_t obu, uint64_t counterpart, uint64_t t) {
        const Bytes serial = shown_serial(counterpart, t);
        const protocol::Obu& o = obus_[obu];
        if (o.precheck(serial) != protocol::Precheck::unknown || o.pending().contains(serial)) return;
        query(obu, serial, t);
    }

    void Run::reask(size_t obu, uint64_t t) {
        const NodeId rsu = kFirstRsuId + vehicles_[obu].cell;
        std::vector<Bytes> todo;
        for (const auto& [serial, p] : obus_[obu].pending())
            if (!p.asked.contains(rsu)) todo.push_back(serial);
        for (const auto& s : todo) query(obu, s, t);
    }

    void Run::query(size_t obu_idx, const Bytes& serial, uint64_t t) {
        Metrics& m = out_.metrics;
        protocol::Obu& obu = obus_[obu_idx];
        protocol::Rsu& rsu = rsus_[vehicles_[obu_idx].cell];
        if (obu.knows_revoked_rsu(rsu.id())) {
            ++m.refused;
            return;
        }
        obu.note_query(serial, rsu.id());

        const protocol::Envelope q{obu.id(), rsu.id(), t, protocol::StatusQuery{serial}};
        ++m.queries;
        m.query_bytes += encode_envelope(q).size();
        record(q);

        const protocol::Answer answer = rsu.answer_query(serial, t);
        const bool is_proof = std::holds_alternative<auth::RevocationProof>(answer);
        const protocol::Envelope reply =
            is_proof ? protocol::Envelope{rsu.id(), obu.id(), t, protocol::ProofAnswer{std::get<0>(answer)}}
                     : protocol::Envelope{rsu.id(), obu.id(), t, protocol::OkAnswer{std::get<1>(answer)}};
        const auto bytes = uint32_t(encode_envelope(reply).size());
        (is_proof ? m.proof_bytes : m.ok_bytes) += bytes;
        ++(is_proof ? m.proofs : m.oks);
        record(reply);
        out_.queries.push_back({t, obu.id(), rsu.id(), serial, is_proof, bytes});

        const uint64_t dropped = obu.dropped_answers();
        const auto actions = obu.handle_answer(answer, rsu.id(), t);
        if (obu.dropped_answers() != dropped) throw std::logic_error("answer failed verification");

        for (const auto& act : actions) {
            const auto* imp = std::get_if<protocol::action::Impeach>(&act);
            if (!imp) continue;
            const auto relayed = rsu.relay_impeachment(imp->impeachment, kTtpId, t);
            record(relayed);
            const auto outcome = ttp_->handle_impeachment(imp->impeachment, t);
            if (!outcome.accepted()) continue;
            ++m.impeachments;
            for (const auto& notice : outcome.notices) {
                record(notice);
                const NodeId gone = std::get<protocol::RsuRevocationNotice>(notice.payload).rsu_id;
                m.revoked_rsus.push_back(gone);
                for (auto& o : obus_) o.handle_rsu_revocation(gone);
            }
        }
    }

}  // namespace

SimResult run_simulation(const ScenarioConfig& config, RunOptions options) { return Run(config, options).go(); }

std::vector<Metrics> run_sweep(const ScenarioConfig& base, std::span<const unsigned> penetrations,
                               std::span<const uint64_t> seeds, RunOptions options) {
    std::vector<Metrics> out;
    for (uint64_t seed : seeds) {
        for (unsigned p : penetrations) {
            ScenarioConfig c = base;
            c.rng_seed = seed;
            c.obu_penetration_percent = p;
            options.keep_replay = false;
            out.push_back(run_simulation(c, options).metrics);
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const Metrics& a, const Metrics& b) {
        return std::tie(a.penetration, a.seed) < std::tie(b.penetration, b.seed);
    });
    return out;
}

// ---------------------------------------------------------------- sizes

uint64_t crl_size_bits(uint64_t s, unsigned cert_bits) { return s * cert_bits; }

uint64_t crl_download_bytes(uint64_t s, unsigned cert_bits, uint64_t signature_bytes) {
    return (crl_size_bits(s, cert_bits) + 7) / 8 + signature_bytes;
}

uint64_t crl_baseline_bytes(std::span<const QueryEvent> log, uint64_t s, unsigned cert_bits, uint64_t epoch_s,
                            uint64_t signature_bytes) {
    std::set<std::pair<NodeId, uint64_t>> downloads;
    for (const auto& e : log) downloads.emplace(e.obu, epoch_s == 0 ? 0 : e.time / epoch_s);
    return downloads.size() * crl_download_bytes(s, cert_bits, signature_bytes);
}

uint64_t proof_size_bits(unsigned k, unsigned depth, unsigned n_bits, std::span<const unsigned> per_level_counts,
                         uint64_t signature_bits) {
    uint64_t digests = 0;
    if (per_level_counts.empty()) digests = uint64_t(k) * depth;
    else
        for (unsigned c : per_level_counts) digests += c;
    return n_bits + digests * n_bits + signature_bits;
}

uint64_t proof_wire_bytes(size_t serial_bytes, unsigned depth, std::span<const unsigned> per_level_counts,
                          size_t signature_bytes) {
    // magic, format version, k/D/n/l, serial, path, levels, signed root
    uint64_t levels = 0;
    for (unsigned c : per_level_counts) levels += 1 + uint64_t(c) * (1 + keccak::kDigestBytes);
    return 4 + 1 + 8 + 2 + serial_bytes + 1 + depth + levels + keccak::kDigestBytes + 8 + 8 + 2 + 2 +
           signature_bytes;
}

Crossover find_crossover(unsigned k, uint64_t s, unsigned n_rsus, size_t serial_bytes) {
    Crossover c;
    c.k = k;
    c.s = s;
    const unsigned depth = tree::min_depth(k, s);
    c.distribution_bytes = uint64_t(n_rsus) * ((tree::tree_size_bits(k, depth) + 7) / 8);
    const std::vector<unsigned> full(depth, k);
    c.answer_bytes = proof_wire_bytes(serial_bytes, depth, full, kCrlSignatureBytes);
    c.crl_bytes = crl_download_bytes(s);
    if (c.crl_bytes > c.answer_bytes) c.queries = c.distribution_bytes / (c.crl_bytes - c.answer_bytes) + 1;
    return c;
}

// ---------------------------------------------------------------- CSV

std::string emit_report(std::span<const Metrics> metrics) {
    if (metrics.empty()) throw std::invalid_argument("emit_report needs at least one record");
    std::vector<const Metrics*> rows;
    for (const auto& m : metrics) rows.push_back(&m);
    std::stable_sort(rows.begin(), rows.end(), [](const Metrics* a, const Metrics* b) {
        return std::tie(a->penetration, a->seed) < std::tie(b->penetration, b->seed);
    });
    std::ostringstream o;
    o << kCsvHeader << '\n';
    for (const Metrics* m : rows)
        o << m->seed << ',' << m->penetration << ',' << m->queries << ',' << m->proof_bytes << ',' << m->ok_bytes
          << ',' << m->delta_bytes << ',' << m->crl_bytes << ',' << m->impeachments << ',' << m->runtime_ms << '\n';
    return o.str();
}

std::vector<Metrics> parse_report(std::string_view csv) {
    std::vector<Metrics> out;
    bool header = true;
    while (!csv.empty()) {
        const size_t nl = csv.find('\n');
        std::string_view line = csv.substr(0, nl);
        csv = nl == std::string_view::npos ? std::string_view{} : csv.substr(nl + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (header) {
            if (line != kCsvHeader) throw DecodeError("unexpected CSV header");
            header = false;
            continue;
        }
        if (line.empty()) continue;
        uint64_t f[9];
        size_t i = 0;
        for (; i < 9; ++i) {
            const size_t comma = line.find(',');
            const std::string_view cell = line.substr(0, comma);
            auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), f[i]);
            if (ec != std::errc() || p != cell.data() + cell.size() || cell.empty())
                throw DecodeError("bad CSV field '" + std::string(cell) + "'");
            if (comma == std::string_view::npos) {
                line = {};
                ++i;
                break;
            }
            line = line.substr(comma + 1);
        }
        if (i != 9 || !line.empty()) throw DecodeError("CSV row must have 9 fields");
        Metrics m;
        m.seed = f[0];
        m.penetration = unsigned(f[1]);
        m.queries = f[2];
        m.proof_bytes = f[3];
        m.ok_bytes = f[4];
        m.delta_bytes = f[5];
        m.crl_bytes = f[6];
        m.impeachments = f[7];
        m.runtime_ms = f[8];
        out.push_back(m);
    }
    if (header) throw DecodeError("empty CSV");
    return out;
}

}  // namespace krev::sim
