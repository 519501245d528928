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

#include "cli.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <chrono>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "krev/auth.hpp"
#include "krev/error.hpp"
#include "krev/keccak.hpp"
#include "krev/sim.hpp"
#include "krev/tree.hpp"
#include "krev/wire.hpp"

namespace krev::cli {

namespace {

    // Input problems that map to exit code 2.
    struct UsageError : std::runtime_error {
        using std::runtime_error::runtime_error;
    };

    Bytes read_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw UsageError("cannot read " + path);
        return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    std::string read_text(const std::string& path) {
        const Bytes b = read_file(path);
        return std::string(b.begin(), b.end());
    }

    void write_file(const std::string& path, ByteView data) {
        std::ofstream o(path, std::ios::binary | std::ios::trunc);
        if (!o) throw UsageError("cannot write " + path);
        o.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
        if (!o) throw UsageError("cannot write " + path);
    }

    void write_text(const std::string& path, std::string_view text) {
        write_file(path, ByteView(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
    }

    std::string_view trim(std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return s;
    }

    /// serial_hex,expiry_unix per line; blank lines and '#' comments skipped.
    std::vector<tree::SerialNumber> parse_serials(std::string_view text, const tree::RevocationTree* existing) {
        std::vector<tree::SerialNumber> out;
        std::set<Bytes> seen;
        size_t line_no = 0;
        while (!text.empty()) {
            const size_t nl = text.find('\n');
            std::string_view line = trim(text.substr(0, nl));
            text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
            ++line_no;
            if (line.empty() || line.front() == '#') continue;
            const std::string where = "line " + std::to_string(line_no) + ": ";
            const size_t comma = line.find(',');
            if (comma == std::string_view::npos) throw UsageError(where + "expected serial_hex,expiry_unix");
            tree::SerialNumber s;
            try {
                s.value = from_hex(trim(line.substr(0, comma)));
            } catch (const DecodeError&) {
                throw UsageError(where + "serial is not hex");
            }
            if (s.value.empty() || s.value.size() > 0xffff) throw UsageError(where + "serial length out of range");
            const std::string_view exp = trim(line.substr(comma + 1));
            auto [p, ec] = std::from_chars(exp.data(), exp.data() + exp.size(), s.expiry);
            if (ec != std::errc() || p != exp.data() + exp.size() || exp.empty())
                throw UsageError(where + "expiry is not an unsigned integer");
            if (!seen.insert(s.value).second || (existing && existing->contains(s.value)))
                throw UsageError(where + "duplicate serial " + to_hex(s.value));
            out.push_back(std::move(s));
        }
        return out;
    }

    /// Key file: "<signer_id> <secret_hex>".
    auth::KeyPair read_key(const std::string& path) {
        std::istringstream in(read_text(path));
        uint64_t id = 0;
        std::string hex;
        if (!(in >> id >> hex) || id > 0xffff) throw UsageError(path + ": expected '<signer_id> <secret_hex>'");
        auth::KeyPair kp;
        kp.signing.signer_id = uint32_t(id);
        try {
            kp.signing.secret = from_hex(hex);
        } catch (const DecodeError&) {
            throw UsageError(path + ": secret is not hex");
        }
        kp.verify = {kp.signing.signer_id, kp.signing.secret};
        return kp;
    }

    tree::RevocationTree load_tree(const std::string& path) {
        try {
            return tree::RevocationTree::deserialize(read_file(path));
        } catch (const DecodeError& e) {
            throw UsageError(path + ": " + e.what());
        }
    }

    Bytes parse_serial_arg(const std::string& hex) {
        try {
            Bytes b = from_hex(hex);
            if (b.empty()) throw UsageError("empty serial");
            return b;
        } catch (const DecodeError&) {
            throw UsageError("serial is not hex: " + hex);
        }
    }

    void print_tree(std::ostream& out, const tree::RevocationTree& t) {
        out << "s=" << t.size() << " k=" << t.k() << " D=" << t.depth() << " version=" << t.version()
            << " root=" << t.root_digest().hex() << '\n';
    }

    template <class F>
    double seconds_for(F&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Revocation tree tool: build, prove, verify, choose k, simulate"};
    app.name("krev");
    app.require_subcommand(1);
    app.fallthrough();
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Only print essential output");

    std::string in_path, out_path, tree_path, proof_path, key_path, serial_hex, config_path, csv_path, replay_path;
    unsigned k = 0, l_bits = keccak::kDigestBits;
    uint64_t now = 0, s = 0, memory_bits = 0, seed = 1, key_seed = 0;
    uint32_t key_id = 0;

    auto* build = app.add_subcommand("build", "Build a tree from a serial list");
    build->add_option("--k", k, "Branching factor")->required()->check(CLI::Range(2u, tree::kMaxK));
    build->add_option("--l", l_bits, "Duplex output bits")->check(CLI::Range(224u, 351u));
    build->add_option("--input", in_path, "serial_hex,expiry_unix per line")->required();
    build->add_option("--out", out_path, "Tree file to write")->required();

    auto* insert = app.add_subcommand("insert", "Add serials to an existing tree");
    insert->add_option("--tree", tree_path)->required();
    insert->add_option("--input", in_path)->required();

    auto* erase = app.add_subcommand("delete", "Remove one serial from a tree");
    erase->add_option("--tree", tree_path)->required();
    erase->add_option("--serial", serial_hex)->required();

    auto* keygen = app.add_subcommand("keygen", "Derive a deterministic signing key");
    keygen->add_option("--id", key_id)->required()->check(CLI::Range(0u, 0xffffu));
    keygen->add_option("--seed", key_seed)->required();
    keygen->add_option("--out", out_path)->required();

    auto* prove = app.add_subcommand("prove", "Write a revocation proof for a serial");
    prove->add_option("--tree", tree_path)->required();
    prove->add_option("--serial", serial_hex)->required();
    prove->add_option("--ttp-key", key_path)->required();
    prove->add_option("--out", out_path)->required();
    prove->add_option("--now", now, "Timestamp for the signed root");

    auto* verify = app.add_subcommand("verify", "Check a proof file");
    verify->add_option("--proof", proof_path)->required();
    verify->add_option("--ttp-key", key_path)->required();

    auto* choose = app.add_subcommand("choose-k", "Pick k for s revoked serials under a memory bound");
    choose->add_option("--s", s)->required();
    choose->add_option("--memory-bits", memory_bits)->required();

    std::vector<unsigned> penetrations;
    std::vector<uint64_t> seeds;
    bool timing = false;
    auto* simulate = app.add_subcommand("simulate", "Run the vehicular simulation and write a CSV report");
    simulate->add_option("--config", config_path, "key=value scenario file (defaults if omitted)");
    simulate->add_option("--seed", seed, "RNG seed (default: the config's rng_seed)");
    simulate->add_option("--seeds", seeds, "Several seeds (overrides --seed)")->delimiter(',');
    simulate->add_option("--penetrations", penetrations, "OBU penetration levels, e.g. 10,20,...,100")
        ->delimiter(',')
        ->check(CLI::Range(1u, 100u));
    simulate->add_option("--csv-out", csv_path, "CSV output path")->required();
    simulate->add_option("--replay-out", replay_path, "Envelope replay log (single run only)");
    simulate->add_flag("--timing", timing, "Record wall-clock runtime_ms (makes the CSV non-reproducible)");

    uint64_t bench_s = 1000;
    auto* bench = app.add_subcommand("bench", "Rough throughput numbers");
    bench->add_option("--k", k, "Branching factor (default: choose_k)");
    bench->add_option("--s", bench_s, "Leaves");

    std::vector<std::string> argv_store;
    argv_store.push_back("krev");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());

    try {
        app.parse(int(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*build) {
            const auto serials = parse_serials(read_text(in_path), nullptr);
            tree::RevocationTree t(k, l_bits);
            for (const auto& sn : serials) t.insert(sn);
            write_file(out_path, t.serialize());
            print_tree(out, t);
            return kExitOk;
        }
        if (*insert) {
            tree::RevocationTree t = load_tree(tree_path);
            for (const auto& sn : parse_serials(read_text(in_path), &t)) t.insert(sn);
            write_file(tree_path, t.serialize());
            print_tree(out, t);
            return kExitOk;
        }
        if (*erase) {
            tree::RevocationTree t = load_tree(tree_path);
            const Bytes serial = parse_serial_arg(serial_hex);
            if (!t.contains(serial)) {
                out << "NOT-REVOKED\n";
                return kExitFailed;
            }
            t.erase(serial);
            write_file(tree_path, t.serialize());
            print_tree(out, t);
            return kExitOk;
        }
        if (*keygen) {
            const auto kp = auth::default_scheme().generate(key_id, key_seed);
            write_text(out_path, std::to_string(key_id) + " " + to_hex(kp.signing.secret) + "\n");
            if (!quiet) out << "wrote key for signer " << key_id << '\n';
            return kExitOk;
        }
        if (*prove) {
            const tree::RevocationTree t = load_tree(tree_path);
            const auth::KeyPair key = read_key(key_path);
            const Bytes serial = parse_serial_arg(serial_hex);
            const auth::SignedRoot root = auth::sign_root(t, key.signing, now);
            const auto proof = auth::build_proof(t, serial, root);
            if (!proof) {
                out << "NOT-REVOKED\n";
                return kExitFailed;
            }
            const Bytes wire = auth::encode_proof(*proof);
            write_file(out_path, wire);
            out << "proof_bytes=" << wire.size() << '\n';
            return kExitOk;
        }
        if (*verify) {
            const Bytes wire = read_file(proof_path);
            const auth::KeyPair key = read_key(key_path);
            const auth::Verdict v = auth::verify_proof_bytes(wire, key.verify);
            if (v.accepted()) {
                out << "Accept\n";
                return kExitOk;
            }
            out << "Reject(" << auth::to_string(v.reason) << ")\n";
            return kExitFailed;
        }
        if (*choose) {
            const tree::KChoice c = tree::choose_k(s, memory_bits);
            out << "k=" << c.k << " D=" << c.depth << " proof_bits=" << c.proof_bits << " tree_bits=" << c.tree_bits
                << '\n';
            return kExitOk;
        }
        if (*simulate) {
            sim::ScenarioConfig base;
            if (!config_path.empty()) base = sim::parse_scenario(read_text(config_path));
            if (seeds.empty()) seeds.push_back(simulate->count("--seed") ? seed : base.rng_seed);
            if (penetrations.empty()) penetrations.push_back(base.obu_penetration_percent);
            if (!replay_path.empty() && (seeds.size() != 1 || penetrations.size() != 1))
                throw UsageError("--replay-out needs a single seed and penetration");

            std::vector<sim::Metrics> rows;
            if (!replay_path.empty()) {
                sim::ScenarioConfig c = base;
                c.rng_seed = seeds[0];
                c.obu_penetration_percent = penetrations[0];
                auto r = sim::run_simulation(c, {timing, true});
                write_file(replay_path, protocol::encode_replay_log(r.replay));
                rows.push_back(r.metrics);
            } else {
                rows = sim::run_sweep(base, penetrations, seeds, {timing, false});
            }
            write_text(csv_path, sim::emit_report(rows));
            if (!quiet) {
                for (const auto& m : rows)
                    out << "seed=" << m.seed << " penetration=" << m.penetration << " queries=" << m.queries
                        << " tree_bytes=" << m.verification_bytes() << " crl_bytes=" << m.crl_bytes
                        << " impeachments=" << m.impeachments << '\n';
                const auto& m = rows.front();
                const auto x = sim::find_crossover(m.tree_k, m.revoked_serials, base.n_rsus);
                out << "crossover k=" << x.k << " s=" << x.s << ": ";
                if (x.queries)
                    out << "CRL-per-query exceeds tree cost from " << *x.queries << " queries\n";
                else
                    out << "none\n";
            }
            return kExitOk;
        }
        if (*bench) {
            if (k == 0) k = tree::choose_k(std::max<uint64_t>(bench_s, 1), 1ull << 40).k;
            keccak::LaneMatrix st;
            constexpr int kPerms = 200000;
            const double perm = seconds_for([&] {
                for (int i = 0; i < kPerms; ++i) keccak::permute_in_place(st);
            });
            tree::RevocationTree t(k);
            std::vector<Bytes> serials;
            for (uint64_t i = 0; i < bench_s; ++i) {
                ByteWriter w;
                w.u64(i);
                serials.push_back(w.take());
            }
            const double ins = seconds_for([&] {
                for (const auto& sn : serials) t.insert({sn, 0});
            });
            const auto key = auth::default_scheme().generate(1, 1);
            const auto root = auth::sign_root(t, key.signing, 0);
            std::vector<Bytes> proofs;
            const double pr = seconds_for([&] {
                for (const auto& sn : serials) proofs.push_back(auth::encode_proof(*auth::build_proof(t, sn, root)));
            });
            size_t ok = 0;
            const double ver = seconds_for([&] {
                for (const auto& p : proofs) ok += auth::verify_proof_bytes(p, key.verify).accepted();
            });
            out << "permutations/s=" << uint64_t(kPerms / perm) << '\n'
                << "inserts/s=" << uint64_t(double(bench_s) / ins) << " k=" << k << " D=" << t.depth() << '\n'
                << "proofs/s=" << uint64_t(double(bench_s) / pr) << " bytes=" << proofs.front().size() << '\n'
                << "verifies/s=" << uint64_t(double(bench_s) / ver) << " accepted=" << ok << '\n';
            return ok == proofs.size() ? kExitOk : kExitFailed;
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Infeasible& e) {
        err << "infeasible: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace krev::cli
