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

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "krev/keccak.hpp"
#include "krev/tree.hpp"

namespace fs = std::filesystem;
using krev::cli::run_cli;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

struct TempDir {
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("krev_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    fs::path path;
};

void write(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

std::string read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string serial_list(unsigned count) {
    std::ostringstream o;
    for (unsigned i = 0; i < count; ++i) o << "00c0ffee" << std::hex << std::setw(4) << std::setfill('0') << i << std::dec << ",1900000000\n";
    return o.str();
}

}  // namespace

TEST_CASE("build reports s, D and the root") {
    TempDir d;
    write(d.file("in.txt"), serial_list(135));
    const auto r = cli({"build", "--k", "5", "--input", d.file("in.txt"), "--out", d.file("t.bin")});
    CHECK(r.code == 0);
    CHECK(r.out.find("s=135") != std::string::npos);
    CHECK(r.out.find("D=4") != std::string::npos);
    const std::string bytes = read(d.file("t.bin"));
    const auto t = krev::tree::RevocationTree::deserialize(
        krev::ByteView(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size()));
    CHECK(t.size() == 135);
    CHECK(r.out.find(t.root_digest().hex()) != std::string::npos);
}

TEST_CASE("build with empty input gives the empty-tree root") {
    TempDir d;
    write(d.file("in.txt"), "# nothing revoked\n\n");
    const auto r = cli({"build", "--k", "3", "--input", d.file("in.txt"), "--out", d.file("t.bin")});
    CHECK(r.code == 0);
    CHECK(r.out.find("s=0") != std::string::npos);
    CHECK(r.out.find(krev::keccak::hash({}).hex()) != std::string::npos);
}

TEST_CASE("malformed build input exits 2 and names the line") {
    TempDir d;
    write(d.file("dup.txt"), "0a0b,1\n0c0d,2\n0a0b,3\n");
    auto r = cli({"build", "--k", "3", "--input", d.file("dup.txt"), "--out", d.file("t.bin")});
    CHECK(r.code == 2);
    CHECK(r.err.find("line 3") != std::string::npos);
    CHECK(r.err.find("duplicate") != std::string::npos);

    write(d.file("bad.txt"), "0a0b,1\nzz,2\n");
    r = cli({"build", "--k", "3", "--input", d.file("bad.txt"), "--out", d.file("t.bin")});
    CHECK(r.code == 2);
    CHECK(r.err.find("line 2") != std::string::npos);

    r = cli({"build", "--k", "3", "--input", d.file("missing.txt"), "--out", d.file("t.bin")});
    CHECK(r.code == 2);
    r = cli({"build", "--k", "1", "--input", d.file("bad.txt"), "--out", d.file("t.bin")});
    CHECK(r.code == 2);
    CHECK(cli({}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("prove, verify and corruption") {
    TempDir d;
    write(d.file("in.txt"), serial_list(40));
    REQUIRE(cli({"build", "--k", "3", "--input", d.file("in.txt"), "--out", d.file("t.bin")}).code == 0);
    REQUIRE(cli({"keygen", "--id", "7", "--seed", "99", "--out", d.file("ttp.key")}).code == 0);

    auto r = cli({"prove", "--tree", d.file("t.bin"), "--serial", "00c0ffee0011", "--ttp-key", d.file("ttp.key"),
                  "--out", d.file("p.bin"), "--now", "1700000000"});
    REQUIRE(r.code == 0);
    const std::string proof = read(d.file("p.bin"));
    CHECK(r.out == "proof_bytes=" + std::to_string(proof.size()) + "\n");

    r = cli({"verify", "--proof", d.file("p.bin"), "--ttp-key", d.file("ttp.key")});
    CHECK(r.code == 0);
    CHECK(r.out == "Accept\n");

    std::string bad = proof;
    bad[bad.size() / 2] = char(bad[bad.size() / 2] ^ 0x10);
    write(d.file("bad.bin"), bad);
    r = cli({"verify", "--proof", d.file("bad.bin"), "--ttp-key", d.file("ttp.key")});
    CHECK(r.code == 1);
    CHECK(r.out.starts_with("Reject("));

    REQUIRE(cli({"keygen", "--id", "7", "--seed", "100", "--out", d.file("other.key")}).code == 0);
    r = cli({"verify", "--proof", d.file("p.bin"), "--ttp-key", d.file("other.key")});
    CHECK(r.code == 1);
    CHECK(r.out == "Reject(BadSignature)\n");

    r = cli({"prove", "--tree", d.file("t.bin"), "--serial", "ffff", "--ttp-key", d.file("ttp.key"), "--out",
             d.file("q.bin")});
    CHECK(r.code == 1);
    CHECK(r.out == "NOT-REVOKED\n");

    r = cli({"verify", "--proof", d.file("nothing.bin"), "--ttp-key", d.file("ttp.key")});
    CHECK(r.code == 2);
}

TEST_CASE("insert and delete rewrite the tree") {
    TempDir d;
    write(d.file("a.txt"), serial_list(9));
    REQUIRE(cli({"build", "--k", "3", "--input", d.file("a.txt"), "--out", d.file("t.bin")}).code == 0);
    write(d.file("b.txt"), "abcdef,5\n");
    auto r = cli({"insert", "--tree", d.file("t.bin"), "--input", d.file("b.txt")});
    CHECK(r.code == 0);
    CHECK(r.out.find("s=10 k=3 D=3") != std::string::npos);
    CHECK(cli({"insert", "--tree", d.file("t.bin"), "--input", d.file("b.txt")}).code == 2);

    r = cli({"delete", "--tree", d.file("t.bin"), "--serial", "abcdef"});
    CHECK(r.code == 0);
    CHECK(r.out.find("s=9 k=3 D=2") != std::string::npos);
    CHECK(cli({"delete", "--tree", d.file("t.bin"), "--serial", "abcdef"}).code == 1);
}

TEST_CASE("choose-k") {
    auto r = cli({"choose-k", "--s", "135", "--memory-bits", "10000000"});
    CHECK(r.code == 0);
    CHECK(r.out.starts_with("k=3 "));
    r = cli({"choose-k", "--s", "135", "--memory-bits", "0"});
    CHECK(r.code == 2);
    CHECK(r.err.find("infeasible") != std::string::npos);
    CHECK(cli({"choose-k", "--s", "0", "--memory-bits", "100"}).code == 2);
}

TEST_CASE("simulate is reproducible") {
    TempDir d;
    write(d.file("sc.txt"),
          "n_vehicles=200\nsim_duration_s=120\narea_km2=1\nn_rsus=4\nrsu_cell_layout=2x2\nquery_rate=0.5\n");
    const std::vector<std::string> base = {"simulate", "--config", d.file("sc.txt"), "--seed", "1",
                                           "--penetrations", "50,100"};
    auto a = base, b = base;
    a.insert(a.end(), {"--csv-out", d.file("a.csv")});
    b.insert(b.end(), {"--csv-out", d.file("b.csv"), "--replay-out", d.file("r.bin")});
    CHECK(cli(a).code == 0);
    CHECK(cli(b).code == 2);  // replay needs one run
    b = base;
    b.insert(b.end(), {"--csv-out", d.file("b.csv")});
    CHECK(cli(b).code == 0);
    const std::string csv = read(d.file("a.csv"));
    CHECK(csv == read(d.file("b.csv")));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

    write(d.file("bad.txt"), "n_rsus=3\n");
    CHECK(cli({"simulate", "--config", d.file("bad.txt"), "--csv-out", d.file("c.csv")}).code == 2);
}
