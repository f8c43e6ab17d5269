#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "cli.hpp"
#include "lrd/checkpoint.hpp"
#include "lrd/serialize.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run lrd_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = lrd::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("lrd_cli_" + std::to_string(::getpid()))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& f) const { return (path / f).string(); }
};

std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("arch, plan and count commands") {
    TempDir tmp;
    const auto r50 = tmp / "r50.json";
    CHECK(lrd_cli({"arch", "50", "--out", r50}).code == 0);
    auto j = lrd::read_json_file(r50);
    int convs = 0;
    for (const auto& l : j["layers"]) convs += l["kind"] == "conv";
    CHECK(convs == 53);
    const auto first = slurp(r50);
    CHECK(lrd_cli({"arch", "50", "--out", r50}).code == 0);
    CHECK(slurp(r50) == first);
    auto bad = lrd_cli({"arch", "99"});
    CHECK(bad.code == 1);
    CHECK(bad.err.rfind("error[config]:", 0) == 0);

    auto count = lrd_cli({"count", r50});
    CHECK(count.code == 0);
    CHECK(count.out.find("25503912") != std::string::npos);

    auto plan = lrd_cli({"plan", r50, "--out", tmp / "p3.json"});
    CHECK(plan.code == 0);
    CHECK(plan.out.find("45 layers selected") != std::string::npos);
    CHECK(lrd_cli({"count", r50, tmp / "p3.json", "--json"}).out.find("\"params\": 15266984") != std::string::npos);
    CHECK(lrd_cli({"plan", r50, "--mode", "mode1", "--ratio", "3"}).out.find("17 layers selected") !=
          std::string::npos);

    auto vb = lrd_cli({"plan", r50, "--method", "vbmf"});
    CHECK(vb.code == 1);
    CHECK(vb.err.find("error[config]") != std::string::npos);
    CHECK(lrd_cli({"plan", r50, "--ratio", "0.5"}).code == 1);
    CHECK(lrd_cli({"plan", r50, "--include", "fc"}).code == 1);
    CHECK(lrd_cli({"plan", r50, "--mode", "custom", "--include", "block4.*", "--exclude", "*.downsample"})
              .out.find("9 layers selected") != std::string::npos);
}

TEST_CASE("help and usage errors") {
    for (const char* sub : {"arch", "plan", "init", "compress", "verify", "count", "bench"}) {
        auto r = lrd_cli({sub, "--help"});
        CHECK(r.code == 0);
        CHECK_FALSE(r.out.empty());
    }
    CHECK(lrd_cli({"--help"}).code == 0);
    CHECK(lrd_cli({}).code == 1);
    CHECK(lrd_cli({"frobnicate"}).code == 1);
    CHECK(lrd_cli({"count", "/nonexistent.json"}).code == 2);
}

TEST_CASE("compress and verify") {
    TempDir tmp;
    const auto arch = tmp / "r18.json";
    REQUIRE(lrd_cli({"arch", "18", "--input-hw", "32", "--out", arch}).code == 0);
    REQUIRE(lrd_cli({"init", arch, "--seed", "1", "--out", tmp / "r18.lrdc"}).code == 0);

    // full rank: Q beyond every channel count
    REQUIRE(lrd_cli({"plan", arch, "--mode", "vanilla", "--quantum", "4096", "--out", tmp / "fullplan.json"}).code == 0);
    REQUIRE(lrd_cli({"compress", arch, tmp / "r18.lrdc", tmp / "fullplan.json", "--out", tmp / "f.lrdc",
                     "--arch-out", tmp / "f_arch.json"})
                .code == 0);
    CHECK(fs::exists(tmp / "f_arch.json"));
    auto v_ok = lrd_cli({"verify", arch, tmp / "r18.lrdc", tmp / "f_arch.json", tmp / "f.lrdc", "--rel-tol", "1e-4",
                         "--input-hw", "8"});
    CHECK(v_ok.code == 0);

    REQUIRE(lrd_cli({"plan", arch, "--mode", "custom", "--include", "block1.*", "--include", "fc", "--quantum", "8",
                     "--out", tmp / "lossy.json"})
                .code == 0);
    REQUIRE(lrd_cli({"compress", arch, tmp / "r18.lrdc", tmp / "lossy.json", "--out", tmp / "l.lrdc", "--arch-out",
                     tmp / "l_arch.json", "--hooi-iters", "3"})
                .code == 0);
    auto v_bad = lrd_cli({"verify", arch, tmp / "r18.lrdc", tmp / "l_arch.json", tmp / "l.lrdc", "--rel-tol",
                          "1e-6", "--input-hw", "8"});
    CHECK(v_bad.code == 1);
    CHECK(v_bad.err.find("error[tolerance]") != std::string::npos);
    CHECK(v_bad.out.find("block1.unit1.conv1") != std::string::npos);
    CHECK(lrd_cli({"verify", arch, tmp / "r18.lrdc", tmp / "l_arch.json", tmp / "l.lrdc", "--input-hw", "8"}).code ==
          0);
    // pairing the lossy arch with the full-rank checkpoint is shape-incompatible
    CHECK(lrd_cli({"verify", arch, tmp / "r18.lrdc", tmp / "l_arch.json", tmp / "f.lrdc"}).code == 1);

    // a plan naming an unknown layer
    auto j = lrd::read_json_file(tmp / "lossy.json");
    auto entries = j["entries"];
    entries["ghost"] = entries["fc"];
    j["entries"] = entries;
    lrd::write_text_file(tmp / "ghost.json", lrd::dump_json(j));
    CHECK(lrd_cli({"compress", arch, tmp / "r18.lrdc", tmp / "ghost.json", "--out", tmp / "g.lrdc"}).code != 0);

    // corrupted checkpoint payload
    auto bytes = slurp(tmp / "r18.lrdc");
    const float nan = std::nanf("");
    std::memcpy(bytes.data() + bytes.size() - 4, &nan, 4);
    std::ofstream(tmp / "nan.lrdc", std::ios::binary) << bytes;
    auto r = lrd_cli({"compress", arch, tmp / "nan.lrdc", tmp / "lossy.json", "--out", tmp / "n.lrdc"});
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error[data]", 0) == 0);

    CHECK(lrd_cli({"compress", arch, tmp / "lossy.json", "--random-init", "--out", tmp / "ri.lrdc", "--hooi-iters",
                   "2"})
              .code == 0);
}

TEST_CASE("bench command writes one row per plan plus the original") {
    TempDir tmp;
    const auto arch = tmp / "r18.json";
    REQUIRE(lrd_cli({"arch", "18", "--input-hw", "32", "--out", arch}).code == 0);
    REQUIRE(lrd_cli({"plan", arch, "--mode", "vanilla", "--out", tmp / "v.json"}).code == 0);
    REQUIRE(lrd_cli({"plan", arch, "--mode", "mode3", "--out", tmp / "m3.json"}).code == 0);
    auto r = lrd_cli({"bench", arch, tmp / "v.json", tmp / "m3.json", "--reps", "3", "--warmup", "1", "--out",
                      tmp / "report.json"});
    CHECK(r.code == 0);
    auto rep = lrd::read_json_file(tmp / "report.json");
    CHECK(rep["rows"].size() == 3);
    CHECK(rep.contains("machine_info"));
}
