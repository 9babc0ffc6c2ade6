#include "doctest.h"

#include <cstdlib>
#include <filesystem>

#include <sys/wait.h>

#include "experiment.hpp"
#include "pipeline.hpp"

#include "ecorr/corpus.hpp"
#include "ecorr/util.hpp"

namespace fs = std::filesystem;
using namespace ecorr;
using namespace ecorr::cli;

namespace {

const fs::path kScratch = fs::path(ECORR_TEST_SCRATCH);

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result ecorr_run(const std::string& args) {
    fs::create_directories(kScratch);
    const auto out = kScratch / "stdout.txt", err = kScratch / "stderr.txt";
    const std::string cmd = std::string(ECORR_BIN) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int rc = std::system(cmd.c_str());
    return {WIFEXITED(rc) ? WEXITSTATUS(rc) : -1, read_file(out), read_file(err)};
}

std::string path(const std::string& name) { return (kScratch / name).string(); }

bool one_error_line(const std::string& err, const std::string& kind, int code) {
    const std::string tag = "ecorr: error kind=" + kind + " exit=" + std::to_string(code) + " message=\"";
    const auto at = err.find(tag);
    return at != std::string::npos && err.find('\n', at) == err.size() - 1;
}

}  // namespace

TEST_CASE("config parsing is strict and canonical") {
    const auto a = parse_config(R"({"version": 1, "seed": 5})");
    CHECK(a.corpus.dim == 16);
    CHECK(a.gan.epochs == 300);
    CHECK(a.mc.source == McSource::Gan);
    CHECK(a.gan.seed.master == stream(a, Stream::Gan).master);
    const auto b = parse_config(R"({ "seed": 5,
                                     "version": 1, "corpus": {"dim": 16} })");
    CHECK(a.sha256() == b.sha256());
    CHECK(a.sha256() != parse_config(R"({"version": 1, "seed": 6})").sha256());

    for (const char* bad : {R"({"seed": 5})", R"({"version": 1})", R"({"version": 2, "seed": 1})",
                            R"({"version": 1, "seed": 1, "extra": 0})", R"({"version": 1, "seed": 1, "gan": {"lr": 1}})",
                            R"({"version": 1, "seed": 1, "gan": {"epochs": -1}})",
                            R"({"version": 1, "seed": 1, "mc": {"source": "file"}})",
                            R"({"version": 1, "seed": 1, "corpus": {"dim": 12}})", "not json"}) {
        try {
            (void)parse_config(bad);
            FAIL("accepted " << bad);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::ConfigError);
        }
    }
    const auto round = parse_config(a.to_json().dump());
    CHECK(round.sha256() == a.sha256());
}

TEST_CASE("usage errors exit 2 with usage text") {
    const auto r = ecorr_run("metrics --bogus");
    CHECK(r.code == 2);
    CHECK(r.err.find("Usage:") != std::string::npos);
    CHECK(one_error_line(r.err, "UsageError", 2));
    CHECK(ecorr_run("").code == 2);
    CHECK(ecorr_run("--help").code == 0);
}

TEST_CASE("metrics on the identity") {
    write_file(path("id.csv"), "1,0,0,0\n0,1,0,0\n0,0,1,0\n0,0,0,1\n");
    const auto r = ecorr_run("metrics --in " + path("id.csv"));
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j.at("records").at(0).at("stylized").at("sf1_mean_offdiag").get<double>() == 0.0);
    CHECK(j.at("provenance").at("version") == kToolVersion);
    CHECK(j.at("provenance").at("config_sha256").get<std::string>().size() == 64);
}

TEST_CASE("error kinds map to exit codes") {
    auto r = ecorr_run("metrics --in " + path("missing.csv"));
    CHECK(r.code == 3);
    CHECK(one_error_line(r.err, "IoError", 3));

    write_file(path("singular.csv"), "1,1\n1,1\n");
    r = ecorr_run("portfolio weights --method hrp --cov " + path("singular.csv"));
    CHECK(r.code == 4);
    CHECK(one_error_line(r.err, "NotPositiveDefinite", 4));

    write_file(path("bad.json"), R"({"version": 1, "seed": 1, "gan": {"epoch": 3}})");
    r = ecorr_run("repro --config " + path("bad.json") + " --out " + path("never"));
    CHECK(r.code == 2);
    CHECK(one_error_line(r.err, "ConfigError", 2));
    CHECK(r.err.find("gan.epoch") != std::string::npos);
    CHECK_FALSE(fs::exists(path("never")));
}

TEST_CASE("sample writes a corpus with provenance") {
    fs::remove_all(path("onion"));
    REQUIRE(ecorr_run("sample --method onion --dim 6 --count 12 --seed 4 --out " + path("onion")).code == 0);
    const auto c = corpus::read_corpus(path("onion"));
    CHECK(c.size() == 12);
    CHECK(c.dim == 6);
    CHECK(recorded_config_hash(path("onion")).has_value());
}

TEST_CASE("repro is byte-identical across runs and thread counts") {
    const std::string cfg = std::string(ECORR_CONFIG_DIR) + "/ci.json";
    for (const char* d : {"repro1", "repro2"}) fs::remove_all(path(d));
    REQUIRE(ecorr_run("repro --config " + cfg + " --out " + path("repro1")).code == 0);
    REQUIRE(ecorr_run("--threads 8 repro --config " + cfg + " --out " + path("repro2")).code == 0);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(path("repro1"))) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), path("repro1"));
        CHECK(read_file(e.path()) == read_file(fs::path(path("repro2")) / rel));
        ++files;
    }
    CHECK(files > 10);

    const auto sha = load_config(cfg).sha256();
    const auto summary = json::parse(read_file(fs::path(path("repro1")) / "reports" / "summary.json"));
    CHECK(summary.at("provenance").at("config_sha256") == sha);
    CHECK(read_file(fs::path(path("repro1")) / "reports" / "records.ecrec").find(sha) != std::string::npos);
    CHECK(summary.at("shapley_max_efficiency_residual").get<double>() <= 1e-10);

    // A second run reuses the verified corpus and checkpoint.
    const auto again = ecorr_run("repro --config " + cfg + " --out " + path("repro1"));
    CHECK(again.code == 0);
    CHECK(again.err.find("reusing checkpoint") != std::string::npos);
}
