#include <doctest.h>

#include "condiff/config.hpp"
#include "condiff/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace condiff;

namespace {
const char* kBaseConfig = R"(# sample problem
[domain]
dim = 1
length = 1.0
T = 0.25

[phi]
family = pme
m = 2.0
K = 2.0

[noise]
family = linear-gradient
c = 0.5
modes = 2

[initial]
family = bump
height = 1.0

[solver]
cells = 64

[ensemble]
paths = 4
seed = 7
levels = 8,16
workers = 2
)";
}

TEST_CASE("parse_config: pme family attaches Phi(r) = r|r|") {
    ParsedConfig cfg = parse_config(kBaseConfig);
    CHECK(cfg.problem.coeffs.phi.family == "pme");
    CHECK(cfg.problem.coeffs.phi.phi(2.0) == doctest::Approx(4.0));
    CHECK(cfg.problem.coeffs.phi.phi(-2.0) == doctest::Approx(-4.0));
    CHECK(cfg.ensemble.paths == 4);
    CHECK(cfg.ensemble.k_modes == 2);
    CHECK(cfg.ensemble.seed == 7);
    CHECK(cfg.ensemble.levels == std::vector<int>{8, 16});
    CHECK(cfg.problem.horizon == 0.25);
    CHECK(cfg.config_hash != 0);
}

TEST_CASE("parse_config: missing m for the pme family names the key") {
    std::string text = kBaseConfig;
    auto pos = text.find("m = 2.0\n");
    text.erase(pos, 8);
    try {
        parse_config(text);
        FAIL("expected a semantic error");
    } catch (const condiff::domain_error& e) {
        CHECK(std::string(e.what()).find("'m'") != std::string::npos);
    }
}

TEST_CASE("parse_config: duplicate key reports both line numbers") {
    std::string text = kBaseConfig;
    text += "\n[solver2]\n"; // make sure appending stays in a fresh section
    text = kBaseConfig;
    auto pos = text.find("cells = 64\n");
    text.insert(pos, "cells = 32\n");
    try {
        parse_config(text);
        FAIL("expected a parse error");
    } catch (const parse_error& e) {
        CHECK(e.line_number > 0);
        CHECK(e.other_line_number > 0);
        CHECK(e.line_number != e.other_line_number);
    }
}

TEST_CASE("parse_config: unknown key is an error naming its line") {
    std::string text = kBaseConfig;
    text += "typo_key = 1\n"; // lands in [ensemble]
    CHECK_THROWS_AS(parse_config(text), parse_error);
}

TEST_CASE("parse_config: unknown section rejected") {
    std::string text = kBaseConfig;
    text += "\n[mystery]\nx = 1\n";
    CHECK_THROWS_AS(parse_config(text), parse_error);
}

TEST_CASE("run_manifest: empty suite list is a usage error") {
    RunManifest manifest;
    manifest.config_path = "does_not_matter.cfg";
    manifest.suites = {};
    CHECK(run_manifest(manifest) == 2);
}

TEST_CASE("run_manifest: unknown suite name rejected") {
    const char* path = "cfg_manifest_test.cfg";
    {
        std::ofstream f(path);
        f << kBaseConfig;
    }
    RunManifest manifest;
    manifest.config_path = path;
    manifest.suites = {"not-a-suite"};
    CHECK_THROWS_AS(run_manifest(manifest), config_error);
    std::remove(path);
}

TEST_CASE("run_manifest: clean deterministic run exits zero and writes reports") {
    const char* path = "cfg_run_test.cfg";
    {
        std::ofstream f(path);
        f << R"([domain]
dim = 1
length = 1.0
T = 0.01

[phi]
family = pme
m = 2.0

[initial]
family = bump
height = 1.0

[solver]
cells = 48

[ensemble]
paths = 2
seed = 3
levels = 8,16
workers = 2
)";
    }
    RunManifest manifest;
    manifest.config_path = path;
    manifest.suites = {"nonnegativity"};
    manifest.out_dir = ".";
    manifest.plot_data = true;
    int rc = run_manifest(manifest);
    CHECK(rc == 0);
    // provenance carries the config hash and seed
    std::ifstream prov("provenance.txt");
    REQUIRE(bool(prov));
    std::string content((std::istreambuf_iterator<char>(prov)),
                        std::istreambuf_iterator<char>());
    CHECK(content.find("config=") != std::string::npos);
    CHECK(content.find("seed=3") != std::string::npos);
    CHECK(content.find("suite.nonnegativity=pass") != std::string::npos);
    std::ifstream rep("nonnegativity.csv");
    CHECK(bool(rep));
    std::remove(path);
    std::remove("provenance.txt");
    std::remove("nonnegativity.csv");
    std::remove("nonnegativity_plot.csv");
    std::remove("validation.txt");
}

TEST_CASE("run_manifest: unwritable output directory fails before computing") {
    const char* path = "cfg_unwritable_test.cfg";
    {
        std::ofstream f(path);
        f << kBaseConfig;
    }
    RunManifest manifest;
    manifest.config_path = path;
    manifest.suites = {"nonnegativity"};
    manifest.out_dir = "/no/such/directory";
    CHECK_THROWS_AS(run_manifest(manifest), config_error);
    std::remove(path);
}
