#include <doctest.h>

#include "condiff/errors.hpp"
#include "condiff/noise.hpp"

#include <cmath>
#include <cstdio>

using namespace condiff;

TEST_CASE("sample_path determinism: same spec twice gives identical bits") {
    NoiseSpec spec{3, 200, 1.0, 42u, 7u, 0};
    NoisePath a = sample_path(spec);
    NoisePath b = sample_path(spec);
    REQUIRE(a.increments.size() == b.increments.size());
    for (std::size_t i = 0; i < a.increments.size(); ++i)
        CHECK(a.increments[i] == b.increments[i]);
}

TEST_CASE("k_modes = 0 gives an empty increment array") {
    NoiseSpec spec{0, 50, 1.0, 1u, 1u, 0};
    NoisePath p = sample_path(spec);
    CHECK(p.increments.empty());
    CHECK(p.steps == 50);
}

TEST_CASE("streams differing only in stream id decorrelate") {
    const long N = 10000;
    NoiseSpec s1{1, N, 1.0, 99u, 1u, 0};
    NoiseSpec s2{1, N, 1.0, 99u, 2u, 0};
    NoisePath a = sample_path(s1), b = sample_path(s2);
    double ma = 0, mb = 0;
    for (long i = 0; i < N; ++i) {
        ma += a.increments[i];
        mb += b.increments[i];
    }
    ma /= N;
    mb /= N;
    double cov = 0, va = 0, vb = 0;
    for (long i = 0; i < N; ++i) {
        cov += (a.increments[i] - ma) * (b.increments[i] - mb);
        va += (a.increments[i] - ma) * (a.increments[i] - ma);
        vb += (b.increments[i] - mb) * (b.increments[i] - mb);
    }
    double corr = cov / std::sqrt(va * vb);
    CHECK(std::abs(corr) < 4.0 / std::sqrt(static_cast<double>(N)));
}

TEST_CASE("sample moments: mean within sanity band, variance matches dt") {
    const long N = 10000;
    NoiseSpec spec{1, N, 2.0, 5u, 3u, 0};
    NoisePath p = sample_path(spec);
    const double dt = p.dt();
    double mean = 0;
    for (double w : p.increments) mean += w / std::sqrt(dt);
    mean /= N;
    CHECK(std::abs(mean) < 5.0 / std::sqrt(static_cast<double>(N)));
    double var = 0;
    for (double w : p.increments) var += w * w;
    var /= N;
    // 5-sigma band around dt, sd(var) ~ dt sqrt(2/N)
    CHECK(std::abs(var - dt) < 5.0 * dt * std::sqrt(2.0 / N));
}

TEST_CASE("mode independence: cross-mode covariance within 5 sigma of zero") {
    const long N = 10000;
    NoiseSpec spec{2, N, 1.0, 11u, 4u, 0};
    NoisePath p = sample_path(spec);
    double cov = 0;
    for (long n = 0; n < N; ++n) cov += p.dw(n, 0) * p.dw(n, 1);
    cov /= N;
    double dt = p.dt();
    CHECK(std::abs(cov) < 5.0 * dt * std::sqrt(2.0 / N));
}

TEST_CASE("refine then aggregate reproduces the coarse increments") {
    NoiseSpec spec{2, 64, 0.5, 17u, 9u, 0};
    NoisePath coarse = sample_path(spec);
    NoisePath fine = refine_path(coarse, 4);
    CHECK(fine.steps == 256);
    CHECK(fine.level == coarse.level + 2);
    NoisePath back = aggregate_path(fine, 4);
    for (long n = 0; n < coarse.steps; ++n)
        for (int k = 0; k < coarse.k_modes; ++k)
            CHECK(back.dw(n, k) == doctest::Approx(coarse.dw(n, k)).epsilon(1e-12));
}

TEST_CASE("single-interval bridge splits dW = 0.3 into halves that sum back") {
    NoisePath p;
    p.k_modes = 1;
    p.steps = 1;
    p.horizon = 1.0;
    p.seed = 1;
    p.stream = 1;
    p.level = 0;
    p.increments = {0.3};
    NoisePath f = refine_path(p, 2);
    REQUIRE(f.steps == 2);
    CHECK(f.dw(0, 0) + f.dw(1, 0) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("refined increment variance approaches dt / factor") {
    const long N = 5000;
    NoiseSpec spec{1, N, 1.0, 23u, 2u, 0};
    NoisePath p = refine_path(sample_path(spec), 2);
    double var = 0;
    for (double w : p.increments) var += w * w;
    var /= (2 * N);
    double expect = p.dt();
    CHECK(std::abs(var - expect) < 5.0 * expect * std::sqrt(2.0 / (2 * N)));
}

TEST_CASE("coupled handles share the exact same path") {
    NoiseSpec spec{2, 32, 1.0, 3u, 14u, 0};
    auto handles = couple(spec, {"run-a", "run-b"});
    REQUIRE(handles.size() == 2);
    NoisePath a = sample_path(handles[0].spec);
    NoisePath b = sample_path(handles[1].spec);
    for (std::size_t i = 0; i < a.increments.size(); ++i)
        CHECK(a.increments[i] == b.increments[i]);
}

TEST_CASE("binary round trip") {
    NoiseSpec spec{3, 40, 1.0, 77u, 21u, 2};
    NoisePath p = sample_path(spec);
    const char* fname = "noise_roundtrip.bin";
    write_path(p, fname);
    NoisePath q = read_path(fname, p.horizon, p.stream);
    std::remove(fname);
    CHECK(q.steps == p.steps);
    CHECK(q.k_modes == p.k_modes);
    CHECK(q.seed == p.seed);
    CHECK(q.level == p.level);
    for (std::size_t i = 0; i < p.increments.size(); ++i)
        CHECK(q.increments[i] == p.increments[i]);
}

TEST_CASE("refine rejects non power-of-two factors") {
    NoiseSpec spec{1, 4, 1.0, 1u, 1u, 0};
    NoisePath p = sample_path(spec);
    CHECK_THROWS_AS(refine_path(p, 3), config_error);
    CHECK_THROWS_AS(refine_path(p, 1), config_error);
}
