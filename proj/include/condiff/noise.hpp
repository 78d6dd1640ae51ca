#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace condiff {

// Finite-mode Brownian driver on a uniform time grid.  Every Gaussian draw
// is a pure function of (seed, stream, level, step, mode) via a Philox4x32-10
// counter, so paths are bit-reproducible, order-independent, and can be
// generated concurrently or coupled across runs.

struct NoiseSpec {
    int k_modes = 0;
    long steps = 0;       // N intervals
    double horizon = 0.0; // T; dt = T / N
    std::uint64_t seed = 0;
    std::uint64_t stream = 0; // per-experiment / per-path label
    std::uint32_t level = 0;  // refinement level of the time grid

    double dt() const { return horizon / static_cast<double>(steps); }
};

struct NoisePath {
    int k_modes = 0;
    long steps = 0;
    double horizon = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::uint32_t level = 0;
    std::vector<double> increments; // [n * k_modes + k]

    double dt() const { return horizon / static_cast<double>(steps); }
    double dw(long n, int k) const { return increments[n * k_modes + k]; }
};

// Standard normal draw for index (step, mode); exposed for tests.
double gaussian_draw(std::uint64_t seed, std::uint64_t stream, std::uint32_t level,
                     std::uint64_t step, std::uint32_t mode);

NoisePath sample_path(const NoiseSpec& spec);

// Brownian-bridge subdivision by a power-of-two factor.  Aggregating the
// result over each coarse interval returns the coarse increments exactly.
NoisePath refine_path(const NoisePath& path, int factor);

// Inverse of refine_path: sum fine increments over blocks of `factor`.
NoisePath aggregate_path(const NoisePath& path, int factor);

// Handles for runs that must see identical noise (contraction/comparison
// experiments).  All handles share (seed, stream, level).
struct CoupledNoise {
    std::string label;
    NoiseSpec spec;
};
std::vector<CoupledNoise> couple(const NoiseSpec& spec,
                                 const std::vector<std::string>& run_labels);

// Raw binary layout for audit replays: four little-endian uint64 header
// fields (N, K_modes, seed, level) followed by N*K_modes little-endian
// doubles in step-major order.  The horizon and stream label live in the
// run's provenance file, not here.
void write_path(const NoisePath& path, const std::string& filename);
NoisePath read_path(const std::string& filename, double horizon, std::uint64_t stream = 0);

std::uint64_t fnv1a(const std::string& text);

} // namespace condiff
