#include "condiff/noise.hpp"
#include "condiff/errors.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>

namespace condiff {

namespace {

// Philox4x32-10 (Salmon et al., SC 2011).
constexpr std::uint32_t kPhiloxW32A = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW32B = 0xBB67AE85u;
constexpr std::uint32_t kPhiloxM4x32A = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM4x32B = 0xCD9E8D57u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo,
                      std::uint32_t& hi) {
    std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    lo = static_cast<std::uint32_t>(p);
    hi = static_cast<std::uint32_t>(p >> 32);
}

inline void philox_round(std::uint32_t ctr[4], const std::uint32_t key[2]) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mul_hi_lo(kPhiloxM4x32A, ctr[0], lo0, hi0);
    mul_hi_lo(kPhiloxM4x32B, ctr[2], lo1, hi1);
    std::uint32_t out[4];
    out[0] = hi1 ^ ctr[1] ^ key[0];
    out[1] = lo1;
    out[2] = hi0 ^ ctr[3] ^ key[1];
    out[3] = lo0;
    std::memcpy(ctr, out, sizeof(out));
}

inline void philox4x32_10(std::uint32_t ctr[4], std::uint32_t key0, std::uint32_t key1) {
    std::uint32_t key[2] = {key0, key1};
    for (int i = 0; i < 10; ++i) {
        philox_round(ctr, key);
        key[0] += kPhiloxW32A;
        key[1] += kPhiloxW32B;
    }
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline double to_unit(std::uint64_t v) {
    // (0,1) strictly, 53-bit resolution
    return (static_cast<double>(v >> 11) + 0.5) * 0x1.0p-53;
}

} // namespace

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

double gaussian_draw(std::uint64_t seed, std::uint64_t stream, std::uint32_t level,
                     std::uint64_t step, std::uint32_t mode) {
    std::uint64_t sub = splitmix64(stream ^ splitmix64(static_cast<std::uint64_t>(level) + 1));
    std::uint32_t ctr[4] = {static_cast<std::uint32_t>(step),
                            static_cast<std::uint32_t>(step >> 32), mode,
                            static_cast<std::uint32_t>(sub)};
    philox4x32_10(ctr, static_cast<std::uint32_t>(seed) ^ static_cast<std::uint32_t>(sub >> 32),
                  static_cast<std::uint32_t>(seed >> 32));
    std::uint64_t v1 = (static_cast<std::uint64_t>(ctr[0]) << 32) | ctr[1];
    std::uint64_t v2 = (static_cast<std::uint64_t>(ctr[2]) << 32) | ctr[3];
    double u1 = to_unit(v1);
    double u2 = to_unit(v2);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

NoisePath sample_path(const NoiseSpec& spec) {
    if (spec.steps < 0 || spec.k_modes < 0)
        throw config_error("noise: steps and k_modes must be non-negative");
    if (spec.steps > 0 && spec.horizon <= 0.0)
        throw config_error("noise: horizon must be positive");
    // step indices must fit the 64-bit counter half and the total draw count
    // must not wrap
    if (spec.k_modes > 0 &&
        static_cast<unsigned long long>(spec.steps) >
            (~0ull / static_cast<unsigned long long>(spec.k_modes)))
        throw config_error("noise: N * K_modes overflows counter space");

    NoisePath path;
    path.k_modes = spec.k_modes;
    path.steps = spec.steps;
    path.horizon = spec.horizon;
    path.seed = spec.seed;
    path.stream = spec.stream;
    path.level = spec.level;
    path.increments.resize(static_cast<std::size_t>(spec.steps) * spec.k_modes);
    const double root_dt = spec.steps > 0 ? std::sqrt(spec.dt()) : 0.0;
    for (long n = 0; n < spec.steps; ++n)
        for (int k = 0; k < spec.k_modes; ++k)
            path.increments[n * spec.k_modes + k] =
                root_dt * gaussian_draw(spec.seed, spec.stream, spec.level,
                                        static_cast<std::uint64_t>(n),
                                        static_cast<std::uint32_t>(k));
    return path;
}

NoisePath refine_path(const NoisePath& path, int factor) {
    if (factor < 2 || (factor & (factor - 1)) != 0)
        throw config_error("refine_path: factor must be a power of two >= 2");
    NoisePath cur = path;
    for (int f = factor; f > 1; f /= 2) {
        NoisePath fine;
        fine.k_modes = cur.k_modes;
        fine.steps = cur.steps * 2;
        fine.horizon = cur.horizon;
        fine.seed = cur.seed;
        fine.stream = cur.stream;
        fine.level = cur.level + 1;
        fine.increments.resize(static_cast<std::size_t>(fine.steps) * fine.k_modes);
        const double half_sd = 0.5 * std::sqrt(cur.dt());
        for (long n = 0; n < cur.steps; ++n) {
            for (int k = 0; k < cur.k_modes; ++k) {
                double w = cur.dw(n, k);
                double z = gaussian_draw(cur.seed, cur.stream, fine.level,
                                         static_cast<std::uint64_t>(n),
                                         static_cast<std::uint32_t>(k));
                double left = 0.5 * w + half_sd * z;
                fine.increments[(2 * n) * fine.k_modes + k] = left;
                fine.increments[(2 * n + 1) * fine.k_modes + k] = w - left;
            }
        }
        cur = std::move(fine);
    }
    return cur;
}

NoisePath aggregate_path(const NoisePath& path, int factor) {
    if (factor < 1 || path.steps % factor != 0)
        throw config_error("aggregate_path: factor must divide the step count");
    NoisePath coarse;
    coarse.k_modes = path.k_modes;
    coarse.steps = path.steps / factor;
    coarse.horizon = path.horizon;
    coarse.seed = path.seed;
    coarse.stream = path.stream;
    coarse.level = path.level;
    coarse.increments.assign(static_cast<std::size_t>(coarse.steps) * coarse.k_modes, 0.0);
    for (long n = 0; n < path.steps; ++n)
        for (int k = 0; k < path.k_modes; ++k)
            coarse.increments[(n / factor) * coarse.k_modes + k] += path.dw(n, k);
    return coarse;
}

std::vector<CoupledNoise> couple(const NoiseSpec& spec,
                                 const std::vector<std::string>& run_labels) {
    std::vector<CoupledNoise> handles;
    handles.reserve(run_labels.size());
    for (const auto& label : run_labels) handles.push_back({label, spec});
    return handles;
}

void write_path(const NoisePath& path, const std::string& filename) {
    std::FILE* f = std::fopen(filename.c_str(), "wb");
    if (!f) throw config_error("write_path: cannot open " + filename);
    auto put_u64 = [&](std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        std::fwrite(b, 1, 8, f);
    };
    put_u64(static_cast<std::uint64_t>(path.steps));
    put_u64(static_cast<std::uint64_t>(path.k_modes));
    put_u64(path.seed);
    put_u64(path.level);
    for (double x : path.increments) {
        std::uint64_t v;
        std::memcpy(&v, &x, 8);
        put_u64(v);
    }
    std::fclose(f);
}

NoisePath read_path(const std::string& filename, double horizon, std::uint64_t stream) {
    std::FILE* f = std::fopen(filename.c_str(), "rb");
    if (!f) throw config_error("read_path: cannot open " + filename);
    auto get_u64 = [&]() {
        unsigned char b[8];
        if (std::fread(b, 1, 8, f) != 8) {
            std::fclose(f);
            throw config_error("read_path: truncated file " + filename);
        }
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    };
    NoisePath path;
    path.steps = static_cast<long>(get_u64());
    path.k_modes = static_cast<int>(get_u64());
    path.seed = get_u64();
    path.level = static_cast<std::uint32_t>(get_u64());
    path.horizon = horizon;
    path.stream = stream;
    path.increments.resize(static_cast<std::size_t>(path.steps) * path.k_modes);
    for (auto& x : path.increments) {
        std::uint64_t v = get_u64();
        std::memcpy(&x, &v, 8);
    }
    std::fclose(f);
    return path;
}

} // namespace condiff
