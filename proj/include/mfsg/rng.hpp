#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mfsg/time_grid.hpp"

namespace mfsg {

// Philox4x64-10 counter-based generator (Salmon et al. constants).
// Stateless: every draw is a pure function of (key, counter), which is what
// makes agent- and path-level parallelism reproducible by construction.
namespace detail {

inline void mulhilo64(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
    const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
    hi = static_cast<std::uint64_t>(p >> 64);
    lo = static_cast<std::uint64_t>(p);
}

inline std::array<std::uint64_t, 4> philox4x64(std::array<std::uint64_t, 4> ctr,
                                               std::array<std::uint64_t, 2> key) {
    constexpr std::uint64_t M0 = 0xD2E7470EE14C6C93ull;
    constexpr std::uint64_t M1 = 0xCA5A826395121157ull;
    constexpr std::uint64_t W0 = 0x9E3779B97F4A7C15ull;
    constexpr std::uint64_t W1 = 0xBB67AE8584CAA73Bull;
    for (int round = 0; round < 10; ++round) {
        std::uint64_t hi0, lo0, hi1, lo1;
        mulhilo64(M0, ctr[0], hi0, lo0);
        mulhilo64(M1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += W0;
        key[1] += W1;
    }
    return ctr;
}

inline double to_unit(std::uint64_t x) {
    // 53-bit mantissa in [0, 1)
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// One standard normal, a pure function of (seed, path_id, stream_id, step).
inline double normal_draw(std::uint64_t seed, std::uint64_t path_id, std::uint64_t stream_id,
                          std::uint64_t step) {
    const auto r = detail::philox4x64({stream_id, step, 0x6D66474C51756164ull, 0}, {seed, path_id});
    const double u1 = detail::to_unit(r[0]);
    const double u2 = detail::to_unit(r[1]);
    // 1-u1 in (0,1]: log argument never vanishes
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * M_PI * u2);
}

// Stream layout for a game instance: the common noise, the leader's noise,
// then one stream per follower.
constexpr std::uint64_t kStreamCommon = 0;
constexpr std::uint64_t kStreamLeader = 1;
inline std::uint64_t follower_stream(int i) {  // i is 1-based
    return 1 + static_cast<std::uint64_t>(i);
}

/// Brownian increments for one Monte Carlo path; draws iid Normal(0, dt).
struct NoiseBundle {
    std::uint64_t seed = 1;
    std::uint64_t path_id = 0;

    double normal(std::uint64_t stream, std::uint64_t step) const {
        return normal_draw(seed, path_id, stream, step);
    }
    double dW(std::uint64_t stream, std::uint64_t step, double sqrt_dt) const {
        return normal(stream, step) * sqrt_dt;
    }
};

inline std::vector<double> brownian_increments(std::uint64_t seed, std::uint64_t path_id,
                                               std::uint64_t stream_id, const TimeGrid& grid) {
    std::vector<double> out(static_cast<std::size_t>(grid.steps));
    const double s = std::sqrt(grid.dt());
    for (int k = 0; k < grid.steps; ++k)
        out[static_cast<std::size_t>(k)] =
            normal_draw(seed, path_id, stream_id, static_cast<std::uint64_t>(k)) * s;
    return out;
}

/// Pre-drawn normals for one path, all streams; lets several simulations of
/// the same path (common random numbers) skip regeneration.
struct CachedNoise {
    int steps = 0;
    std::vector<double> normals;  // layout: stream-major

    static CachedNoise draw(std::uint64_t seed, std::uint64_t path_id, std::uint64_t n_streams,
                            int steps) {
        CachedNoise c;
        c.steps = steps;
        c.normals.resize(static_cast<std::size_t>(n_streams) * static_cast<std::size_t>(steps));
        std::size_t idx = 0;
        for (std::uint64_t s = 0; s < n_streams; ++s)
            for (int k = 0; k < steps; ++k)
                c.normals[idx++] = normal_draw(seed, path_id, s, static_cast<std::uint64_t>(k));
        return c;
    }

    double normal(std::uint64_t stream, std::uint64_t step) const {
        return normals[static_cast<std::size_t>(stream) * static_cast<std::size_t>(steps) +
                       static_cast<std::size_t>(step)];
    }
};

}  // namespace mfsg
