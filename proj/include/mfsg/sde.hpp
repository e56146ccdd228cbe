#pragma once

#include <cstdint>
#include <vector>

#include "mfsg/errors.hpp"
#include "mfsg/ode.hpp"
#include "mfsg/rng.hpp"
#include "mfsg/trajectory.hpp"

namespace mfsg {

/// Explicit Euler–Maruyama:
///   x(k+1) = x(k) + drift(t_k, x(k)) dt + sum_j diffusion_j(t_k, x(k)) dW_j(k).
/// Each diffusion callable is paired with the stream id feeding it.
template <class T, class Drift, class Diffusions>
Trajectory<T> euler_maruyama(Drift drift, const Diffusions& diffusions,
                             const std::vector<std::uint64_t>& streams, const T& initial,
                             const TimeGrid& grid, const NoiseBundle& noise) {
    Trajectory<T> out(grid);
    out.at(0) = initial;
    detail::check_state(initial, 0.0);
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);
    for (int k = 0; k < grid.steps; ++k) {
        const double t = grid.t(k);
        const T& x = out.at(k);
        T next = drift(t, x);
        next *= dt;
        next += x;
        for (std::size_t j = 0; j < diffusions.size(); ++j) {
            T g = diffusions[j](t, x);
            g *= noise.dW(streams[j], static_cast<std::uint64_t>(k), sdt);
            next += g;
        }
        out.at(k + 1) = next;
        detail::check_state(next, grid.t(k + 1));
    }
    return out;
}

}  // namespace mfsg
