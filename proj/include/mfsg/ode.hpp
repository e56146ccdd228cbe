#pragma once

#include <utility>

#include "mfsg/errors.hpp"
#include "mfsg/trajectory.hpp"

namespace mfsg {

enum class OdeScheme { rk4, euler };
enum class OdeDirection { forward, backward };

constexpr double kBlowUpLimit = 1e8;

namespace detail {

template <class T>
void check_state(const T& y, double t) {
    if (!all_finite(y) || max_abs(y) > kBlowUpLimit) throw BlowUpError(t);
}

template <class T, class F>
T rk4_step(F& field, double t, const T& y, double h) {
    T k1 = field(t, y);
    T y2 = k1;
    y2 *= h * 0.5;
    y2 += y;
    T k2 = field(t + 0.5 * h, y2);
    T y3 = k2;
    y3 *= h * 0.5;
    y3 += y;
    T k3 = field(t + 0.5 * h, y3);
    T y4 = k3;
    y4 *= h;
    y4 += y;
    T k4 = field(t + h, y4);

    k2 += k3;
    k2 *= 2.0;
    k1 += k2;
    k1 += k4;
    k1 *= h / 6.0;
    k1 += y;
    return k1;
}

template <class T, class F>
T euler_step(F& field, double t, const T& y, double h) {
    T k = field(t, y);
    k *= h;
    k += y;
    return k;
}

}  // namespace detail

/// Integrate dy/dt = field(t, y) across the grid. Forward runs from values[0]
/// = initial; backward runs in reversed time from values[steps] = initial.
/// Throws BlowUpError when the state leaves [-1e8, 1e8] or goes non-finite.
template <class T, class F>
Trajectory<T> integrate_ode(F field, const T& initial, const TimeGrid& grid,
                            OdeDirection dir = OdeDirection::forward,
                            OdeScheme scheme = OdeScheme::rk4) {
    Trajectory<T> out(grid);
    const double dt = grid.dt();
    auto step = [&](double t, const T& y, double h) {
        return scheme == OdeScheme::rk4 ? detail::rk4_step<T>(field, t, y, h)
                                        : detail::euler_step<T>(field, t, y, h);
    };
    if (dir == OdeDirection::forward) {
        out.at(0) = initial;
        detail::check_state(initial, 0.0);
        for (int k = 0; k < grid.steps; ++k) {
            out.at(k + 1) = step(grid.t(k), out.at(k), dt);
            detail::check_state(out.at(k + 1), grid.t(k + 1));
        }
    } else {
        out.at(grid.steps) = initial;
        detail::check_state(initial, grid.T);
        for (int k = grid.steps; k > 0; --k) {
            out.at(k - 1) = step(grid.t(k), out.at(k), -dt);
            detail::check_state(out.at(k - 1), grid.t(k - 1));
        }
    }
    return out;
}

/// Fundamental solution of dM/dt = field(t) * M with M(0) = I.
template <class F>
Trajectory<Mat3> fundamental_matrix(F field, const TimeGrid& grid,
                                    OdeScheme scheme = OdeScheme::rk4) {
    auto rhs = [&field](double t, const Mat3& m) { return field(t) * m; };
    return integrate_ode<Mat3>(rhs, Mat3::identity(), grid, OdeDirection::forward, scheme);
}

}  // namespace mfsg
