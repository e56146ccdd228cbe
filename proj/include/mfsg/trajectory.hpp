#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mfsg/linalg.hpp"
#include "mfsg/time_grid.hpp"

namespace mfsg {

/// A function of time sampled on a uniform grid; one value per node.
template <class T>
struct Trajectory {
    TimeGrid grid;
    std::vector<T> values;

    Trajectory() = default;
    explicit Trajectory(const TimeGrid& g) : grid(g), values(static_cast<std::size_t>(g.nodes())) {}
    Trajectory(const TimeGrid& g, std::vector<T> v) : grid(g), values(std::move(v)) {}

    const T& at(int k) const { return values[static_cast<std::size_t>(k)]; }
    T& at(int k) { return values[static_cast<std::size_t>(k)]; }

    const T& front() const { return values.front(); }
    const T& back() const { return values.back(); }

    // Piecewise-linear evaluation between nodes; clamped at the ends.
    T lerp(double t) const {
        const double x = t / grid.dt();
        if (x <= 0.0) return values.front();
        if (x >= grid.steps) return values.back();
        const int i = static_cast<int>(x);
        const double f = x - i;
        T a = values[static_cast<std::size_t>(i)];
        T b = values[static_cast<std::size_t>(i + 1)];
        a *= (1.0 - f);
        b *= f;
        a += b;
        return a;
    }

    bool finite() const {
        for (const T& v : values)
            if (!all_finite(v)) return false;
        return true;
    }
};

using ScalarTrajectory = Trajectory<double>;

template <class T, class F>
Trajectory<T> tabulate(const TimeGrid& g, F&& f) {
    Trajectory<T> out(g);
    for (int k = 0; k <= g.steps; ++k) out.at(k) = f(k);
    return out;
}

inline double max_abs_diff(const ScalarTrajectory& a, const ScalarTrajectory& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        m = std::max(m, std::abs(a.values[i] - b.values[i]));
    return m;
}

}  // namespace mfsg
