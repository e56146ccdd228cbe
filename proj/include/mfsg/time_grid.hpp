#pragma once

#include <cassert>

namespace mfsg {

// Uniform grid t_k = k*T/steps on [0, T].
struct TimeGrid {
    double T = 1.0;
    int steps = 1000;

    double dt() const { return T / steps; }
    double t(int k) const { return T * static_cast<double>(k) / static_cast<double>(steps); }
    int nodes() const { return steps + 1; }

    TimeGrid refined(int factor) const { return TimeGrid{T, steps * factor}; }
};

}  // namespace mfsg
