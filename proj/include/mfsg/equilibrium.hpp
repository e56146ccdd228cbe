#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mfsg/errors.hpp"
#include "mfsg/game_sim.hpp"

namespace mfsg {

struct EpsilonPoint {
    int n_agents = 0;
    double epsilon = 0.0;
    double stderr_ = 0.0;
};

struct EpsilonSweep {
    std::vector<EpsilonPoint> points;
};

struct DecayFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;

    double epsilon_at(double n) const { return std::exp(intercept + slope * std::log(n)); }
};

/// Root of the mean time-integrated squared gap between the frozen mean-field
/// path and the population average, at population size N.
inline EpsilonPoint epsilon_of_n(const StrategyProfiles& profiles, const SampledModel& sm,
                                 const ModelCoefficients& m, const SimConfig& cfg, int n_agents) {
    std::vector<PathResult> results(static_cast<std::size_t>(cfg.mc_paths));
    for_each_path(cfg, [&](int pid) {
        NoiseBundle noise{cfg.seed, static_cast<std::uint64_t>(pid)};
        results[static_cast<std::size_t>(pid)] =
            simulate_path(profiles, sm, m, n_agents, noise);
    });
    std::vector<double> eps2;
    eps2.reserve(results.size());
    for (const PathResult& r : results) eps2.push_back(r.eps2);
    const Estimate e2 = mean_and_se(eps2);
    const double eps = std::sqrt(std::max(0.0, e2.value));
    return {n_agents, eps, eps > 0.0 ? e2.stderr_ / (2.0 * eps) : e2.stderr_};
}

/// Least-squares fit of log(epsilon) on log(N).
inline DecayFit fit_decay_rate(const EpsilonSweep& sweep) {
    if (sweep.points.size() < 2) throw DegenerateFit("need at least two sweep points");
    std::vector<double> lx, ly;
    for (const EpsilonPoint& p : sweep.points) {
        if (!(p.epsilon > 0.0)) throw DegenerateFit("nonpositive epsilon in sweep");
        lx.push_back(std::log(static_cast<double>(p.n_agents)));
        ly.push_back(std::log(p.epsilon));
    }
    const double n = static_cast<double>(lx.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    if (sxx == 0.0) throw DegenerateFit("all sweep points share one population size");
    DecayFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ssres = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        const double e = ly[i] - (fit.intercept + fit.slope * lx[i]);
        ssres += e * e;
    }
    fit.r2 = syy > 0.0 ? 1.0 - ssres / syy : 1.0;
    return fit;
}

// ---------------------------------------------------------------------------
// Perturbation directions: a small adversarial family of admissible control
// deviations. A direction may only read time and the deviating entity's own
// filter state, which keeps it adapted to that entity's information.
// ---------------------------------------------------------------------------

struct DirectionSpec {
    enum class Kind { constant, bump, state_proportional };
    Kind kind = Kind::constant;
    double amplitude = 1.0;
    double t_lo = 0.0, t_hi = 0.0;  // bump support, fractions of the horizon
    // A direction declaring that it reads a noise stream directly; admissible
    // only when it is the deviating entity's own stream.
    std::int64_t observes_stream = -1;
    std::string name;

    double value(double t_frac, double own_state) const {
        switch (kind) {
            case Kind::constant: return amplitude;
            case Kind::bump: return (t_frac >= t_lo && t_frac < t_hi) ? amplitude : 0.0;
            case Kind::state_proportional: return amplitude * own_state;
        }
        return 0.0;
    }
};

/// The default library: constants, bumps on dyadic subintervals, one
/// state-proportional tweak.
inline std::vector<DirectionSpec> direction_library() {
    using K = DirectionSpec::Kind;
    std::vector<DirectionSpec> lib;
    lib.push_back({K::constant, 1.0, 0, 0, -1, "const+1"});
    lib.push_back({K::constant, -1.0, 0, 0, -1, "const-1"});
    lib.push_back({K::bump, 1.0, 0.0, 0.5, -1, "bump[0,1/2)"});
    lib.push_back({K::bump, 1.0, 0.5, 1.0, -1, "bump[1/2,1]"});
    lib.push_back({K::bump, -1.0, 0.25, 0.5, -1, "bump[1/4,1/2)-"});
    lib.push_back({K::bump, 1.0, 0.0, 0.25, -1, "bump[0,1/4)"});
    lib.push_back({K::bump, 1.0, 0.75, 1.0, -1, "bump[3/4,1]"});
    lib.push_back({K::bump, -1.0, 0.125, 0.25, -1, "bump[1/8,1/4)-"});
    lib.push_back({K::bump, 1.0, 0.5, 0.75, -1, "bump[1/2,3/4)"});
    lib.push_back({K::state_proportional, 1.0, 0, 0, -1, "state"});
    return lib;
}

enum class Deviator { leader, follower_one };

inline void validate_direction(const DirectionSpec& dir, Deviator who, int n_agents) {
    (void)n_agents;
    if (dir.observes_stream < 0) return;
    const std::uint64_t allowed =
        who == Deviator::leader ? kStreamLeader : follower_stream(1);
    if (static_cast<std::uint64_t>(dir.observes_stream) != allowed)
        throw InadmissibleDirection("direction '" + dir.name +
                                    "' reads a noise stream outside the deviator's information");
}

struct GapEstimate {
    Estimate gap;          // J(perturbed) - J(equilibrium), paired by path
    double j_base = 0.0;   // equilibrium cost of the deviating entity
};

/// Cost change when one entity deviates from its synthesized strategy by
/// delta times a direction, with the rest of the population held fixed and
/// identical noise on both arms (common random numbers).
inline GapEstimate perturbation_gap(const StrategyProfiles& profiles, const SampledModel& sm,
                                    const ModelCoefficients& m, const SimConfig& cfg,
                                    int n_agents, Deviator who, const DirectionSpec& dir,
                                    double delta,
                                    const std::vector<PathResult>* base_cache = nullptr) {
    validate_direction(dir, who, n_agents);

    const TimeGrid& grid = profiles.grid;
    ControlTweak tweak;
    tweak.who =
        who == Deviator::leader ? ControlTweak::Who::leader : ControlTweak::Who::follower_one;
    tweak.delta = delta;
    tweak.shape = [&dir, &grid](int k, double own) {
        return dir.value(grid.t(k) / grid.T, own);
    };

    std::vector<PathResult> base_local;
    if (!base_cache) {
        base_local.resize(static_cast<std::size_t>(cfg.mc_paths));
        for_each_path(cfg, [&](int pid) {
            NoiseBundle noise{cfg.seed, static_cast<std::uint64_t>(pid)};
            base_local[static_cast<std::size_t>(pid)] =
                simulate_path(profiles, sm, m, n_agents, noise);
        });
        base_cache = &base_local;
    }

    std::vector<PathResult> pert(static_cast<std::size_t>(cfg.mc_paths));
    for_each_path(cfg, [&](int pid) {
        NoiseBundle noise{cfg.seed, static_cast<std::uint64_t>(pid)};
        pert[static_cast<std::size_t>(pid)] =
            simulate_path(profiles, sm, m, n_agents, noise, tweak);
    });

    std::vector<double> diffs(pert.size());
    double base_mean = 0.0;
    for (std::size_t i = 0; i < pert.size(); ++i) {
        const double jp = who == Deviator::leader ? pert[i].j0_c : pert[i].j1_c;
        const double jb =
            who == Deviator::leader ? (*base_cache)[i].j0_c : (*base_cache)[i].j1_c;
        diffs[i] = jp - jb;
        base_mean += jb;
    }
    base_mean /= static_cast<double>(pert.size());
    return {mean_and_se(diffs), base_mean};
}

struct GapTrial {
    Deviator who = Deviator::leader;
    int direction_id = 0;
    double delta = 0.0;
};

/// All trials of a batch share one noise cache per path, so each path draws
/// its increments once and every (equilibrium, perturbed) pair runs on
/// common random numbers.
inline std::vector<GapEstimate> perturbation_gap_batch(const StrategyProfiles& profiles,
                                                       const SampledModel& sm,
                                                       const ModelCoefficients& m,
                                                       const SimConfig& cfg, int n_agents,
                                                       const std::vector<DirectionSpec>& lib,
                                                       const std::vector<GapTrial>& trials) {
    for (const GapTrial& t : trials)
        validate_direction(lib[static_cast<std::size_t>(t.direction_id)], t.who, n_agents);

    const TimeGrid& grid = profiles.grid;
    const std::size_t n_paths = static_cast<std::size_t>(cfg.mc_paths);
    std::vector<std::vector<double>> diffs(trials.size(), std::vector<double>(n_paths));
    std::vector<double> base_j0(n_paths), base_j1(n_paths);

    PathProbes lite;
    lite.centralized_only = true;

    for_each_path(cfg, [&](int pid) {
        const CachedNoise noise = CachedNoise::draw(
            cfg.seed, static_cast<std::uint64_t>(pid),
            follower_stream(n_agents) + 1, grid.steps);
        const PathResult base = simulate_path(profiles, sm, m, n_agents, noise, {}, lite);
        base_j0[static_cast<std::size_t>(pid)] = base.j0_c;
        base_j1[static_cast<std::size_t>(pid)] = base.j1_c;
        for (std::size_t t = 0; t < trials.size(); ++t) {
            const GapTrial& trial = trials[t];
            const DirectionSpec& dir = lib[static_cast<std::size_t>(trial.direction_id)];
            ControlTweak tweak;
            tweak.who = trial.who == Deviator::leader ? ControlTweak::Who::leader
                                                      : ControlTweak::Who::follower_one;
            tweak.delta = trial.delta;
            tweak.shape = [&dir, &grid](int k, double own) {
                return dir.value(grid.t(k) / grid.T, own);
            };
            const PathResult pert =
                simulate_path(profiles, sm, m, n_agents, noise, tweak, lite);
            const double jb = trial.who == Deviator::leader ? base.j0_c : base.j1_c;
            const double jp = trial.who == Deviator::leader ? pert.j0_c : pert.j1_c;
            diffs[t][static_cast<std::size_t>(pid)] = jp - jb;
        }
    });

    std::vector<GapEstimate> out(trials.size());
    const Estimate j0e = mean_and_se(base_j0);
    const Estimate j1e = mean_and_se(base_j1);
    for (std::size_t t = 0; t < trials.size(); ++t) {
        out[t].gap = mean_and_se(diffs[t]);
        out[t].j_base = trials[t].who == Deviator::leader ? j0e.value : j1e.value;
    }
    return out;
}

}  // namespace mfsg
