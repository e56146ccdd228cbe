#pragma once

#include <optional>
#include <utility>

#include "mfsg/equilibrium.hpp"
#include "mfsg/follower.hpp"
#include "mfsg/game_sim.hpp"
#include "mfsg/leader.hpp"
#include "mfsg/model.hpp"

namespace mfsg {

// The synthesis pipeline end to end: follower Riccati pair and gains, leader
// system, then the mean boundary-value cross-solve with the leader's mean
// control. Immutable once built; shared read-only by simulations.
struct Pipeline {
    LoadedConfig cfg;
    SampledModel sampled;
    AssumptionReport report;
    FollowerSynthesis follower;
    LeaderSynthesis leader;
    FbodeSolution fbode;
    StrategyProfiles profiles;

    OdeScheme scheme() const { return cfg.sim.euler_mode ? OdeScheme::euler : OdeScheme::rk4; }
};

/// Synthesis just far enough to evaluate every checkable condition; no
/// asymmetric Riccati equation, no mean sweeps.
inline AssumptionReport evaluate_assumptions(const LoadedConfig& cfg) {
    const OdeScheme scheme = cfg.sim.euler_mode ? OdeScheme::euler : OdeScheme::rk4;
    AssumptionReport rep = check_standing_assumptions(cfg.model, cfg.grid);
    if (!rep.weights_ok) return rep;

    const ScalarTrajectory p1 = solve_p1(cfg.model, cfg.grid, scheme);
    const ScalarTrajectory p2 = solve_p2(cfg.model, p1, cfg.grid, scheme);
    const CouplingCheck cc = check_coupling_source(cfg.model, p1, cfg.grid);
    rep.coupling_ok = cc.ok;
    rep.coupling_first_violation = cc.first_violation_t;
    rep.coupling_min = cc.min_value;

    const FollowerSynthesis fs = follower_gains(cfg.model, p1, p2, cfg.grid);
    const ScalarTrajectory zero_u0(cfg.grid);
    auto [Pi, Delta] = build_pi_delta(cfg.model, fs, zero_u0, cfg.grid);
    (void)Delta;
    const SolvabilityCheck sc = check_fbode_solvability(Pi, cfg.grid, scheme);
    rep.bvp_det = sc.theta33;
    rep.bvp_ok = sc.ok;

    const LeaderSystem sys =
        assemble_leader_system(cfg.model, fs, cfg.grid, cfg.sim.faithful_typos);
    const Trajectory<Mat3> g1 = solve_gamma1(sys, cfg.model, cfg.grid, scheme);
    const R0Check rc = check_r0(cfg.model, g1, cfg.grid);
    rep.r0_min = rc.r0_min;
    rep.r0_ok = rc.ok;
    return rep;
}

inline Pipeline build_pipeline(LoadedConfig cfg) {
    Pipeline p;
    p.cfg = std::move(cfg);
    const OdeScheme scheme = p.scheme();
    p.sampled = SampledModel::build(p.cfg.model, p.cfg.grid);
    p.report = check_standing_assumptions(p.cfg.model, p.cfg.grid);
    if (!p.report.weights_ok)
        throw NumericsError(NumericsError::Kind::internal, p.report.weights_first_violation,
                            "weight conditions violated: " + p.report.weights_what);

    ScalarTrajectory p1 = solve_p1(p.cfg.model, p.cfg.grid, scheme);
    ScalarTrajectory p2 = solve_p2(p.cfg.model, p1, p.cfg.grid, scheme);
    for (int k = 0; k <= p.cfg.grid.steps; ++k)
        if (p1.at(k) < -1e-12)
            throw NumericsError(NumericsError::Kind::internal, p.cfg.grid.t(k),
                                "first Riccati solution went negative");
    const CouplingCheck cc = check_coupling_source(p.cfg.model, p1, p.cfg.grid);
    p.report.coupling_ok = cc.ok;
    p.report.coupling_first_violation = cc.first_violation_t;
    p.report.coupling_min = cc.min_value;

    p.follower = follower_gains(p.cfg.model, std::move(p1), std::move(p2), p.cfg.grid);
    p.leader = synthesize_leader(p.cfg.model, p.follower, p.cfg.grid, p.cfg.sim.faithful_typos,
                                 scheme);

    const R0Check rc = check_r0(p.cfg.model, p.leader.gamma1, p.cfg.grid);
    p.report.r0_min = rc.r0_min;
    p.report.r0_ok = rc.ok;

    // mean boundary-value system under the leader's mean control
    auto [Pi, Delta] = build_pi_delta(p.cfg.model, p.follower, p.leader.eu0_star, p.cfg.grid);
    (void)Delta;
    const SolvabilityCheck sc = check_fbode_solvability(Pi, p.cfg.grid, scheme);
    p.report.bvp_det = sc.theta33;
    p.report.bvp_ok = sc.ok;
    if (sc.ok)
        p.fbode = solve_fbode(p.cfg.model, p.follower, p.leader.eu0_star, p.cfg.grid, scheme);

    p.profiles = StrategyProfiles::build(p.follower, p.leader, p.cfg.grid);
    return p;
}

}  // namespace mfsg
