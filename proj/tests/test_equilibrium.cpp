#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mfsg/equilibrium.hpp"
#include "mfsg/pipeline.hpp"
#include "test_support.hpp"

using namespace mfsg;

namespace {

LoadedConfig patched_experiment(const std::vector<std::pair<std::string, std::string>>& edits,
                                int steps = 1000) {
    std::string text = mfsg_test::experiment_config(steps);
    for (const auto& [from, to] : edits) {
        const auto pos = text.find(from);
        REQUIRE(pos != std::string::npos);
        text.replace(pos, from.size(), to);
    }
    return load_config(text);
}

}  // namespace

TEST_CASE("gap statistic vanishes without noise and coupling") {
    const LoadedConfig cfg = patched_experiment(
        {{"E1 = 1", "E1 = 0"}, {"F1 = 1", "F1 = 0"}, {"Ft1 = 1", "Ft1 = 0"},
         {"C1 = 1", "C1 = 0"}, {"D1 = 1", "D1 = 0"}, {"Ct1 = 1", "Ct1 = 0"},
         {"Dt1 = 1", "Dt1 = 0"}, {"sigma1 = 1", "sigma1 = 0"}, {"sigmat1 = 1", "sigmat1 = 0"},
         {"C0 = 1", "C0 = 0"}, {"D0 = 1", "D0 = 0"}, {"F0 = 1", "F0 = 0"},
         {"Ct0 = 1", "Ct0 = 0"}, {"Dt0 = 1", "Dt0 = 0"}, {"Ft0 = 1", "Ft0 = 0"},
         {"sigma0 = 1", "sigma0 = 0"}, {"sigmat0 = 1", "sigmat0 = 0"}},
        500);
    const Pipeline p = build_pipeline(cfg);
    SimConfig sim;
    sim.grid = cfg.grid;
    sim.seed = 2;
    sim.mc_paths = 3;
    sim.threads = 1;
    const EpsilonPoint e = epsilon_of_n(p.profiles, p.sampled, cfg.model, sim, 7);
    CHECK(e.epsilon <= 5e-4);  // identical agents, only one-step-scheme residue
}

TEST_CASE("log-log decay fit") {
    SECTION("exact inverse square root") {
        EpsilonSweep sweep;
        for (int n : {10, 40, 90, 160, 250})
            sweep.points.push_back({n, 3.7 / std::sqrt(static_cast<double>(n)), 0.0});
        const DecayFit fit = fit_decay_rate(sweep);
        CHECK(std::abs(fit.slope - (-0.5)) < 1e-12);
        CHECK(std::abs(fit.intercept - std::log(3.7)) < 1e-12);
        CHECK(fit.r2 >= 1.0 - 1e-12);
    }
    SECTION("exact inverse law") {
        EpsilonSweep sweep;
        for (int n : {10, 100, 1000, 10000})
            sweep.points.push_back({n, 0.2 / static_cast<double>(n), 0.0});
        const DecayFit fit = fit_decay_rate(sweep);
        CHECK(std::abs(fit.slope - (-1.0)) < 1e-12);
    }
    SECTION("two points fit trivially") {
        EpsilonSweep sweep;
        sweep.points.push_back({10, 0.4, 0.1});
        sweep.points.push_back({100, 0.13, 0.03});
        const DecayFit fit = fit_decay_rate(sweep);
        CHECK(fit.r2 >= 1.0 - 1e-12);
    }
    SECTION("degenerate inputs are rejected") {
        EpsilonSweep empty;
        CHECK_THROWS_AS(fit_decay_rate(empty), DegenerateFit);
        EpsilonSweep bad;
        bad.points.push_back({10, 0.4, 0.0});
        bad.points.push_back({100, 0.0, 0.0});
        CHECK_THROWS_AS(fit_decay_rate(bad), DegenerateFit);
    }
}

TEST_CASE("population growth shrinks the gap at the square-root rate") {
    // moderate common-noise loadings keep the estimator's tails in check
    const LoadedConfig cfg =
        patched_experiment({{"Ct1 = 1", "Ct1 = 0.3"}, {"Ft1 = 1", "Ft1 = 0.3"}});
    const Pipeline p = build_pipeline(cfg);
    SimConfig sim;
    sim.grid = cfg.grid;
    sim.seed = 2;
    sim.mc_paths = 200;
    sim.threads = 1;
    const EpsilonPoint e100 = epsilon_of_n(p.profiles, p.sampled, cfg.model, sim, 100);
    const EpsilonPoint e400 = epsilon_of_n(p.profiles, p.sampled, cfg.model, sim, 400);
    const double ratio = e400.epsilon / e100.epsilon;
    CHECK(ratio >= 0.4);
    CHECK(ratio <= 0.65);
}

TEST_CASE("gap estimates are reproducible bit-exactly") {
    const LoadedConfig cfg = mfsg_test::experiment_loaded(300);
    const Pipeline p = build_pipeline(cfg);
    SimConfig sim;
    sim.grid = cfg.grid;
    sim.seed = 2;
    sim.mc_paths = 20;
    sim.threads = 1;
    const EpsilonPoint a = epsilon_of_n(p.profiles, p.sampled, cfg.model, sim, 15);
    const EpsilonPoint b = epsilon_of_n(p.profiles, p.sampled, cfg.model, sim, 15);
    CHECK(a.epsilon == b.epsilon);
    CHECK(a.stderr_ == b.stderr_);
}

TEST_CASE("deviation directions respect the deviator's information") {
    DirectionSpec bad;
    bad.kind = DirectionSpec::Kind::constant;
    bad.observes_stream = static_cast<std::int64_t>(kStreamCommon);
    bad.name = "reads-common-noise";
    CHECK_THROWS_AS(validate_direction(bad, Deviator::leader, 10), InadmissibleDirection);
    CHECK_THROWS_AS(validate_direction(bad, Deviator::follower_one, 10), InadmissibleDirection);

    DirectionSpec own;
    own.kind = DirectionSpec::Kind::constant;
    own.observes_stream = static_cast<std::int64_t>(kStreamLeader);
    CHECK_NOTHROW(validate_direction(own, Deviator::leader, 10));
    CHECK_THROWS_AS(validate_direction(own, Deviator::follower_one, 10), InadmissibleDirection);
}

TEST_CASE("zero-magnitude deviations change nothing, exactly") {
    const LoadedConfig cfg = mfsg_test::experiment_loaded(400);
    const Pipeline p = build_pipeline(cfg);
    SimConfig sim;
    sim.grid = cfg.grid;
    sim.seed = 2;
    sim.mc_paths = 10;
    sim.threads = 1;
    const std::vector<DirectionSpec> lib = direction_library();
    for (Deviator who : {Deviator::leader, Deviator::follower_one}) {
        const GapEstimate g =
            perturbation_gap(p.profiles, p.sampled, cfg.model, sim, 20, who, lib[0], 0.0);
        CHECK(g.gap.value == 0.0);
        CHECK(g.gap.stderr_ == 0.0);
    }
}

TEST_CASE("gap is convex-quadratic in the deviation magnitude") {
    const LoadedConfig cfg = mfsg_test::experiment_loaded();
    const Pipeline p = build_pipeline(cfg);
    SimConfig sim;
    sim.grid = cfg.grid;
    sim.seed = 2;
    sim.mc_paths = 100;
    sim.threads = 1;
    const int n_agents = 50;
    const std::vector<DirectionSpec> lib = direction_library();
    const std::vector<double> deltas{0.1, 0.25, 0.5};

    std::vector<GapTrial> trials;
    for (int d : {0, 3, 9})
        for (double delta : deltas)
            for (Deviator who : {Deviator::leader, Deviator::follower_one})
                trials.push_back({who, d, delta});
    const std::vector<GapEstimate> gaps =
        perturbation_gap_batch(p.profiles, p.sampled, cfg.model, sim, n_agents, lib, trials);

    // least squares fit gap(delta) = a delta^2 + b delta per (who, direction)
    for (int d_idx = 0; d_idx < 3; ++d_idx) {
        for (int who_idx = 0; who_idx < 2; ++who_idx) {
            double s4 = 0, s3 = 0, s2 = 0, r2v = 0, r1v = 0;
            std::vector<double> g(3), se(3);
            for (int j = 0; j < 3; ++j) {
                const std::size_t idx =
                    static_cast<std::size_t>(d_idx * 6 + j * 2 + who_idx);
                g[static_cast<std::size_t>(j)] = gaps[idx].gap.value;
                se[static_cast<std::size_t>(j)] = gaps[idx].gap.stderr_;
                const double dl = deltas[static_cast<std::size_t>(j)];
                s4 += dl * dl * dl * dl;
                s3 += dl * dl * dl;
                s2 += dl * dl;
                r2v += dl * dl * g[static_cast<std::size_t>(j)];
                r1v += dl * g[static_cast<std::size_t>(j)];
            }
            const double det = s4 * s2 - s3 * s3;
            const double a = (s2 * r2v - s3 * r1v) / det;
            // error propagation: a is a linear functional of the gaps
            double var_a = 0.0;
            for (int j = 0; j < 3; ++j) {
                const double dl = deltas[static_cast<std::size_t>(j)];
                const double w = (s2 * dl * dl - s3 * dl) / det;
                var_a += w * w * se[static_cast<std::size_t>(j)] * se[static_cast<std::size_t>(j)];
            }
            CHECK(a >= -3.0 * std::sqrt(var_a));
        }
    }
}
