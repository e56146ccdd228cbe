// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavier Monte Carlo work shares the synthesized pipeline.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mfsg/commands.hpp"
#include "mfsg/equilibrium.hpp"
#include "mfsg/pipeline.hpp"
#include "mfsg/sde.hpp"
#include "test_support.hpp"

using namespace mfsg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            pass = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
    void note(const std::string& what) {
        if (!detail.empty()) detail += "; ";
        detail += what;
    }
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

const fs::path kOut = fs::temp_directory_path() / "mfsg_acceptance";

}  // namespace

int main() {
    int failures = 0;
    const LoadedConfig cfg = mfsg_test::experiment_loaded(1000, 300, 200, 2);
    Pipeline pipe;

    auto run = [&failures](int id, const std::string& name, double budget_s,
                           const std::function<void(Outcome&)>& body) {
        Outcome out;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            body(out);
        } catch (const std::exception& e) {
            out.require(false, std::string("exception: ") + e.what());
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (budget_s > 0.0) out.require(secs < budget_s, "runtime " + fmt(secs) + "s over budget");
        std::printf("[%s] criterion %2d: %s (%s) [%.2fs]\n", out.pass ? "PASS" : "FAIL", id,
                    name.c_str(), out.detail.empty() ? "ok" : out.detail.c_str(), secs);
        std::fflush(stdout);
        if (!out.pass) ++failures;
    };

    run(1, "closed-form Riccati oracle and fourth-order refinement", 1.0, [&](Outcome& out) {
        ModelCoefficients m;
        m.B1 = Coefficient(1.0);
        m.R1 = Coefficient(1.0);
        m.G1 = 1.0;
        const ScalarTrajectory p1 = solve_p1(m, TimeGrid{1.0, 1000});
        out.require(std::abs(p1.front() - 0.5) < 1e-7,
                    "P1(0) off the closed form by " + fmt(std::abs(p1.front() - 0.5)));
        auto err = [&m](int steps) {
            return std::abs(solve_p1(m, TimeGrid{1.0, steps}).front() - 0.5);
        };
        const double r1 = err(100) / err(200);
        const double r2 = err(200) / err(400);
        out.require(r1 >= 12.0, "refinement factor " + fmt(r1) + " < 12");
        out.require(r2 >= 12.0, "refinement factor " + fmt(r2) + " < 12");
    });

    run(2, "terminal and initial conditions bit-exact", 0.0, [&](Outcome& out) {
        pipe = build_pipeline(cfg);
        out.require(pipe.follower.p1.back() == cfg.model.G1, "P1(T) != G1");
        out.require(pipe.follower.p2.back() == 0.0, "P2(T) != 0");
        out.require(max_abs(pipe.leader.gamma1.back() - pipe.leader.system.G0cal) == 0.0,
                    "Gamma1(T) != terminal weight");
        out.require(max_abs(pipe.leader.gamma2.back()) == 0.0, "Gamma2(T) != 0");
        out.require(max_abs(pipe.leader.ephi_cap.back()) == 0.0, "EPhi(T) != 0");
        out.require(max_abs(pipe.leader.ex.front() - pipe.leader.system.Xi) == 0.0,
                    "EX(0) != initial data");
    });

    run(3, "symmetric Riccati solution: symmetry and semidefiniteness", 1.0, [&](Outcome& out) {
        double asym = 0.0, min_eig = 1e300;
        for (int k = 0; k <= cfg.grid.steps; ++k) {
            asym = std::max(asym, max_asymmetry(pipe.leader.gamma1.at(k)));
            min_eig = std::min(min_eig, sym_eigenvalues(pipe.leader.gamma1.at(k))[0]);
        }
        out.require(asym <= 1e-10, "asymmetry " + fmt(asym));
        out.require(min_eig >= -1e-8, "min eigenvalue " + fmt(min_eig));
        out.note("asym " + fmt(asym) + ", min eig " + fmt(min_eig));
    });

    run(4, "cross-equation consistency of the mean system", 0.0, [&](Outcome& out) {
        double dz = 0.0;
        for (int k = 0; k <= cfg.grid.steps; ++k)
            dz = std::max(dz, std::abs(pipe.fbode.Ez.at(k) - pipe.leader.ex.at(k)[1]));
        out.require(dz <= 1e-6, "boundary-value route off by " + fmt(dz));

        const double dt = cfg.grid.dt();
        double res = 0.0;
        for (int k = 1; k < cfg.grid.steps; ++k) {
            const double dphi =
                (pipe.leader.ephi_star.at(k + 1) - pipe.leader.ephi_star.at(k - 1)) / (2.0 * dt);
            const double rhs = pipe.follower.m1.at(k) * pipe.leader.ephi_star.at(k) +
                               cfg.model.Q1(cfg.grid.t(k)) * cfg.model.lambda *
                                   pipe.leader.ex.at(k)[0] +
                               pipe.follower.m2.at(k);
            res = std::max(res, std::abs(dphi - rhs));
        }
        out.require(res <= 1e-4, "adjoint-mean residual " + fmt(res));
        out.note("route gap " + fmt(dz) + ", residual " + fmt(res));
    });

    run(5, "boundary-value determinant check", 0.0, [&](Outcome& out) {
        const TimeGrid grid{1.0, 500};
        Trajectory<Mat3> zero(grid);
        const SolvabilityCheck z = check_fbode_solvability(zero, grid);
        out.require(z.theta33 == 1.0, "zero system determinant != 1");
        out.require(pipe.report.bvp_ok, "experiment verdict failed");
        out.note("theta33 " + fmt(pipe.report.bvp_det));
    });

    run(6, "mean-consistency of follower filters (N=50, 200 paths)", 30.0, [&](Outcome& out) {
        SimConfig sim;
        sim.grid = cfg.grid;
        sim.seed = cfg.sim.seed;
        sim.mc_paths = 200;
        sim.n_agents = 50;
        sim.threads = 1;
        PathProbes probes;
        for (int k = 0; k <= cfg.grid.steps; k += 10) probes.nodes.push_back(k);
        probes.xhat_stats = true;
        std::vector<PathResult> results(static_cast<std::size_t>(sim.mc_paths));
        for_each_path(sim, [&](int pid) {
            NoiseBundle noise{sim.seed, static_cast<std::uint64_t>(pid)};
            results[static_cast<std::size_t>(pid)] =
                simulate_path(pipe.profiles, pipe.sampled, cfg.model, 50, noise, {}, probes);
        });
        double worst = 0.0;
        for (std::size_t j = 0; j < probes.nodes.size(); ++j) {
            double sum = 0.0, sumsq = 0.0, n = 0.0;
            for (const PathResult& r : results) {
                sum += r.xhat_sum[j];
                sumsq += r.xhat_sumsq[j];
                n += 50;
            }
            const double mean = sum / n;
            const double se = std::sqrt(std::max(0.0, sumsq / n - mean * mean) / n);
            const double z = std::abs(mean - pipe.profiles.ez[static_cast<std::size_t>(
                                                 probes.nodes[j])]) /
                             (se > 0.0 ? se : 1e-300);
            worst = std::max(worst, z);
        }
        out.require(worst <= 3.0, "worst deviation " + fmt(worst) + " standard errors");
        out.note("worst deviation " + fmt(worst) + " SE over " +
                 std::to_string(probes.nodes.size()) + " nodes");
    });

    run(7, "stochastic stepping kernel: moment and weak-order checks", 30.0, [&](Outcome& out) {
        {
            const TimeGrid grid{1.0, 100};
            auto drift = [](double, double x) { return 0.1 * x; };
            std::vector<double (*)(double, double)> diffs{+[](double, double x) { return x; }};
            std::vector<std::uint64_t> streams{kStreamLeader};
            double sum = 0.0, sumsq = 0.0;
            const int paths = 10000;
            for (int p = 0; p < paths; ++p) {
                NoiseBundle noise{99, static_cast<std::uint64_t>(p)};
                const double x = euler_maruyama(drift, diffs, streams, 0.5, grid, noise).back();
                sum += x;
                sumsq += x * x;
            }
            const double mean = sum / paths;
            const double se = std::sqrt((sumsq / paths - mean * mean) / paths);
            const double target = 0.5 * std::exp(0.1);
            out.require(std::abs(mean - target) <= 3.0 * se,
                        "terminal mean off by " + fmt(std::abs(mean - target) / se) + " SE");
        }
        {
            // nested coarse/fine increments isolate the bias differences
            const int paths = 8000000;
            auto terminal = [](int steps, std::uint64_t pid, int fine_per) {
                const double dt = 1.0 / steps;
                const double sfdt = std::sqrt(1.0 / 8.0);
                double x = 0.5;
                int idx = 0;
                for (int k = 0; k < steps; ++k) {
                    double dW = 0.0;
                    for (int j = 0; j < fine_per; ++j)
                        dW += normal_draw(2024, pid, 0, static_cast<std::uint64_t>(idx++)) * sfdt;
                    x += 0.1 * x * dt + x * dW;
                }
                return x;
            };
            double d1 = 0.0, d2 = 0.0, d1sq = 0.0, d2sq = 0.0;
            for (int p = 0; p < paths; ++p) {
                const auto pid = static_cast<std::uint64_t>(p);
                const double x2 = terminal(2, pid, 4);
                const double x4 = terminal(4, pid, 2);
                const double x8 = terminal(8, pid, 1);
                const double a = x2 - x4;
                const double b = x4 - x8;
                d1 += a;
                d2 += b;
                d1sq += a * a;
                d2sq += b * b;
            }
            const double n = static_cast<double>(paths);
            d1 /= n;
            d2 /= n;
            const double se1 = std::sqrt((d1sq / n - d1 * d1) / n);
            const double se2 = std::sqrt((d2sq / n - d2 * d2) / n);
            out.require(std::abs(d1 - 2.0 * d2) <= 3.0 * (se1 + 2.0 * se2),
                        "bias difference does not halve: d1=" + fmt(d1) + " d2=" + fmt(d2));
            const double exact1 = 0.5 * (std::pow(1.05, 2) - std::pow(1.025, 4));
            out.require(std::abs(d1 - exact1) <= 3.0 * se1,
                        "level-1 bias difference off its closed form");
            out.note("bias diffs " + fmt(d1) + " vs " + fmt(d2) + " (ratio " + fmt(d1 / d2) +
                     ")");
        }
    });

    std::vector<EpsilonPoint> sweep_points;
    run(8, "experiment reproduction: tables, tracking, sweep", 300.0, [&](Outcome& out) {
        fs::remove_all(kOut);
        fs::create_directories(kOut);
        const fs::path cfg_path = kOut / "experiment.cfg";
        {
            std::ofstream f(cfg_path);
            f << mfsg_test::experiment_config(1000, 300, 200, 2);
        }
        CommandOptions opt;
        opt.config_path = cfg_path.string();
        opt.out_dir = (kOut / "synth").string();
        std::ostringstream sink;
        opt.out = &sink;
        out.require(cmd_synthesize(opt) == exit_ok, "synthesize command failed");
        for (const char* name : {"p.csv", "gamma1.csv", "gamma2.csv", "mean_profiles.csv"}) {
            const fs::path f = kOut / "synth" / name;
            out.require(fs::exists(f), std::string(name) + " missing");
            // finite, continuous columns
            std::ifstream in(f);
            std::string line;
            std::getline(in, line);
            std::vector<double> prev;
            int row = 0;
            bool smooth = true, finite = true;
            while (std::getline(in, line)) {
                std::vector<double> vals;
                std::stringstream ss(line);
                std::string cell;
                while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
                for (double v : vals)
                    if (!std::isfinite(v)) finite = false;
                if (row > 0)
                    for (std::size_t c = 1; c < vals.size(); ++c)
                        if (std::abs(vals[c] - prev[c]) > 0.2) smooth = false;
                prev = vals;
                ++row;
            }
            out.require(finite, std::string(name) + " has non-finite entries");
            out.require(smooth, std::string(name) + " jumps between nodes");
        }

        opt.out_dir = (kOut / "sim").string();
        out.require(cmd_simulate(opt) == exit_ok, "simulate command failed");
        out.require(fs::exists(kOut / "sim" / "paths.csv"), "paths.csv missing");

        SimConfig sim;
        sim.grid = cfg.grid;
        sim.seed = 2;
        sim.mc_paths = 200;
        sim.n_agents = 300;
        sim.threads = 1;
        std::vector<PathResult> results(static_cast<std::size_t>(sim.mc_paths));
        for_each_path(sim, [&](int pid) {
            NoiseBundle noise{sim.seed, static_cast<std::uint64_t>(pid)};
            results[static_cast<std::size_t>(pid)] =
                simulate_path(pipe.profiles, pipe.sampled, cfg.model, 300, noise);
        });
        const CostReport costs = aggregate_costs(results);
        out.require(costs.fig3_ratio <= 0.1,
                    "average tracking ratio " + fmt(costs.fig3_ratio) + " > 0.1");
        out.note("tracking ratio " + fmt(costs.fig3_ratio));

        for (int n : {10, 50, 100, 200, 300}) {
            sim.n_agents = n;
            sweep_points.push_back(
                epsilon_of_n(pipe.profiles, pipe.sampled, cfg.model, sim, n));
        }
        {
            CsvWriter w(kOut / "epsilon_sweep.csv", {"N", "epsilon", "stderr"});
            for (const EpsilonPoint& pt : sweep_points)
                w.row({static_cast<double>(pt.n_agents), pt.epsilon, pt.stderr_});
        }
        for (std::size_t i = 1; i < sweep_points.size(); ++i) {
            const EpsilonPoint& a = sweep_points[i - 1];
            const EpsilonPoint& b = sweep_points[i];
            const double slack =
                2.0 * std::sqrt(a.stderr_ * a.stderr_ + b.stderr_ * b.stderr_);
            out.require(b.epsilon <= a.epsilon + slack,
                        "sweep not monotone at N=" + std::to_string(b.n_agents));
        }
    });

    DecayFit fit;
    run(9, "decay rate of the population gap", 0.0, [&](Outcome& out) {
        EpsilonSweep sweep;
        sweep.points = sweep_points;
        fit = fit_decay_rate(sweep);
        out.require(fit.slope >= -0.7 && fit.slope <= -0.3,
                    "slope " + fmt(fit.slope) + " outside [-0.7, -0.3]");
        out.require(fit.r2 >= 0.9, "r2 " + fmt(fit.r2) + " < 0.9");
        out.note("slope " + fmt(fit.slope) + ", r2 " + fmt(fit.r2));
    });

    run(10, "deviation gaps at N=300", 180.0, [&](Outcome& out) {
        SimConfig sim;
        sim.grid = cfg.grid;
        sim.seed = 2;
        sim.mc_paths = 200;
        sim.n_agents = 300;
        sim.threads = 1;
        const std::vector<DirectionSpec> lib = direction_library();
        std::vector<GapTrial> trials;
        for (Deviator who : {Deviator::leader, Deviator::follower_one}) {
            trials.push_back({who, 0, 0.0});
            for (int d = 0; d < static_cast<int>(lib.size()); ++d)
                for (double delta : {0.1, 0.5}) trials.push_back({who, d, delta});
        }
        const std::vector<GapEstimate> gaps = perturbation_gap_batch(
            pipe.profiles, pipe.sampled, cfg.model, sim, 300, lib, trials);
        const double eps_fit = fit.epsilon_at(300);
        double worst_margin = 1e300;
        for (std::size_t t = 0; t < trials.size(); ++t) {
            if (trials[t].delta == 0.0) {
                out.require(gaps[t].gap.value == 0.0, "zero-magnitude gap not exactly zero");
                continue;
            }
            const double margin =
                gaps[t].gap.value + eps_fit + 3.0 * gaps[t].gap.stderr_;
            worst_margin = std::min(worst_margin, margin);
            if (margin < 0.0)
                out.require(false, "trial dir=" + std::to_string(trials[t].direction_id) +
                                       " delta=" + fmt(trials[t].delta) + " margin " +
                                       fmt(margin));
        }
        out.note("min margin " + fmt(worst_margin) + " with tolerance " + fmt(eps_fit) +
                 " + 3 SE, " + std::to_string(trials.size()) + " trials");
    });

    run(11, "end-to-end determinism across thread counts", 0.0, [&](Outcome& out) {
        const fs::path cfg_path = kOut / "small.cfg";
        {
            std::ofstream f(cfg_path);
            f << mfsg_test::experiment_config(300, 40, 40, 2);
        }
        auto run_tree = [&](const fs::path& dir, int threads) {
            CommandOptions opt;
            opt.config_path = cfg_path.string();
            opt.threads = threads;
            std::ostringstream sink;
            opt.out = &sink;
            opt.out_dir = (dir / "synth").string();
            if (cmd_synthesize(opt) != exit_ok) return false;
            opt.out_dir = (dir / "sim").string();
            if (cmd_simulate(opt) != exit_ok) return false;
            opt.out_dir = (dir / "sweep").string();
            opt.agent_list = {10, 20};
            opt.paths = 20;
            if (cmd_sweep(opt) != exit_ok) return false;
            return true;
        };
        const fs::path a = kOut / "tree_a";
        const fs::path b = kOut / "tree_b";
        fs::remove_all(a);
        fs::remove_all(b);
        out.require(run_tree(a, 1), "single-thread run failed");
        out.require(run_tree(b, 8), "eight-thread run failed");
        std::size_t compared = 0;
        for (const auto& entry : fs::recursive_directory_iterator(a)) {
            if (!entry.is_regular_file()) continue;
            const fs::path rel = fs::relative(entry.path(), a);
            std::ifstream fa(entry.path(), std::ios::binary);
            std::ifstream fb(b / rel, std::ios::binary);
            std::stringstream sa, sb;
            sa << fa.rdbuf();
            sb << fb.rdbuf();
            out.require(sa.str() == sb.str(), rel.string() + " differs between thread counts");
            ++compared;
        }
        out.require(compared >= 8, "too few files compared");
        out.note(std::to_string(compared) + " files byte-identical");
    });

    std::printf("%d of 11 criteria passed\n", 11 - failures);
    return failures;
}
