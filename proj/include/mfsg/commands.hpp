#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfsg/csv.hpp"
#include "mfsg/equilibrium.hpp"
#include "mfsg/pipeline.hpp"

namespace mfsg {

constexpr const char* kVersion = "0.1.0";

// exit-code contract: 0 ok / 1 assumption / 2 config / 3 numerical
enum ExitCode : int { exit_ok = 0, exit_assumption = 1, exit_config = 2, exit_numeric = 3 };

struct CommandOptions {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<int> agents;
    std::optional<int> paths;
    std::optional<int> steps;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    bool euler = false;
    bool faithful_typos = false;
    std::vector<int> agent_list;  // sweep populations
    std::ostream* out = &std::cout;
};

namespace detail {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(ConfigError::Kind::io, path, "cannot read config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline LoadedConfig load_for_command(const CommandOptions& opt, std::uint64_t* config_hash) {
    const std::string text = read_file(opt.config_path);
    if (config_hash) *config_hash = fnv1a(text);
    LoadedConfig cfg = load_config(text);
    if (opt.steps) cfg.sim.steps = *opt.steps;
    if (opt.agents) cfg.sim.agents_N = *opt.agents;
    if (opt.paths) cfg.sim.mc_paths = *opt.paths;
    if (opt.seed) cfg.sim.seed = *opt.seed;
    if (const char* env = std::getenv("MFS_SEED"); env && !opt.seed)
        cfg.sim.seed = std::strtoull(env, nullptr, 10);
    if (opt.euler) cfg.sim.euler_mode = true;
    if (opt.faithful_typos) cfg.sim.faithful_typos = true;
    cfg.grid = TimeGrid{cfg.model.T, cfg.sim.steps};
    return cfg;
}

inline nlohmann::json report_json(const AssumptionReport& rep) {
    nlohmann::json j;
    j["cost_weights"] = {{"ok", rep.weights_ok},
                         {"first_violation_t", rep.weights_first_violation},
                         {"what", rep.weights_what}};
    j["coupling_source"] = {{"ok", rep.coupling_ok},
                            {"first_violation_t", rep.coupling_first_violation},
                            {"min", rep.coupling_min}};
    j["bvp_determinant"] = {{"ok", rep.bvp_ok}, {"theta33", rep.bvp_det}};
    j["control_weight"] = {{"ok", rep.r0_ok}, {"r0_min", rep.r0_min}};
    return j;
}

inline void write_manifest(const std::filesystem::path& dir, const std::string& command,
                           std::uint64_t config_hash, const LoadedConfig& cfg,
                           const AssumptionReport& rep, const std::vector<std::string>& files) {
    nlohmann::json j;
    j["command"] = command;
    j["config_hash"] = hex64(config_hash);
    j["seed"] = cfg.sim.seed;
    j["grid"] = {{"T", cfg.grid.T}, {"steps", cfg.grid.steps}};
    j["version"] = kVersion;
    j["assumptions"] = report_json(rep);
    j["files"] = files;
    std::ofstream out(dir / ("manifest-" + command + ".json"));
    out << j.dump(2) << "\n";
}

inline void print_report(std::ostream& os, const AssumptionReport& rep) {
    auto line = [&os](const char* name, bool ok, const std::string& extra) {
        os << "  " << name << ": " << (ok ? "PASS" : "FAIL");
        if (!extra.empty()) os << "  (" << extra << ")";
        os << "\n";
    };
    line("cost weights nonnegative, control weights positive", rep.weights_ok,
         rep.weights_ok ? "" : rep.weights_what);
    {
        std::ostringstream e;
        e << "min " << rep.coupling_min;
        if (!rep.coupling_ok) e << ", first violation t=" << rep.coupling_first_violation;
        e << "; sufficient-only, not gating";
        line("mean-coupling source sign", rep.coupling_ok, e.str());
    }
    {
        std::ostringstream e;
        e << "terminal theta33 = " << rep.bvp_det;
        line("boundary-value determinant", rep.bvp_ok, e.str());
    }
    {
        std::ostringstream e;
        e << "min = " << rep.r0_min;
        line("effective leader control weight", rep.r0_ok, e.str());
    }
}

}  // namespace detail

/// `check`: evaluate every checkable condition, print verdicts.
inline int cmd_check(const CommandOptions& opt) {
    std::ostream& os = *opt.out;
    try {
        std::uint64_t hash = 0;
        const LoadedConfig cfg = detail::load_for_command(opt, &hash);
        const AssumptionReport rep = evaluate_assumptions(cfg);
        os << "assumption report:\n";
        detail::print_report(os, rep);
        if (!opt.out_dir.empty()) {
            std::filesystem::create_directories(opt.out_dir);
            detail::write_manifest(opt.out_dir, "check", hash, cfg, rep, {});
        }
        return rep.required_pass() ? exit_ok : exit_assumption;
    } catch (const ConfigError& e) {
        os << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        os << "numerical failure: " << e.what() << "\n";
        return exit_numeric;
    }
}

namespace detail {

inline std::vector<std::string> write_synthesis_csvs(const Pipeline& p,
                                                     const std::filesystem::path& dir) {
    std::vector<std::string> files;
    const TimeGrid& grid = p.cfg.grid;
    {
        CsvWriter w(dir / "p.csv", {"t", "P1", "P2"});
        for (int k = 0; k <= grid.steps; ++k)
            w.row({grid.t(k), p.follower.p1.at(k), p.follower.p2.at(k)});
        files.push_back("p.csv");
    }
    auto write_gamma = [&](const char* name, const Trajectory<Mat3>& g) {
        CsvWriter w(dir / name, {"t", "g11", "g12", "g13", "g21", "g22", "g23", "g31", "g32",
                                 "g33"});
        for (int k = 0; k <= grid.steps; ++k) {
            std::vector<double> row{grid.t(k)};
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) row.push_back(g.at(k)(i, j));
            w.row(row);
        }
        files.push_back(name);
    };
    write_gamma("gamma1.csv", p.leader.gamma1);
    write_gamma("gamma2.csv", p.leader.gamma2);
    {
        CsvWriter w(dir / "mean_profiles.csv",
                    {"t", "EX1", "EX2", "EX3", "EPhi1", "EPhi2", "EPhi3", "Ephi_star",
                     "Eu0_star"});
        for (int k = 0; k <= grid.steps; ++k) {
            const Vec3& ex = p.leader.ex.at(k);
            const Vec3& ep = p.leader.ephi_cap.at(k);
            w.row({grid.t(k), ex[0], ex[1], ex[2], ep[0], ep[1], ep[2],
                   p.leader.ephi_star.at(k), p.leader.eu0_star.at(k)});
        }
        files.push_back("mean_profiles.csv");
    }
    return files;
}

struct SimOutcome {
    CostReport costs;
    std::vector<PathResult> results;
};

inline SimOutcome run_simulation(const Pipeline& p, const SimConfig& cfg, bool record_path0) {
    SimOutcome out;
    out.results.resize(static_cast<std::size_t>(cfg.mc_paths));
    for_each_path(cfg, [&](int pid) {
        NoiseBundle noise{cfg.seed, static_cast<std::uint64_t>(pid)};
        PathProbes probes;
        probes.record = record_path0 && pid == 0;
        out.results[static_cast<std::size_t>(pid)] =
            simulate_path(p.profiles, p.sampled, p.cfg.model, cfg.n_agents, noise, {}, probes);
    });
    out.costs = aggregate_costs(out.results);
    return out;
}

// Common front half of the synthesis-dependent commands: weight conditions
// gate with exit 1 before any equation is solved; solver failures map to
// exit 3; the remaining verdicts gate with exit 1 after the build.
inline int gated_pipeline(const CommandOptions& opt, const std::string& command,
                          std::uint64_t& hash, LoadedConfig& cfg, Pipeline& pipe) {
    std::ostream& os = *opt.out;
    cfg = load_for_command(opt, &hash);
    const std::filesystem::path dir(opt.out_dir);
    std::filesystem::create_directories(dir);

    const AssumptionReport weights = check_standing_assumptions(cfg.model, cfg.grid);
    if (!weights.weights_ok) {
        os << "assumption report:\n";
        print_report(os, weights);
        write_manifest(dir, command, hash, cfg, weights, {});
        return exit_assumption;
    }
    pipe = build_pipeline(cfg);
    if (!pipe.report.required_pass()) {
        os << "assumption report:\n";
        print_report(os, pipe.report);
        write_manifest(dir, command, hash, cfg, pipe.report, {});
        return exit_assumption;
    }
    return exit_ok;
}

}  // namespace detail

/// `synthesize`: deterministic synthesis outputs (Riccati curves, mean
/// profiles) plus the manifest.
inline int cmd_synthesize(const CommandOptions& opt) {
    std::ostream& os = *opt.out;
    try {
        std::uint64_t hash = 0;
        LoadedConfig cfg;
        Pipeline p;
        if (const int rc = detail::gated_pipeline(opt, "synthesize", hash, cfg, p); rc != exit_ok)
            return rc;
        const std::filesystem::path dir(opt.out_dir);
        const std::vector<std::string> files = detail::write_synthesis_csvs(p, dir);
        detail::write_manifest(dir, "synthesize", hash, cfg, p.report, files);
        os << "synthesis complete: " << files.size() << " files in " << dir.string() << "\n";
        return exit_ok;
    } catch (const ConfigError& e) {
        os << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        os << "numerical failure: " << e.what() << "\n";
        return exit_numeric;
    }
}

/// `simulate`: Monte Carlo closed-loop run; emits path records and the cost
/// summary.
inline int cmd_simulate(const CommandOptions& opt) {
    std::ostream& os = *opt.out;
    try {
        std::uint64_t hash = 0;
        LoadedConfig cfg;
        Pipeline p;
        if (const int rc = detail::gated_pipeline(opt, "simulate", hash, cfg, p); rc != exit_ok)
            return rc;
        const std::filesystem::path dir(opt.out_dir);

        SimConfig sim;
        sim.n_agents = cfg.sim.agents_N;
        sim.mc_paths = cfg.sim.mc_paths;
        sim.seed = cfg.sim.seed;
        sim.grid = cfg.grid;
        sim.record_paths = cfg.sim.record_paths;
        sim.threads = opt.threads;
        const detail::SimOutcome outcome = detail::run_simulation(p, sim, sim.record_paths);

        std::vector<std::string> files;
        if (sim.record_paths) {
            CsvWriter w(dir / "paths.csv",
                        {"t", "xN", "z", "x0", "Xcheck1", "Xcheck2", "Xcheck3"});
            const PathRecord& rec = outcome.results[0].record;
            for (int k = 0; k <= cfg.grid.steps; ++k) {
                const std::size_t ks = static_cast<std::size_t>(k);
                w.row({cfg.grid.t(k), rec.xN[ks], rec.z[ks], rec.x0[ks], rec.xcheck[ks][0],
                       rec.xcheck[ks][1], rec.xcheck[ks][2]});
            }
            files.push_back("paths.csv");
        }
        {
            CsvWriter w(dir / "costs.csv", {"metric", "value", "stderr"});
            auto row = [&w](const char* name, const Estimate& e) {
                w.raw_row({name, CsvWriter::num(e.value), CsvWriter::num(e.stderr_)});
            };
            const CostReport& c = outcome.costs;
            row("J0_hat", c.j0_hat);
            row("Ji_hat_mean", c.ji_hat_mean);
            row("J0_lim", c.j0_lim);
            row("Ji_lim_mean", c.ji_lim_mean);
            row("epsilon", c.epsilon);
            files.push_back("costs.csv");
        }
        detail::write_manifest(dir, "simulate", hash, cfg, p.report, files);

        const CostReport& c = outcome.costs;
        os << "N=" << sim.n_agents << " paths=" << sim.mc_paths << "\n";
        os << "  J0 = " << c.j0_hat.value << " +- " << c.j0_hat.stderr_ << "\n";
        os << "  mean Ji = " << c.ji_hat_mean.value << " +- " << c.ji_hat_mean.stderr_ << "\n";
        os << "  J0_lim = " << c.j0_lim.value << "  mean Ji_lim = " << c.ji_lim_mean.value
           << "\n";
        os << "  epsilon(N) = " << c.epsilon.value << " +- " << c.epsilon.stderr_ << "\n";
        return exit_ok;
    } catch (const ConfigError& e) {
        os << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        os << "numerical failure: " << e.what() << "\n";
        return exit_numeric;
    }
}

/// `sweep`: epsilon over a population ladder, the log-log decay fit, and the
/// perturbation-gap trials at the largest population.
inline int cmd_sweep(const CommandOptions& opt) {
    std::ostream& os = *opt.out;
    try {
        std::uint64_t hash = 0;
        LoadedConfig cfg;
        Pipeline p;
        if (const int rc = detail::gated_pipeline(opt, "sweep", hash, cfg, p); rc != exit_ok)
            return rc;
        const std::filesystem::path dir(opt.out_dir);

        std::vector<int> agents = opt.agent_list;
        if (agents.empty()) agents = {10, 50, 100, 200, 300};

        SimConfig sim;
        sim.mc_paths = cfg.sim.mc_paths;
        sim.seed = cfg.sim.seed;
        sim.grid = cfg.grid;
        sim.threads = opt.threads;

        EpsilonSweep sweep;
        for (int n : agents) {
            sim.n_agents = n;
            sweep.points.push_back(epsilon_of_n(p.profiles, p.sampled, p.cfg.model, sim, n));
            const EpsilonPoint& pt = sweep.points.back();
            os << "  N=" << pt.n_agents << "  epsilon=" << pt.epsilon << " +- " << pt.stderr_
               << "\n";
        }
        std::vector<std::string> files;
        {
            CsvWriter w(dir / "epsilon_sweep.csv", {"N", "epsilon", "stderr"});
            for (const EpsilonPoint& pt : sweep.points)
                w.row({static_cast<double>(pt.n_agents), pt.epsilon, pt.stderr_});
            files.push_back("epsilon_sweep.csv");
        }

        bool fit_ok = false;
        DecayFit fit;
        if (sweep.points.size() >= 2) {
            fit = fit_decay_rate(sweep);
            fit_ok = true;
            os << "  decay fit: slope=" << fit.slope << " intercept=" << fit.intercept
               << " r2=" << fit.r2 << "\n";
        }

        // gap trials at the largest population
        {
            const int n_top = agents.back();
            sim.n_agents = n_top;
            const double eps_fit =
                fit_ok ? fit.epsilon_at(n_top) : sweep.points.back().epsilon;

            const std::vector<DirectionSpec> lib = direction_library();
            std::vector<GapTrial> trials;
            for (Deviator who : {Deviator::leader, Deviator::follower_one})
                for (int d = 0; d < static_cast<int>(lib.size()); ++d)
                    for (double delta : {0.0, 0.1, 0.5})
                        trials.push_back({who, d, delta});
            const std::vector<GapEstimate> gaps = perturbation_gap_batch(
                p.profiles, p.sampled, p.cfg.model, sim, n_top, lib, trials);

            CsvWriter w(dir / "gaps.csv", {"who", "direction_id", "delta", "gap", "stderr"});
            bool all_ok = true;
            for (std::size_t t = 0; t < trials.size(); ++t) {
                const char* who_name =
                    trials[t].who == Deviator::leader ? "leader" : "follower";
                w.raw_row({who_name, std::to_string(trials[t].direction_id),
                           CsvWriter::num(trials[t].delta), CsvWriter::num(gaps[t].gap.value),
                           CsvWriter::num(gaps[t].gap.stderr_)});
                if (trials[t].delta > 0.0 &&
                    gaps[t].gap.value < -(eps_fit + 3.0 * gaps[t].gap.stderr_))
                    all_ok = false;
            }
            files.push_back("gaps.csv");
            if (sim.mc_paths < 2)
                os << "  gap trials at N=" << n_top
                   << ": single-path estimates, no verdict claimed\n";
            else
                os << "  gap trials at N=" << n_top << ": "
                   << (all_ok ? "all within tolerance" : "VIOLATION FOUND") << " (tolerance "
                   << eps_fit << " + 3 SE)\n";
        }

        detail::write_manifest(dir, "sweep", hash, cfg, p.report, files);
        return exit_ok;
    } catch (const ConfigError& e) {
        os << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        os << "numerical failure: " << e.what() << "\n";
        return exit_numeric;
    }
}

}  // namespace mfsg
