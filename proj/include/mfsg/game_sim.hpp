#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "mfsg/errors.hpp"
#include "mfsg/follower.hpp"
#include "mfsg/leader.hpp"
#include "mfsg/model.hpp"
#include "mfsg/rng.hpp"

namespace mfsg {

struct SimConfig {
    int n_agents = 300;
    int mc_paths = 200;
    std::uint64_t seed = 1;
    TimeGrid grid;
    bool record_paths = false;
    int threads = 1;
};

// Node-sampled closed-loop coefficients: everything a path simulation needs,
// flattened out of the synthesis objects once.
struct StrategyProfiles {
    TimeGrid grid;
    // follower feedback u_i = -k1*xhat_i + cf, and its mean eu
    std::vector<double> k1, cf, eu;
    std::vector<double> ez;  // mean-field mean profile (component 2 of ex)
    // leader feedback u0 = th1 . Xcheck + c0
    std::vector<Vec3> th1;
    std::vector<double> c0;
    // leader filter SDE x(k+1) = x + (A x + a) dt + (B x + b) dW0
    std::vector<Mat3> xc_drift_mat, xc_diff_mat;
    std::vector<Vec3> xc_drift_const, xc_diff_const;
    Vec3 Xi;

    static StrategyProfiles build(const FollowerSynthesis& fs, const LeaderSynthesis& ls,
                                  const TimeGrid& grid) {
        StrategyProfiles p;
        p.grid = grid;
        const std::size_t n = static_cast<std::size_t>(grid.nodes());
        p.k1.resize(n);
        p.cf.resize(n);
        p.eu.resize(n);
        p.ez.resize(n);
        p.th1.resize(n);
        p.c0.resize(n);
        p.xc_drift_mat.resize(n);
        p.xc_diff_mat.resize(n);
        p.xc_drift_const.resize(n);
        p.xc_diff_const.resize(n);
        p.Xi = ls.system.Xi;

        for (int k = 0; k <= grid.steps; ++k) {
            const std::size_t ks = static_cast<std::size_t>(k);
            const double t = grid.t(k);
            const double ez = ls.ez_star.at(k);
            const double ephi = ls.ephi_star.at(k);
            p.ez[ks] = ez;
            p.k1[ks] = fs.k1.at(k);
            p.cf[ks] = fs.k2.at(k) * ez + fs.k3.at(k) - fs.r1inv_b1.at(k) * ephi;
            p.eu[ks] = fs.ksum.at(k) * ez + fs.k3.at(k) - fs.r1inv_b1.at(k) * ephi;

            const LeaderSystem::At s = ls.system.at(t);
            const Mat3& g1 = ls.gamma1.at(k);
            const Mat3& g2 = ls.gamma2.at(k);
            const Mat3 gsum = g1 + g2;
            const Mat3 l14t = transpose(s.L14);
            const Vec3& ex = ls.ex.at(k);
            const Vec3& ephi_cap = ls.ephi_cap.at(k);

            p.th1[ks] = ls.th1.at(k);
            p.c0[ks] = dot(ls.th2.at(k), ex) + dot(ls.th3.at(k), ephi_cap) + ls.th4.at(k);

            const Vec3 bmod = s.B0v - s.L14 * (g1 * s.Dt0v);
            p.xc_drift_mat[ks] = s.L11 + outer(bmod, p.th1[ks]);

            Mat3 bmat = s.L12;
            bmat -= (s.L13 + s.L14 * g1 * l14t) * gsum;
            bmat -= s.L14 * g1 * (s.L31 + s.L32);
            bmat += outer(bmod, ls.th2.at(k));
            Mat3 cmat = -1.0 * (s.L13 + s.L14 * g1 * l14t);
            cmat += outer(bmod, ls.th3.at(k));
            Vec3 dc = bmat * ex;
            dc += cmat * ephi_cap;
            dc += ls.th4.at(k) * bmod;
            dc += s.f1;
            dc -= s.L14 * (g1 * s.f3);
            p.xc_drift_const[ks] = dc;

            p.xc_diff_mat[ks] = s.L21 + outer(s.D0v, p.th1[ks]);
            Vec3 dv = p.c0[ks] * s.D0v;
            dv += s.f2;
            p.xc_diff_const[ks] = dv;
        }
        return p;
    }
};

// Optional additive control perturbation for one entity, evaluated from the
// entity's own filter state so it stays adapted to its own information.
struct ControlTweak {
    enum class Who { none, leader, follower_one };
    Who who = Who::none;
    double delta = 0.0;
    std::function<double(int /*node*/, double /*own filter state*/)> shape;
};

struct PathRecord {
    std::vector<double> xN, z, x0;
    std::vector<Vec3> xcheck;
};

struct PathProbes {
    std::vector<int> nodes;     // probe nodes, ascending (empty: no probes)
    bool xhat_stats = false;    // follower filter moment material
    bool xcheck_stats = false;  // leader filter mean material
    bool u0_stats = false;      // leader control mean material
    bool record = false;        // full series (paths.csv material)
    // Skip the frozen mean-field state, the decentralized comparison states,
    // and the limiting costs; only the coupled system and its costs remain.
    // Deviation trials need nothing else and dominate the runtime.
    bool centralized_only = false;
};

struct PathResult {
    double j0_c = 0.0, j0_l = 0.0;
    double ji_c_mean = 0.0, ji_l_mean = 0.0;
    double j1_c = 0.0;
    double eps2 = 0.0;         // int_0^T |z - x^(N)|^2 dt
    double absdiff_int = 0.0;  // int |x^(N) - z| dt
    double absz_int = 0.0;     // int |z| dt
    double u0_sq_int = 0.0;    // int u0^2 dt
    std::vector<double> xhat_sum, xhat_sumsq;  // per probe node, summed over agents
    std::vector<Vec3> xcheck_probe;
    std::vector<double> u0_probe;
    PathRecord record;
};

/// Simulate one Monte Carlo path of the closed-loop game: leader filter and
/// control, follower filters and controls, the frozen mean-field state, the
/// fully coupled population, and the decentralized comparison states. All
/// states advance in lockstep; the population average is recomputed from the
/// current states each step.
template <class Noise>
PathResult simulate_path(const StrategyProfiles& p, const SampledModel& c,
                         const ModelCoefficients& m, int n_agents, const Noise& noise,
                         const ControlTweak& tweak = {}, const PathProbes& probes = {}) {
    const TimeGrid& grid = p.grid;
    const int steps = grid.steps;
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);
    const int N = n_agents;

    Vec3 xc = p.Xi;
    double z = m.xi;
    double x0 = m.xi0;
    double xbar0 = m.xi0;
    std::vector<double> xi(static_cast<std::size_t>(N), m.xi);
    std::vector<double> xbar(static_cast<std::size_t>(N), m.xi);
    std::vector<double> xhat(static_cast<std::size_t>(N), m.xi);
    std::vector<double> ui(static_cast<std::size_t>(N), 0.0);

    PathResult res;
    if (probes.xhat_stats) {
        res.xhat_sum.assign(probes.nodes.size(), 0.0);
        res.xhat_sumsq.assign(probes.nodes.size(), 0.0);
    }
    if (probes.xcheck_stats) res.xcheck_probe.assign(probes.nodes.size(), Vec3{});
    if (probes.u0_stats) res.u0_probe.assign(probes.nodes.size(), 0.0);
    if (probes.record) {
        res.record.xN.reserve(static_cast<std::size_t>(grid.nodes()));
        res.record.z.reserve(static_cast<std::size_t>(grid.nodes()));
        res.record.x0.reserve(static_cast<std::size_t>(grid.nodes()));
        res.record.xcheck.reserve(static_cast<std::size_t>(grid.nodes()));
    }
    std::size_t probe_idx = 0;

    for (int k = 0; k <= steps; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);

        double xN = 0.0;
        for (double v : xi) xN += v;
        xN /= N;

        double u0 = dot(p.th1[ks], xc) + p.c0[ks];
        if (tweak.who == ControlTweak::Who::leader) u0 += tweak.delta * tweak.shape(k, xc[0]);
        for (int i = 0; i < N; ++i) {
            double u = -p.k1[ks] * xhat[static_cast<std::size_t>(i)] + p.cf[ks];
            if (i == 0 && tweak.who == ControlTweak::Who::follower_one)
                u += tweak.delta * tweak.shape(k, xhat[0]);
            ui[static_cast<std::size_t>(i)] = u;
        }

        // running costs, trapezoid weights
        const double w = (k == 0 || k == steps) ? 0.5 * dt : dt;
        const double q0 = c.Q0[ks], r0 = c.R0[ks], q1 = c.Q1[ks], r1 = c.R1[ks];
        const double lam = m.lambda;
        res.j0_c += w * (r0 * u0 * u0 + q0 * (x0 - xN) * (x0 - xN));
        res.u0_sq_int += w * u0 * u0;
        if (probes.centralized_only) {
            double sum_ji_c = 0.0;
            for (int i = 0; i < N; ++i) {
                const std::size_t is = static_cast<std::size_t>(i);
                const double dev_c = xi[is] - (lam * x0 + (1.0 - lam) * xN);
                sum_ji_c += r1 * ui[is] * ui[is] + q1 * dev_c * dev_c;
                if (i == 0) res.j1_c += w * (r1 * ui[0] * ui[0] + q1 * dev_c * dev_c);
            }
            res.ji_c_mean += w * sum_ji_c / N;
        } else {
            res.j0_l += w * (r0 * u0 * u0 + q0 * (xbar0 - z) * (xbar0 - z));
            double sum_ji_c = 0.0, sum_ji_l = 0.0;
            for (int i = 0; i < N; ++i) {
                const std::size_t is = static_cast<std::size_t>(i);
                const double dev_c = xi[is] - (lam * x0 + (1.0 - lam) * xN);
                const double dev_l = xbar[is] - (lam * xbar0 + (1.0 - lam) * z);
                sum_ji_c += r1 * ui[is] * ui[is] + q1 * dev_c * dev_c;
                sum_ji_l += r1 * ui[is] * ui[is] + q1 * dev_l * dev_l;
                if (i == 0) res.j1_c += w * (r1 * ui[0] * ui[0] + q1 * dev_c * dev_c);
            }
            res.ji_c_mean += w * sum_ji_c / N;
            res.ji_l_mean += w * sum_ji_l / N;

            const double gap = z - xN;
            res.eps2 += w * gap * gap;
            res.absdiff_int += w * std::abs(gap);
            res.absz_int += w * std::abs(z);
        }

        if (probe_idx < probes.nodes.size() && probes.nodes[probe_idx] == k) {
            if (probes.xhat_stats)
                for (double v : xhat) {
                    res.xhat_sum[probe_idx] += v;
                    res.xhat_sumsq[probe_idx] += v * v;
                }
            if (probes.xcheck_stats) res.xcheck_probe[probe_idx] = xc;
            if (probes.u0_stats) res.u0_probe[probe_idx] = u0;
            ++probe_idx;
        }
        if (probes.record) {
            res.record.xN.push_back(xN);
            res.record.z.push_back(z);
            res.record.x0.push_back(x0);
            res.record.xcheck.push_back(xc);
        }

        if (k == steps) break;

        const double dW = noise.normal(kStreamCommon, static_cast<std::uint64_t>(k)) * sdt;
        const double dW0 = noise.normal(kStreamLeader, static_cast<std::uint64_t>(k)) * sdt;
        const double tnext = grid.t(k + 1);

        // leader filter, driven by dW0 only
        {
            Vec3 drift = p.xc_drift_mat[ks] * xc;
            drift += p.xc_drift_const[ks];
            Vec3 diff = p.xc_diff_mat[ks] * xc;
            diff += p.xc_diff_const[ks];
            drift *= dt;
            diff *= dW0;
            xc += drift;
            xc += diff;
            if (!all_finite(xc) || max_abs(xc) > kBlowUpLimit) throw BlowUpError(tnext);
        }

        // leader states: coupled (sees xN) and decentralized (sees z)
        {
            const double a0 = c.A0[ks], b0c = c.B0[ks], c0c = c.C0[ks], d0 = c.D0[ks];
            const double e0 = c.E0[ks], f0 = c.F0[ks], ct0 = c.Ct0[ks], dt0 = c.Dt0[ks];
            const double ft0 = c.Ft0[ks], bb0 = c.b0[ks], s0 = c.sigma0[ks], st0 = c.sigmat0[ks];
            const double x0n = x0 + (a0 * x0 + b0c * u0 + e0 * xN + bb0) * dt +
                               (c0c * x0 + d0 * u0 + f0 * xN + s0) * dW0 +
                               (ct0 * x0 + dt0 * u0 + ft0 * xN + st0) * dW;
            if (!probes.centralized_only)
                xbar0 = xbar0 + (a0 * xbar0 + b0c * u0 + e0 * z + bb0) * dt +
                        (c0c * xbar0 + d0 * u0 + f0 * z + s0) * dW0 +
                        (ct0 * xbar0 + dt0 * u0 + ft0 * z + st0) * dW;
            x0 = x0n;
            if (!std::isfinite(x0) || std::abs(x0) > kBlowUpLimit) throw BlowUpError(tnext);
        }

        // followers: filter, coupled state, decentralized state share one dWi
        {
            const double a1 = c.A1[ks], b1c = c.B1[ks], c1 = c.C1[ks], d1 = c.D1[ks];
            const double e1 = c.E1[ks], f1 = c.F1[ks], ct1 = c.Ct1[ks], dt1 = c.Dt1[ks];
            const double ft1 = c.Ft1[ks], bb1 = c.b1[ks], s1 = c.sigma1[ks], st1 = c.sigmat1[ks];
            const double ezk = p.ez[ks];
            if (probes.centralized_only) {
                for (int i = 0; i < N; ++i) {
                    const std::size_t is = static_cast<std::size_t>(i);
                    const double dWi =
                        noise.normal(follower_stream(i + 1), static_cast<std::uint64_t>(k)) *
                        sdt;
                    const double u = ui[is];
                    const double xh = xhat[is];
                    const double xcv = xi[is];
                    xhat[is] = xh + (a1 * xh + b1c * u + e1 * ezk + bb1) * dt +
                               (c1 * xh + d1 * u + f1 * ezk + s1) * dWi;
                    xi[is] = xcv + (a1 * xcv + b1c * u + e1 * xN + bb1) * dt +
                             (c1 * xcv + d1 * u + f1 * xN + s1) * dWi +
                             (ct1 * xcv + dt1 * u + ft1 * xN + st1) * dW;
                    if (!std::isfinite(xi[is]) || std::abs(xi[is]) > kBlowUpLimit)
                        throw BlowUpError(tnext);
                }
            } else {
                for (int i = 0; i < N; ++i) {
                    const std::size_t is = static_cast<std::size_t>(i);
                    const double dWi =
                        noise.normal(follower_stream(i + 1), static_cast<std::uint64_t>(k)) *
                        sdt;
                    const double u = ui[is];
                    const double xh = xhat[is];
                    const double xcv = xi[is];
                    const double xbv = xbar[is];
                    xhat[is] = xh + (a1 * xh + b1c * u + e1 * ezk + bb1) * dt +
                               (c1 * xh + d1 * u + f1 * ezk + s1) * dWi;
                    xi[is] = xcv + (a1 * xcv + b1c * u + e1 * xN + bb1) * dt +
                             (c1 * xcv + d1 * u + f1 * xN + s1) * dWi +
                             (ct1 * xcv + dt1 * u + ft1 * xN + st1) * dW;
                    xbar[is] = xbv + (a1 * xbv + b1c * u + e1 * z + bb1) * dt +
                               (c1 * xbv + d1 * u + f1 * z + s1) * dWi +
                               (ct1 * xbv + dt1 * u + ft1 * z + st1) * dW;
                    if (!std::isfinite(xi[is]) || std::abs(xi[is]) > kBlowUpLimit)
                        throw BlowUpError(tnext);
                }
            }
        }

        // frozen mean-field state, driven by the common noise only
        if (!probes.centralized_only) {
            const double drift = (c.A1[ks] + c.E1[ks]) * z + c.B1[ks] * p.eu[ks] + c.b1[ks];
            const double diff =
                (c.Ct1[ks] + c.Ft1[ks]) * z + c.Dt1[ks] * p.eu[ks] + c.sigmat1[ks];
            z += drift * dt + diff * dW;
            if (!std::isfinite(z) || std::abs(z) > kBlowUpLimit) throw BlowUpError(tnext);
        }
    }

    // terminal cost terms and 1/2 normalization
    {
        const double g0 = m.G0, g1 = m.G1;
        res.j0_c = 0.5 * (res.j0_c + g0 * x0 * x0);
        double term_c = 0.0;
        for (int i = 0; i < N; ++i) term_c += xi[static_cast<std::size_t>(i)] * xi[static_cast<std::size_t>(i)];
        res.ji_c_mean = 0.5 * (res.ji_c_mean + g1 * term_c / N);
        res.j1_c = 0.5 * (res.j1_c + g1 * xi[0] * xi[0]);
        if (!probes.centralized_only) {
            res.j0_l = 0.5 * (res.j0_l + g0 * xbar0 * xbar0);
            double term_l = 0.0;
            for (int i = 0; i < N; ++i) term_l += xbar[static_cast<std::size_t>(i)] * xbar[static_cast<std::size_t>(i)];
            res.ji_l_mean = 0.5 * (res.ji_l_mean + g1 * term_l / N);
        }
    }
    return res;
}

/// Run `cfg.mc_paths` independent paths, optionally across threads. Results
/// land in a slot per path id, so the outcome does not depend on scheduling.
template <class PathFn>
void for_each_path(const SimConfig& cfg, PathFn&& fn) {
    const int n = cfg.mc_paths;
    const int workers = std::max(1, std::min(cfg.threads, n));
    if (workers == 1) {
        for (int p = 0; p < n; ++p) fn(p);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mtx;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const int p = next.fetch_add(1);
                if (p >= n) return;
                try {
                    fn(p);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mtx);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

struct Estimate {
    double value = 0.0;
    double stderr_ = 0.0;
};

inline Estimate mean_and_se(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var = xs.size() > 1 ? var / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n)};
}

struct CostReport {
    Estimate j0_hat, ji_hat_mean, j1_hat;
    Estimate j0_lim, ji_lim_mean;
    Estimate epsilon;  // sqrt of mean eps2, delta-method standard error
    double fig3_ratio = 0.0;  // E int|xN - z| / E int|z|
};

// ---------------------------------------------------------------------------
// Standalone per-subsystem simulators. These share the stepping arithmetic of
// simulate_path term by term, so cross-comparisons between the coupled and
// decentralized routes are exact when coupling coefficients vanish.
// ---------------------------------------------------------------------------

struct LeaderFilterPath {
    Trajectory<Vec3> xcheck;
    ScalarTrajectory u0;
};

template <class Noise>
LeaderFilterPath simulate_leader_filter(const StrategyProfiles& p, const Noise& noise) {
    const TimeGrid& grid = p.grid;
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);
    LeaderFilterPath out{Trajectory<Vec3>(grid), ScalarTrajectory(grid)};
    Vec3 xc = p.Xi;
    for (int k = 0; k <= grid.steps; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        out.xcheck.at(k) = xc;
        out.u0.at(k) = dot(p.th1[ks], xc) + p.c0[ks];
        if (k == grid.steps) break;
        const double dW0 = noise.normal(kStreamLeader, static_cast<std::uint64_t>(k)) * sdt;
        Vec3 drift = p.xc_drift_mat[ks] * xc;
        drift += p.xc_drift_const[ks];
        Vec3 diff = p.xc_diff_mat[ks] * xc;
        diff += p.xc_diff_const[ks];
        drift *= dt;
        diff *= dW0;
        xc += drift;
        xc += diff;
        if (!all_finite(xc) || max_abs(xc) > kBlowUpLimit) throw BlowUpError(grid.t(k + 1));
    }
    return out;
}

struct FollowerFilterPath {
    ScalarTrajectory xhat;
    ScalarTrajectory u;
};

template <class Noise>
FollowerFilterPath simulate_follower_filter(const StrategyProfiles& p, const SampledModel& c,
                                            const ModelCoefficients& m, int agent_index,
                                            const Noise& noise) {
    const TimeGrid& grid = p.grid;
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);
    FollowerFilterPath out{ScalarTrajectory(grid), ScalarTrajectory(grid)};
    double xh = m.xi;
    for (int k = 0; k <= grid.steps; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        out.xhat.at(k) = xh;
        const double u = -p.k1[ks] * xh + p.cf[ks];
        out.u.at(k) = u;
        if (k == grid.steps) break;
        const double dWi =
            noise.normal(follower_stream(agent_index), static_cast<std::uint64_t>(k)) * sdt;
        const double ezk = p.ez[ks];
        xh = xh + (c.A1[ks] * xh + c.B1[ks] * u + c.E1[ks] * ezk + c.b1[ks]) * dt +
             (c.C1[ks] * xh + c.D1[ks] * u + c.F1[ks] * ezk + c.sigma1[ks]) * dWi;
        if (!std::isfinite(xh) || std::abs(xh) > kBlowUpLimit) throw BlowUpError(grid.t(k + 1));
    }
    return out;
}

template <class Noise>
ScalarTrajectory simulate_mean_field_z(const StrategyProfiles& p, const SampledModel& c,
                                       const ModelCoefficients& m, const Noise& noise) {
    const TimeGrid& grid = p.grid;
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);
    ScalarTrajectory out(grid);
    double z = m.xi;
    for (int k = 0; k <= grid.steps; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        out.at(k) = z;
        if (k == grid.steps) break;
        const double dW = noise.normal(kStreamCommon, static_cast<std::uint64_t>(k)) * sdt;
        const double drift = (c.A1[ks] + c.E1[ks]) * z + c.B1[ks] * p.eu[ks] + c.b1[ks];
        const double diff = (c.Ct1[ks] + c.Ft1[ks]) * z + c.Dt1[ks] * p.eu[ks] + c.sigmat1[ks];
        z += drift * dt + diff * dW;
        if (!std::isfinite(z) || std::abs(z) > kBlowUpLimit) throw BlowUpError(grid.t(k + 1));
    }
    return out;
}

struct CoupledPaths {
    ScalarTrajectory x0;
    std::vector<ScalarTrajectory> xi;
    ScalarTrajectory xN;
};

/// The weakly coupled population under given control paths: the average
/// re-enters every drift and diffusion, recomputed from the current states.
template <class Noise>
CoupledPaths simulate_coupled_game(const SampledModel& c, const ModelCoefficients& m,
                                   const ScalarTrajectory& u0,
                                   const std::vector<ScalarTrajectory>& ui, int n_agents,
                                   const Noise& noise) {
    const TimeGrid& grid = u0.grid;
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);
    const int N = n_agents;
    CoupledPaths out;
    out.x0 = ScalarTrajectory(grid);
    out.xN = ScalarTrajectory(grid);
    out.xi.assign(static_cast<std::size_t>(N), ScalarTrajectory(grid));
    double x0 = m.xi0;
    std::vector<double> xs(static_cast<std::size_t>(N), m.xi);
    for (int k = 0; k <= grid.steps; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        double xN = 0.0;
        for (double v : xs) xN += v;
        xN /= N;
        out.x0.at(k) = x0;
        out.xN.at(k) = xN;
        for (int i = 0; i < N; ++i) out.xi[static_cast<std::size_t>(i)].at(k) = xs[static_cast<std::size_t>(i)];
        if (k == grid.steps) break;
        const double dW = noise.normal(kStreamCommon, static_cast<std::uint64_t>(k)) * sdt;
        const double dW0 = noise.normal(kStreamLeader, static_cast<std::uint64_t>(k)) * sdt;
        const double u0k = u0.at(k);
        x0 = x0 + (c.A0[ks] * x0 + c.B0[ks] * u0k + c.E0[ks] * xN + c.b0[ks]) * dt +
             (c.C0[ks] * x0 + c.D0[ks] * u0k + c.F0[ks] * xN + c.sigma0[ks]) * dW0 +
             (c.Ct0[ks] * x0 + c.Dt0[ks] * u0k + c.Ft0[ks] * xN + c.sigmat0[ks]) * dW;
        for (int i = 0; i < N; ++i) {
            const std::size_t is = static_cast<std::size_t>(i);
            const double dWi =
                noise.normal(follower_stream(i + 1), static_cast<std::uint64_t>(k)) * sdt;
            const double u = ui[is].at(k);
            const double x = xs[is];
            xs[is] = x + (c.A1[ks] * x + c.B1[ks] * u + c.E1[ks] * xN + c.b1[ks]) * dt +
                     (c.C1[ks] * x + c.D1[ks] * u + c.F1[ks] * xN + c.sigma1[ks]) * dWi +
                     (c.Ct1[ks] * x + c.Dt1[ks] * u + c.Ft1[ks] * xN + c.sigmat1[ks]) * dW;
            if (!std::isfinite(xs[is]) || std::abs(xs[is]) > kBlowUpLimit)
                throw BlowUpError(grid.t(k + 1));
        }
        if (!std::isfinite(x0) || std::abs(x0) > kBlowUpLimit) throw BlowUpError(grid.t(k + 1));
    }
    return out;
}

struct DecentralizedPaths {
    ScalarTrajectory xbar0;
    std::vector<ScalarTrajectory> xbar;
};

/// Same dynamics with the frozen mean-field path in place of the average.
template <class Noise>
DecentralizedPaths simulate_decentralized(const SampledModel& c, const ModelCoefficients& m,
                                          const ScalarTrajectory& u0,
                                          const std::vector<ScalarTrajectory>& ui,
                                          const ScalarTrajectory& z, int n_agents,
                                          const Noise& noise) {
    const TimeGrid& grid = u0.grid;
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);
    const int N = n_agents;
    DecentralizedPaths out;
    out.xbar0 = ScalarTrajectory(grid);
    out.xbar.assign(static_cast<std::size_t>(N), ScalarTrajectory(grid));
    double xb0 = m.xi0;
    std::vector<double> xs(static_cast<std::size_t>(N), m.xi);
    for (int k = 0; k <= grid.steps; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        out.xbar0.at(k) = xb0;
        for (int i = 0; i < N; ++i) out.xbar[static_cast<std::size_t>(i)].at(k) = xs[static_cast<std::size_t>(i)];
        if (k == grid.steps) break;
        const double dW = noise.normal(kStreamCommon, static_cast<std::uint64_t>(k)) * sdt;
        const double dW0 = noise.normal(kStreamLeader, static_cast<std::uint64_t>(k)) * sdt;
        const double zk = z.at(k);
        const double u0k = u0.at(k);
        xb0 = xb0 + (c.A0[ks] * xb0 + c.B0[ks] * u0k + c.E0[ks] * zk + c.b0[ks]) * dt +
              (c.C0[ks] * xb0 + c.D0[ks] * u0k + c.F0[ks] * zk + c.sigma0[ks]) * dW0 +
              (c.Ct0[ks] * xb0 + c.Dt0[ks] * u0k + c.Ft0[ks] * zk + c.sigmat0[ks]) * dW;
        for (int i = 0; i < N; ++i) {
            const std::size_t is = static_cast<std::size_t>(i);
            const double dWi =
                noise.normal(follower_stream(i + 1), static_cast<std::uint64_t>(k)) * sdt;
            const double u = ui[is].at(k);
            const double x = xs[is];
            xs[is] = x + (c.A1[ks] * x + c.B1[ks] * u + c.E1[ks] * zk + c.b1[ks]) * dt +
                     (c.C1[ks] * x + c.D1[ks] * u + c.F1[ks] * zk + c.sigma1[ks]) * dWi +
                     (c.Ct1[ks] * x + c.Dt1[ks] * u + c.Ft1[ks] * zk + c.sigmat1[ks]) * dW;
        }
    }
    return out;
}

/// Trapezoidal cost functionals of one realized path set. The terminal terms
/// sit inside the same 1/2 normalization as the running costs.
struct SinglePathCosts {
    double j0 = 0.0;
    std::vector<double> ji;
};

inline SinglePathCosts evaluate_costs(const SampledModel& c, const ModelCoefficients& m,
                                      const ScalarTrajectory& u0,
                                      const std::vector<ScalarTrajectory>& ui,
                                      const ScalarTrajectory& x0,
                                      const std::vector<ScalarTrajectory>& xi,
                                      const ScalarTrajectory& xAvg) {
    const TimeGrid& grid = u0.grid;
    const double dt = grid.dt();
    const int N = static_cast<int>(ui.size());
    SinglePathCosts out;
    out.ji.assign(ui.size(), 0.0);
    for (int k = 0; k <= grid.steps; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        const double w = (k == 0 || k == grid.steps) ? 0.5 * dt : dt;
        const double dev0 = x0.at(k) - xAvg.at(k);
        out.j0 += w * (c.R0[ks] * u0.at(k) * u0.at(k) + c.Q0[ks] * dev0 * dev0);
        for (int i = 0; i < N; ++i) {
            const std::size_t is = static_cast<std::size_t>(i);
            const double dev =
                xi[is].at(k) - (m.lambda * x0.at(k) + (1.0 - m.lambda) * xAvg.at(k));
            out.ji[is] += w * (c.R1[ks] * ui[is].at(k) * ui[is].at(k) + c.Q1[ks] * dev * dev);
        }
    }
    out.j0 = 0.5 * (out.j0 + m.G0 * x0.back() * x0.back());
    for (int i = 0; i < N; ++i) {
        const std::size_t is = static_cast<std::size_t>(i);
        out.ji[is] = 0.5 * (out.ji[is] + m.G1 * xi[is].back() * xi[is].back());
    }
    return out;
}

inline CostReport aggregate_costs(const std::vector<PathResult>& paths) {
    std::vector<double> j0, jim, j1, j0l, jiml, eps2, adiff, az;
    j0.reserve(paths.size());
    for (const PathResult& r : paths) {
        j0.push_back(r.j0_c);
        jim.push_back(r.ji_c_mean);
        j1.push_back(r.j1_c);
        j0l.push_back(r.j0_l);
        jiml.push_back(r.ji_l_mean);
        eps2.push_back(r.eps2);
        adiff.push_back(r.absdiff_int);
        az.push_back(r.absz_int);
    }
    CostReport rep;
    rep.j0_hat = mean_and_se(j0);
    rep.ji_hat_mean = mean_and_se(jim);
    rep.j1_hat = mean_and_se(j1);
    rep.j0_lim = mean_and_se(j0l);
    rep.ji_lim_mean = mean_and_se(jiml);
    const Estimate e2 = mean_and_se(eps2);
    const double eps = std::sqrt(std::max(0.0, e2.value));
    rep.epsilon = {eps, eps > 0.0 ? e2.stderr_ / (2.0 * eps) : e2.stderr_};
    const Estimate ad = mean_and_se(adiff);
    const Estimate zz = mean_and_se(az);
    rep.fig3_ratio = zz.value > 0.0 ? ad.value / zz.value : 0.0;
    return rep;
}

}  // namespace mfsg
