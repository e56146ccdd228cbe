#pragma once

#include <cmath>
#include <limits>
#include <utility>

#include "mfsg/errors.hpp"
#include "mfsg/model.hpp"
#include "mfsg/ode.hpp"
#include "mfsg/trajectory.hpp"

namespace mfsg {

constexpr double kDivisionTol = 1e-12;

// Everything the followers' limiting problem produces: the two scalar
// Riccati solutions, the feedback gains, and the derived drift constants of
// the mean system. Gains follow the convention that the state estimate
// enters the control as -k1 * xhat (k1 itself is stored positive).
struct FollowerSynthesis {
    ScalarTrajectory p1, p2;
    ScalarTrajectory r1cal;                        // R1 + (D1^2 + Dt1^2) P1
    ScalarTrajectory k1, k2, k3;
    ScalarTrajectory ksum;                         // -k1 + k2, the mean-control gain
    ScalarTrajectory m1, m2, n1, n2;
    ScalarTrajectory r1inv_b1, r1inv_b1sq, r1inv_b1_dt1;
};

struct FbodeSolution {
    ScalarTrajectory Ez, Ex0, Ephi;
    double mu = 0.0;        // shooting parameter Ephi(0)
    double theta33 = 0.0;   // boundary sensitivity = terminal (3,3) fundamental-matrix entry
};

struct CouplingCheck {
    bool ok = false;
    double first_violation_t = -1.0;
    double min_value = 0.0;
};

struct SolvabilityCheck {
    double theta33 = 0.0;
    bool ok = false;
};

namespace detail {

inline double r1cal_of(const ModelCoefficients& m, double t, double p1) {
    const double d1 = m.D1(t), dt1 = m.Dt1(t);
    return m.R1(t) + (d1 * d1 + dt1 * dt1) * p1;
}

inline double r1cal_checked(const ModelCoefficients& m, double t, double p1) {
    const double r = r1cal_of(m, t, p1);
    if (std::abs(r) < kDivisionTol)
        throw NumericsError(NumericsError::Kind::division_degenerate, t,
                            "effective follower control weight vanishes");
    return r;
}

// B1 + C1 D1 + Ct1 Dt1, the combination multiplying P1 throughout
inline double s1_of(const ModelCoefficients& m, double t) {
    return m.B1(t) + m.C1(t) * m.D1(t) + m.Ct1(t) * m.Dt1(t);
}

inline double p2_source(const ModelCoefficients& m, double t, double p1) {
    const double r1 = r1cal_checked(m, t, p1);
    const double s1 = s1_of(m, t);
    const double df = m.D1(t) * m.F1(t) + m.Dt1(t) * m.Ft1(t);
    return p1 * (m.E1(t) + m.C1(t) * m.F1(t) + m.Ct1(t) * m.Ft1(t)) -
           s1 * p1 * p1 / r1 * df - m.Q1(t) * (1.0 - m.lambda);
}

}  // namespace detail

inline ScalarTrajectory solve_p1(const ModelCoefficients& m, const TimeGrid& grid,
                                 OdeScheme scheme = OdeScheme::rk4) {
    auto rhs = [&m](double t, double p) {
        const double r1 = detail::r1cal_checked(m, t, p);
        const double s1 = detail::s1_of(m, t);
        const double c1 = m.C1(t), ct1 = m.Ct1(t);
        return -((2.0 * m.A1(t) + c1 * c1 + ct1 * ct1) * p - s1 * s1 * p * p / r1 + m.Q1(t));
    };
    return integrate_ode<double>(rhs, m.G1, grid, OdeDirection::backward, scheme);
}

inline ScalarTrajectory solve_p2(const ModelCoefficients& m, const ScalarTrajectory& p1,
                                 const TimeGrid& grid, OdeScheme scheme = OdeScheme::rk4) {
    auto rhs = [&m, &p1](double t, double p2) {
        const double p1t = p1.lerp(t);
        const double r1 = detail::r1cal_checked(m, t, p1t);
        const double s1 = detail::s1_of(m, t);
        const double b1 = m.B1(t);
        const double df = m.D1(t) * m.F1(t) + m.Dt1(t) * m.Ft1(t);
        const double lin =
            2.0 * m.A1(t) + m.E1(t) - 2.0 * s1 * p1t / r1 * b1 - df * p1t / r1 * b1;
        return -(p2 * lin - b1 * b1 * p2 * p2 / r1 + detail::p2_source(m, t, p1t));
    };
    return integrate_ode<double>(rhs, 0.0, grid, OdeDirection::backward, scheme);
}

/// Pointwise sign condition on the source of the mean-coupling Riccati
/// equation (sufficient for its standard solvability; reported, not gating).
inline CouplingCheck check_coupling_source(const ModelCoefficients& m, const ScalarTrajectory& p1,
                                           const TimeGrid& grid) {
    CouplingCheck c;
    c.ok = true;
    c.min_value = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= grid.steps; ++k) {
        const double t = grid.t(k);
        const double v = detail::p2_source(m, t, p1.at(k));
        if (v < c.min_value) c.min_value = v;
        if (v < AssumptionReport::tol_coupling && c.ok) {
            c.ok = false;
            c.first_violation_t = t;
        }
    }
    return c;
}

inline FollowerSynthesis follower_gains(const ModelCoefficients& m, ScalarTrajectory p1,
                                        ScalarTrajectory p2, const TimeGrid& grid) {
    FollowerSynthesis fs;
    fs.p1 = std::move(p1);
    fs.p2 = std::move(p2);
    fs.r1cal = ScalarTrajectory(grid);
    fs.k1 = ScalarTrajectory(grid);
    fs.k2 = ScalarTrajectory(grid);
    fs.k3 = ScalarTrajectory(grid);
    fs.ksum = ScalarTrajectory(grid);
    fs.m1 = ScalarTrajectory(grid);
    fs.m2 = ScalarTrajectory(grid);
    fs.n1 = ScalarTrajectory(grid);
    fs.n2 = ScalarTrajectory(grid);
    fs.r1inv_b1 = ScalarTrajectory(grid);
    fs.r1inv_b1sq = ScalarTrajectory(grid);
    fs.r1inv_b1_dt1 = ScalarTrajectory(grid);

    for (int k = 0; k <= grid.steps; ++k) {
        const double t = grid.t(k);
        const double P1 = fs.p1.at(k), P2 = fs.p2.at(k);
        const double r1 = detail::r1cal_checked(m, t, P1);
        const double s1 = detail::s1_of(m, t);
        const double b1 = m.B1(t);
        const double ds = m.D1(t) * m.sigma1(t) + m.Dt1(t) * m.sigmat1(t);
        const double df = m.D1(t) * m.F1(t) + m.Dt1(t) * m.Ft1(t);

        fs.r1cal.at(k) = r1;
        fs.k1.at(k) = s1 * P1 / r1;
        fs.k2.at(k) = -(b1 * P2 + df * P1) / r1;
        fs.k3.at(k) = -ds * P1 / r1;
        fs.ksum.at(k) = -fs.k1.at(k) + fs.k2.at(k);
        fs.m1.at(k) = s1 * P1 / r1 * b1 - m.A1(t) + P2 * b1 / r1 * b1;
        fs.m2.at(k) = (s1 * P1 + P2 * b1) / r1 * P1 * ds - (P1 + P2) * m.b1(t) -
                      P1 * (m.C1(t) * m.sigma1(t) + m.Ct1(t) * m.sigmat1(t));
        fs.n1.at(k) = m.A1(t) + m.E1(t) + b1 * fs.ksum.at(k);
        fs.n2.at(k) = b1 * fs.k3.at(k) + m.b1(t);
        fs.r1inv_b1.at(k) = b1 / r1;
        fs.r1inv_b1sq.at(k) = b1 * b1 / r1;
        fs.r1inv_b1_dt1.at(k) = b1 * m.Dt1(t) / r1;
    }
    return fs;
}

/// Follower control: u = -k1*xhat + k2*Ez + k3 - R1cal^-1 B1 * Ephi.
inline double follower_feedback(const FollowerSynthesis& fs, int k, double xhat, double Ez,
                                double Ephi) {
    return -fs.k1.at(k) * xhat + fs.k2.at(k) * Ez + fs.k3.at(k) - fs.r1inv_b1.at(k) * Ephi;
}

/// Coefficients of the mean boundary-value system
///   d/dt [Ez; Ex0; Ephi] = Pi(t) [Ez; Ex0; Ephi] + Delta(t),
/// sampled on the grid.
inline std::pair<Trajectory<Mat3>, Trajectory<Vec3>> build_pi_delta(
    const ModelCoefficients& m, const FollowerSynthesis& fs, const ScalarTrajectory& Eu0,
    const TimeGrid& grid) {
    Trajectory<Mat3> Pi(grid);
    Trajectory<Vec3> Delta(grid);
    for (int k = 0; k <= grid.steps; ++k) {
        const double t = grid.t(k);
        Mat3& P = Pi.at(k);
        P(0, 0) = fs.n1.at(k);
        P(0, 2) = -fs.r1inv_b1sq.at(k);
        P(1, 0) = m.E0(t);
        P(1, 1) = m.A0(t);
        P(2, 1) = m.Q1(t) * m.lambda;
        P(2, 2) = fs.m1.at(k);
        Vec3& D = Delta.at(k);
        D[0] = fs.n2.at(k);
        D[1] = m.B0(t) * Eu0.at(k) + m.b0(t);
        D[2] = fs.m2.at(k);
    }
    return {std::move(Pi), std::move(Delta)};
}

/// Terminal (3,3) entry of the fundamental matrix of the Pi system; the
/// boundary-value problem is well posed iff it stays away from zero.
inline SolvabilityCheck check_fbode_solvability(const Trajectory<Mat3>& Pi, const TimeGrid& grid,
                                                OdeScheme scheme = OdeScheme::rk4) {
    auto field = [&Pi](double t) { return Pi.lerp(t); };
    const Trajectory<Mat3> theta = fundamental_matrix(field, grid, scheme);
    SolvabilityCheck chk;
    chk.theta33 = theta.back()(2, 2);
    chk.ok = std::abs(chk.theta33) > AssumptionReport::tol_det;
    return chk;
}

/// Solve the mean boundary-value system by shooting on mu = Ephi(0). The
/// terminal mismatch is affine in mu, so two forward sweeps pin it down.
inline FbodeSolution solve_fbode(const ModelCoefficients& m, const FollowerSynthesis& fs,
                                 const ScalarTrajectory& Eu0, const TimeGrid& grid,
                                 OdeScheme scheme = OdeScheme::rk4) {
    auto [Pi, Delta] = build_pi_delta(m, fs, Eu0, grid);
    auto rhs = [&Pi, &Delta](double t, const Vec3& y) {
        Vec3 r = Pi.lerp(t) * y;
        r += Delta.lerp(t);
        return r;
    };
    auto sweep = [&](double mu) {
        Vec3 y0{{m.xi, m.xi0, mu}};
        return integrate_ode<Vec3>(rhs, y0, grid, OdeDirection::forward, scheme);
    };

    const Trajectory<Vec3> shot0 = sweep(0.0);
    const Trajectory<Vec3> shot1 = sweep(1.0);
    const double f0 = shot0.back()[2];
    const double sensitivity = shot1.back()[2] - f0;
    if (std::abs(sensitivity) <= AssumptionReport::tol_det)
        throw NumericsError(NumericsError::Kind::singular_shooting, grid.T,
                            "terminal condition insensitive to the shooting parameter");

    FbodeSolution sol;
    sol.mu = -f0 / sensitivity;
    sol.theta33 = sensitivity;
    const Trajectory<Vec3> path = sweep(sol.mu);

    sol.Ez = ScalarTrajectory(grid);
    sol.Ex0 = ScalarTrajectory(grid);
    sol.Ephi = ScalarTrajectory(grid);
    for (int k = 0; k <= grid.steps; ++k) {
        sol.Ez.at(k) = path.at(k)[0];
        sol.Ex0.at(k) = path.at(k)[1];
        sol.Ephi.at(k) = path.at(k)[2];
    }
    const double shoot_tol = 1e-8 * (1.0 + std::abs(sol.mu));
    if (std::abs(sol.Ephi.back()) > shoot_tol)
        throw NumericsError(NumericsError::Kind::internal, grid.T,
                            "shooting failed to meet the terminal condition");
    return sol;
}

}  // namespace mfsg
