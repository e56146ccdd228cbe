#pragma once

#include <cmath>
#include <utility>

#include "mfsg/errors.hpp"
#include "mfsg/follower.hpp"
#include "mfsg/model.hpp"
#include "mfsg/ode.hpp"
#include "mfsg/trajectory.hpp"

namespace mfsg {

// Coefficients of the dimension-expanded leader system, stacked state
// X = [leader state; mean-field state; adjoint-mean state]. Sampled on the
// grid; sparsity exactly as assembled below.
struct LeaderSystem {
    Trajectory<Mat3> L11, L12, L13, L14, L21, L31, L32, N11, N12;
    Trajectory<Vec3> B0v, D0v, Dt0v;   // input columns into drift / dW0 / dW
    Trajectory<Vec3> f1, f2, f3, f4;   // inhomogeneities
    Vec3 Xi;                           // initial stacked state [xi0; xi; 0]
    Mat3 G0cal;                        // terminal weight, G0 in entry (0,0)

    struct At {
        Mat3 L11, L12, L13, L14, L21, L31, L32, N11, N12;
        Vec3 B0v, D0v, Dt0v, f1, f2, f3, f4;
    };

    At at(double t) const {
        return At{L11.lerp(t), L12.lerp(t), L13.lerp(t), L14.lerp(t), L21.lerp(t),
                  L31.lerp(t), L32.lerp(t), N11.lerp(t), N12.lerp(t), B0v.lerp(t),
                  D0v.lerp(t), Dt0v.lerp(t), f1.lerp(t), f2.lerp(t), f3.lerp(t), f4.lerp(t)};
    }
};

struct LeaderSynthesis {
    LeaderSystem system;
    Trajectory<Mat3> gamma1, gamma2;
    Trajectory<Vec3> ephi_cap;   // mean of the stacked adjoint offset
    Trajectory<Vec3> ex;         // mean of the stacked state
    ScalarTrajectory r0cal;
    Trajectory<Vec3> th1, th2, th3;  // row-vector gains
    ScalarTrajectory th4;
    // derived mean-field profiles
    ScalarTrajectory ez_star;    // component 2 of ex
    ScalarTrajectory ephi_star;  // third component of -(gamma1+gamma2)ex - ephi_cap
    ScalarTrajectory eu0_star;   // (th1+th2).ex + th3.ephi_cap + th4
};

struct R0Check {
    double r0_min = 0.0;
    bool ok = false;
};

inline LeaderSystem assemble_leader_system(const ModelCoefficients& m,
                                           const FollowerSynthesis& fs, const TimeGrid& grid,
                                           bool faithful_typos = false) {
    LeaderSystem sys;
    sys.L11 = Trajectory<Mat3>(grid);
    sys.L12 = Trajectory<Mat3>(grid);
    sys.L13 = Trajectory<Mat3>(grid);
    sys.L14 = Trajectory<Mat3>(grid);
    sys.L21 = Trajectory<Mat3>(grid);
    sys.L31 = Trajectory<Mat3>(grid);
    sys.L32 = Trajectory<Mat3>(grid);
    sys.N11 = Trajectory<Mat3>(grid);
    sys.N12 = Trajectory<Mat3>(grid);
    sys.B0v = Trajectory<Vec3>(grid);
    sys.D0v = Trajectory<Vec3>(grid);
    sys.Dt0v = Trajectory<Vec3>(grid);
    sys.f1 = Trajectory<Vec3>(grid);
    sys.f2 = Trajectory<Vec3>(grid);
    sys.f3 = Trajectory<Vec3>(grid);
    sys.f4 = Trajectory<Vec3>(grid);

    for (int k = 0; k <= grid.steps; ++k) {
        const double t = grid.t(k);
        Mat3& l11 = sys.L11.at(k);
        l11(0, 0) = m.A0(t);
        l11(0, 1) = m.E0(t);
        l11(1, 1) = m.A1(t) + m.E1(t);
        l11(2, 2) = -fs.m1.at(k);

        sys.L12.at(k)(1, 1) = m.B1(t) * fs.ksum.at(k);

        Mat3& l13 = sys.L13.at(k);
        l13(1, 2) = -fs.r1inv_b1sq.at(k);
        l13(2, 1) = fs.r1inv_b1sq.at(k);

        sys.L14.at(k)(2, 1) = fs.r1inv_b1_dt1.at(k);

        Mat3& l21 = sys.L21.at(k);
        l21(0, 0) = m.C0(t);
        l21(0, 1) = m.F0(t);

        Mat3& l31 = sys.L31.at(k);
        l31(0, 0) = m.Ct0(t);
        l31(0, 1) = m.Ft0(t);
        l31(1, 1) = m.Ct1(t) + m.Ft1(t);

        sys.L32.at(k)(1, 1) = m.Dt1(t) * fs.ksum.at(k);

        Mat3& n11 = sys.N11.at(k);
        const double q0 = m.Q0(t);
        n11(0, 0) = q0;
        n11(0, 1) = -q0;
        n11(1, 0) = -q0;
        n11(1, 1) = q0;

        Mat3& n12 = sys.N12.at(k);
        const double q1l = m.Q1(t) * m.lambda;
        n12(0, 2) = -q1l;
        n12(2, 0) = q1l;

        sys.B0v.at(k)[0] = m.B0(t);
        sys.D0v.at(k)[0] = m.D0(t);
        sys.Dt0v.at(k)[0] = m.Dt0(t);

        Vec3& f1 = sys.f1.at(k);
        f1[0] = m.b0(t);
        f1[1] = (faithful_typos ? m.B0(t) : m.B1(t)) * fs.k3.at(k) + m.b1(t);

        sys.f2.at(k)[0] = m.sigma0(t);

        Vec3& f3 = sys.f3.at(k);
        f3[0] = m.sigmat0(t);
        f3[1] = (faithful_typos ? m.Dt0(t) : m.Dt1(t)) * fs.k3.at(k) + m.sigmat1(t);

        sys.f4.at(k)[2] = fs.m2.at(k);
    }

    sys.Xi = Vec3{{m.xi0, m.xi, 0.0}};
    sys.G0cal = Mat3::zero();
    sys.G0cal(0, 0) = m.G0;
    return sys;
}

namespace detail {

inline double r0cal_of(const ModelCoefficients& m, double t, const Mat3& gamma1) {
    const double d0 = m.D0(t), dt0 = m.Dt0(t);
    return m.R0(t) + (d0 * d0 + dt0 * dt0) * gamma1(0, 0);
}

inline double r0cal_checked(const ModelCoefficients& m, double t, const Mat3& gamma1) {
    const double r0 = r0cal_of(m, t, gamma1);
    if (r0 < kDivisionTol)
        throw NumericsError(NumericsError::Kind::negative_r0, t,
                            "effective leader control weight not positive");
    return r0;
}

// u = L21' G1 D0 + L31' G1 Dt0 + G1 B0, the column entering every quadratic
// correction of the leader Riccati system.
inline Vec3 riccati_u(const LeaderSystem::At& s, const Mat3& g1) {
    Vec3 u = vecmat(g1 * s.D0v, s.L21);  // L21' (G1 D0)
    Vec3 u2 = vecmat(g1 * s.Dt0v, s.L31);
    u += u2;
    u += g1 * s.B0v;
    return u;
}

// row vector v1 = B0' G1 + D0' G1 L21 + Dt0' G1 L31 (G1 need not be symmetric
// here; the transpose is applied explicitly)
inline Vec3 row_v1(const LeaderSystem::At& s, const Mat3& g1) {
    Vec3 v = vecmat(s.B0v, g1);
    Vec3 v2 = vecmat(vecmat(s.D0v, g1), s.L21);
    Vec3 v3 = vecmat(vecmat(s.Dt0v, g1), s.L31);
    v += v2;
    v += v3;
    return v;
}

// row vector v2 = B0' G2 + Dt0' G1 (L32 + L14' (G1 + G2))
inline Vec3 row_v2(const LeaderSystem::At& s, const Mat3& g1, const Mat3& g2) {
    Vec3 v = vecmat(s.B0v, g2);
    Mat3 inner = s.L32 + transpose(s.L14) * (g1 + g2);
    Vec3 v2 = vecmat(vecmat(s.Dt0v, g1), inner);
    v += v2;
    return v;
}

}  // namespace detail

/// Symmetric matrix Riccati equation of the leader, integrated backward from
/// the terminal weight; the iterate is re-symmetrized after every step.
inline Trajectory<Mat3> solve_gamma1(const LeaderSystem& sys, const ModelCoefficients& m,
                                     const TimeGrid& grid, OdeScheme scheme = OdeScheme::rk4) {
    auto rhs = [&sys, &m](double t, const Mat3& g1) {
        const LeaderSystem::At s = sys.at(t);
        const double r0 = detail::r0cal_checked(m, t, g1);
        const Vec3 u = detail::riccati_u(s, g1);
        Mat3 d = g1 * s.L11;
        d += transpose(s.L11) * g1;
        d += s.N11;
        d += transpose(s.L21) * g1 * s.L21;
        d += transpose(s.L31) * g1 * s.L31;
        d -= (1.0 / r0) * outer(u, u);
        d *= -1.0;
        return d;
    };

    // backward RK4 with per-step symmetrization
    Trajectory<Mat3> out(grid);
    out.at(grid.steps) = sys.G0cal;
    const double dt = grid.dt();
    for (int k = grid.steps; k > 0; --k) {
        Mat3 next = scheme == OdeScheme::rk4
                        ? detail::rk4_step<Mat3>(rhs, grid.t(k), out.at(k), -dt)
                        : detail::euler_step<Mat3>(rhs, grid.t(k), out.at(k), -dt);
        next = symmetrize(next);
        detail::check_state(next, grid.t(k - 1));
        out.at(k - 1) = next;
    }
    return out;
}

/// Asymmetric companion Riccati equation; a blow-up is reported as
/// unsolvable with the escape time.
inline Trajectory<Mat3> solve_gamma2(const LeaderSystem& sys, const ModelCoefficients& m,
                                     const Trajectory<Mat3>& gamma1, const TimeGrid& grid,
                                     OdeScheme scheme = OdeScheme::rk4) {
    auto rhs = [&sys, &m, &gamma1](double t, const Mat3& g2) {
        const LeaderSystem::At s = sys.at(t);
        const Mat3 g1 = gamma1.lerp(t);
        const double r0 = detail::r0cal_checked(m, t, g1);
        const Mat3 gsum = g1 + g2;
        const Mat3 a = g1 * s.L14 + g2 * s.L14 - transpose(s.L32);
        const Vec3 u = detail::riccati_u(s, g1);
        const Vec3 w = g2 * s.B0v - a * (g1 * s.Dt0v);
        const Vec3 v1 = detail::row_v1(s, g1);
        const Vec3 v2 = detail::row_v2(s, g1, g2);

        Mat3 d = g1 * s.L12;
        d += g2 * (s.L11 + s.L12);
        d += s.N12;
        d += transpose(s.L11) * g2;
        d -= gsum * s.L13 * gsum;
        d += transpose(s.L12) * gsum;
        d += transpose(s.L31) * g1 * s.L32;
        d += transpose(s.L31) * g1 * transpose(s.L14) * gsum;
        d -= a * g1 * (s.L31 + s.L32 + transpose(s.L14) * gsum);
        d -= (1.0 / r0) * outer(u, v2);
        d -= (1.0 / r0) * outer(w, v1 + v2);
        d *= -1.0;
        return d;
    };
    try {
        return integrate_ode<Mat3>(rhs, Mat3::zero(), grid, OdeDirection::backward, scheme);
    } catch (const BlowUpError& e) {
        throw NumericsError(NumericsError::Kind::gamma2_unsolvable, e.t,
                            "asymmetric Riccati equation escaped at t=" + std::to_string(e.t));
    }
}

inline R0Check check_r0(const ModelCoefficients& m, const Trajectory<Mat3>& gamma1,
                        const TimeGrid& grid) {
    R0Check chk;
    chk.r0_min = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= grid.steps; ++k)
        chk.r0_min = std::min(chk.r0_min, detail::r0cal_of(m, grid.t(k), gamma1.at(k)));
    chk.ok = chk.r0_min > AssumptionReport::tol_r0;
    return chk;
}

/// Backward linear ODE for the mean adjoint offset of the stacked system.
inline Trajectory<Vec3> solve_ephi(const LeaderSystem& sys, const ModelCoefficients& m,
                                   const Trajectory<Mat3>& gamma1, const Trajectory<Mat3>& gamma2,
                                   const TimeGrid& grid, OdeScheme scheme = OdeScheme::rk4) {
    auto rhs = [&sys, &m, &gamma1, &gamma2](double t, const Vec3& ephi) {
        const LeaderSystem::At s = sys.at(t);
        const Mat3 g1 = gamma1.lerp(t);
        const Mat3 g2 = gamma2.lerp(t);
        const double r0 = detail::r0cal_checked(m, t, g1);
        const Mat3 gsum = g1 + g2;
        const Mat3 a = g1 * s.L14 + g2 * s.L14 - transpose(s.L32);
        const Vec3 u = detail::riccati_u(s, g1);
        const Vec3 S = u + g2 * s.B0v - a * (g1 * s.Dt0v);
        const Mat3 l14t = transpose(s.L14);
        // row vector B0' + Dt0' G1 L14'
        Vec3 row3 = vecmat(vecmat(s.Dt0v, g1), l14t);
        row3 += s.B0v;
        const double forcing_scalar =
            dot(vecmat(s.D0v, g1), s.f2) + dot(vecmat(s.Dt0v, g1), s.f3);

        Mat3 coef = transpose(s.L11);
        coef += transpose(s.L12);
        coef += transpose(s.L31 + s.L32) * g1 * l14t;
        coef -= gsum * (s.L13 + s.L14 * g1 * l14t);
        coef -= (1.0 / r0) * outer(S, row3);

        Vec3 force = (-1.0 / r0 * forcing_scalar) * S;
        force += vecmat(g1 * s.f2, s.L21);  // L21' (G1 f2)
        force += vecmat(g1 * s.f3, s.L31);
        force -= a * (g1 * s.f3);
        force += gsum * s.f1;
        force += s.f4;

        Vec3 d = coef * ephi;
        d += force;
        d *= -1.0;
        return d;
    };
    return integrate_ode<Vec3>(rhs, Vec3{}, grid, OdeDirection::backward, scheme);
}

struct LeaderGains {
    ScalarTrajectory r0cal;
    Trajectory<Vec3> th1, th2, th3;
    ScalarTrajectory th4;
};

inline LeaderGains leader_gains(const LeaderSystem& sys, const ModelCoefficients& m,
                                const Trajectory<Mat3>& gamma1, const Trajectory<Mat3>& gamma2,
                                const TimeGrid& grid) {
    LeaderGains g;
    g.r0cal = ScalarTrajectory(grid);
    g.th1 = Trajectory<Vec3>(grid);
    g.th2 = Trajectory<Vec3>(grid);
    g.th3 = Trajectory<Vec3>(grid);
    g.th4 = ScalarTrajectory(grid);
    for (int k = 0; k <= grid.steps; ++k) {
        const double t = grid.t(k);
        const LeaderSystem::At s = sys.at(t);
        const Mat3& g1 = gamma1.at(k);
        const Mat3& g2 = gamma2.at(k);
        const double r0 = detail::r0cal_of(m, t, g1);
        if (std::abs(r0) < kDivisionTol)
            throw NumericsError(NumericsError::Kind::division_degenerate, t,
                                "effective leader control weight vanishes");
        g.r0cal.at(k) = r0;
        g.th1.at(k) = (-1.0 / r0) * detail::row_v1(s, g1);
        g.th2.at(k) = (-1.0 / r0) * detail::row_v2(s, g1, g2);
        Vec3 th3 = vecmat(vecmat(s.Dt0v, g1), transpose(s.L14));
        th3 += s.B0v;
        g.th3.at(k) = (-1.0 / r0) * th3;
        g.th4.at(k) =
            (-1.0 / r0) * (dot(vecmat(s.D0v, g1), s.f2) + dot(vecmat(s.Dt0v, g1), s.f3));
    }
    return g;
}

/// Forward linear ODE for the mean of the stacked state.
inline Trajectory<Vec3> solve_ex(const LeaderSystem& sys, const ModelCoefficients& m,
                                 const Trajectory<Mat3>& gamma1, const Trajectory<Mat3>& gamma2,
                                 const Trajectory<Vec3>& ephi_cap, const TimeGrid& grid,
                                 OdeScheme scheme = OdeScheme::rk4) {
    auto rhs = [&](double t, const Vec3& ex) {
        const LeaderSystem::At s = sys.at(t);
        const Mat3 g1 = gamma1.lerp(t);
        const Mat3 g2 = gamma2.lerp(t);
        const Vec3 ephi = ephi_cap.lerp(t);
        const double r0 = detail::r0cal_checked(m, t, g1);
        const Mat3 gsum = g1 + g2;
        const Mat3 l14t = transpose(s.L14);
        Vec3 bmod = s.B0v - s.L14 * (g1 * s.Dt0v);
        const Vec3 v1 = detail::row_v1(s, g1);
        const Vec3 v2 = detail::row_v2(s, g1, g2);
        Vec3 row3 = vecmat(vecmat(s.Dt0v, g1), l14t);
        row3 += s.B0v;
        const double forcing_scalar =
            dot(vecmat(s.D0v, g1), s.f2) + dot(vecmat(s.Dt0v, g1), s.f3);

        Mat3 A = s.L11 + s.L12;
        A -= (s.L13 + s.L14 * g1 * l14t) * gsum;
        A -= s.L14 * g1 * (s.L31 + s.L32);
        A -= (1.0 / r0) * outer(bmod, v1 + v2);

        Mat3 B = s.L13 + s.L14 * g1 * l14t;
        B += (1.0 / r0) * outer(bmod, row3);

        Vec3 d = A * ex;
        d -= B * ephi;
        d += s.f1;
        d -= s.L14 * (g1 * s.f3);
        d -= (forcing_scalar / r0) * bmod;
        return d;
    };
    return integrate_ode<Vec3>(rhs, sys.Xi, grid, OdeDirection::forward, scheme);
}

/// Leader control: u0 = th1.Xcheck + th2.EX + th3.EPhi + th4.
inline double leader_feedback(const LeaderSynthesis& ls, int k, const Vec3& xcheck) {
    return dot(ls.th1.at(k), xcheck) + dot(ls.th2.at(k), ls.ex.at(k)) +
           dot(ls.th3.at(k), ls.ephi_cap.at(k)) + ls.th4.at(k);
}

/// Full leader pipeline on top of a follower synthesis.
inline LeaderSynthesis synthesize_leader(const ModelCoefficients& m, const FollowerSynthesis& fs,
                                         const TimeGrid& grid, bool faithful_typos = false,
                                         OdeScheme scheme = OdeScheme::rk4) {
    LeaderSynthesis ls;
    ls.system = assemble_leader_system(m, fs, grid, faithful_typos);
    ls.gamma1 = solve_gamma1(ls.system, m, grid, scheme);
    ls.gamma2 = solve_gamma2(ls.system, m, ls.gamma1, grid, scheme);
    ls.ephi_cap = solve_ephi(ls.system, m, ls.gamma1, ls.gamma2, grid, scheme);
    LeaderGains g = leader_gains(ls.system, m, ls.gamma1, ls.gamma2, grid);
    ls.r0cal = std::move(g.r0cal);
    ls.th1 = std::move(g.th1);
    ls.th2 = std::move(g.th2);
    ls.th3 = std::move(g.th3);
    ls.th4 = std::move(g.th4);
    ls.ex = solve_ex(ls.system, m, ls.gamma1, ls.gamma2, ls.ephi_cap, grid, scheme);

    ls.ez_star = ScalarTrajectory(grid);
    ls.ephi_star = ScalarTrajectory(grid);
    ls.eu0_star = ScalarTrajectory(grid);
    for (int k = 0; k <= grid.steps; ++k) {
        const Vec3& ex = ls.ex.at(k);
        ls.ez_star.at(k) = ex[1];
        Vec3 y = (ls.gamma1.at(k) + ls.gamma2.at(k)) * ex;
        y += ls.ephi_cap.at(k);
        ls.ephi_star.at(k) = -y[2];
        ls.eu0_star.at(k) = dot(ls.th1.at(k) + ls.th2.at(k), ex) +
                            dot(ls.th3.at(k), ls.ephi_cap.at(k)) + ls.th4.at(k);
    }
    return ls;
}

}  // namespace mfsg
