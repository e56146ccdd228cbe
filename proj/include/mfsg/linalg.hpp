#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

// Fixed-size 3-vector / 3x3-matrix algebra. The state spaces here are tiny
// and known at compile time, so a dependency-free implementation beats a
// general linear algebra library.

namespace mfsg {

struct Vec3 {
    std::array<double, 3> v{0.0, 0.0, 0.0};

    double& operator[](int i) { return v[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return v[static_cast<std::size_t>(i)]; }

    Vec3& operator+=(const Vec3& o) {
        for (int i = 0; i < 3; ++i) v[i] += o.v[i];
        return *this;
    }
    Vec3& operator-=(const Vec3& o) {
        for (int i = 0; i < 3; ++i) v[i] -= o.v[i];
        return *this;
    }
    Vec3& operator*=(double s) {
        for (int i = 0; i < 3; ++i) v[i] *= s;
        return *this;
    }
};

inline Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
inline Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
inline Vec3 operator*(double s, Vec3 a) { return a *= s; }
inline Vec3 operator*(Vec3 a, double s) { return a *= s; }

inline double dot(const Vec3& a, const Vec3& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

struct Mat3 {
    // row-major
    std::array<double, 9> m{};

    double& operator()(int r, int c) { return m[static_cast<std::size_t>(3 * r + c)]; }
    double operator()(int r, int c) const { return m[static_cast<std::size_t>(3 * r + c)]; }

    static Mat3 zero() { return Mat3{}; }
    static Mat3 identity() {
        Mat3 I;
        I(0, 0) = I(1, 1) = I(2, 2) = 1.0;
        return I;
    }

    Mat3& operator+=(const Mat3& o) {
        for (int i = 0; i < 9; ++i) m[i] += o.m[i];
        return *this;
    }
    Mat3& operator-=(const Mat3& o) {
        for (int i = 0; i < 9; ++i) m[i] -= o.m[i];
        return *this;
    }
    Mat3& operator*=(double s) {
        for (int i = 0; i < 9; ++i) m[i] *= s;
        return *this;
    }
};

inline Mat3 operator+(Mat3 a, const Mat3& b) { return a += b; }
inline Mat3 operator-(Mat3 a, const Mat3& b) { return a -= b; }
inline Mat3 operator*(double s, Mat3 a) { return a *= s; }
inline Mat3 operator*(Mat3 a, double s) { return a *= s; }

inline Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
            r(i, j) = s;
        }
    return r;
}

inline Vec3 operator*(const Mat3& a, const Vec3& x) {
    Vec3 r;
    for (int i = 0; i < 3; ++i)
        r[i] = a(i, 0) * x[0] + a(i, 1) * x[1] + a(i, 2) * x[2];
    return r;
}

// rowvec * matrix, with the row vector carried as a Vec3
inline Vec3 vecmat(const Vec3& x, const Mat3& a) {
    Vec3 r;
    for (int j = 0; j < 3; ++j)
        r[j] = x[0] * a(0, j) + x[1] * a(1, j) + x[2] * a(2, j);
    return r;
}

inline Mat3 transpose(const Mat3& a) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = a(j, i);
    return r;
}

// column * row
inline Mat3 outer(const Vec3& c, const Vec3& r) {
    Mat3 out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out(i, j) = c[i] * r[j];
    return out;
}

inline Mat3 symmetrize(const Mat3& a) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = 0.5 * (a(i, j) + a(j, i));
    return r;
}

inline double max_abs(double x) { return std::abs(x); }
inline double max_abs(const Vec3& x) {
    return std::max({std::abs(x[0]), std::abs(x[1]), std::abs(x[2])});
}
inline double max_abs(const Mat3& a) {
    double r = 0.0;
    for (double e : a.m) r = std::max(r, std::abs(e));
    return r;
}

inline bool all_finite(double x) { return std::isfinite(x); }
inline bool all_finite(const Vec3& x) {
    return std::isfinite(x[0]) && std::isfinite(x[1]) && std::isfinite(x[2]);
}
inline bool all_finite(const Mat3& a) {
    for (double e : a.m)
        if (!std::isfinite(e)) return false;
    return true;
}

inline double max_asymmetry(const Mat3& a) {
    double r = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) r = std::max(r, std::abs(a(i, j) - a(j, i)));
    return r;
}

inline double trace(const Mat3& a) { return a(0, 0) + a(1, 1) + a(2, 2); }

inline double det(const Mat3& a) {
    return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
           a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

// Eigenvalues of a symmetric 3x3 via the trigonometric closed form
// (ascending order). Accurate enough for semidefiniteness checks.
inline std::array<double, 3> sym_eigenvalues(const Mat3& a) {
    const double q = trace(a) / 3.0;
    Mat3 b = a;
    b(0, 0) -= q;
    b(1, 1) -= q;
    b(2, 2) -= q;
    double p2 = 0.0;
    for (double e : b.m) p2 += e * e;
    const double p = std::sqrt(p2 / 6.0);
    if (p < 1e-300) return {q, q, q};
    const Mat3 bn = (1.0 / p) * b;
    double r = det(bn) / 2.0;
    r = std::min(1.0, std::max(-1.0, r));
    const double phi = std::acos(r) / 3.0;
    const double e1 = q + 2.0 * p * std::cos(phi);
    const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
    const double e2 = 3.0 * q - e1 - e3;
    std::array<double, 3> ev{e3, e2, e1};
    if (ev[0] > ev[1]) std::swap(ev[0], ev[1]);
    if (ev[1] > ev[2]) std::swap(ev[1], ev[2]);
    if (ev[0] > ev[1]) std::swap(ev[0], ev[1]);
    return ev;
}

}  // namespace mfsg
