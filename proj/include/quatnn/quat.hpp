#pragma once

// Quaternion scalar type and the algebraic primitives everything else is
// built from: conjugation, norm, Hamilton product, and the 4x4 real matrix
// representation of left-multiplication.

#include <array>
#include <cmath>
#include <stdexcept>

namespace quatnn {

// Quaternion q = a + b*i + c*j + d*k with i^2 = j^2 = k^2 = ijk = -1.
// Templated on the scalar so tests can instantiate it with an instrumented
// counting type; all production code uses QuatT<double>.
template <typename T>
struct QuatT {
    T a{}, b{}, c{}, d{};

    constexpr QuatT() = default;
    constexpr QuatT(T a_, T b_, T c_, T d_) : a(a_), b(b_), c(c_), d(d_) {}

    constexpr QuatT operator+(const QuatT& o) const {
        return {a + o.a, b + o.b, c + o.c, d + o.d};
    }
    constexpr QuatT operator-(const QuatT& o) const {
        return {a - o.a, b - o.b, c - o.c, d - o.d};
    }
    constexpr QuatT operator-() const { return {-a, -b, -c, -d}; }
    constexpr QuatT operator*(T s) const { return {a * s, b * s, c * s, d * s}; }

    // Conjugate: a - b*i - c*j - d*k.
    constexpr QuatT conj() const { return {a, -b, -c, -d}; }
};

using Quaternion = QuatT<double>;

// Hamilton product, expanded by the basis multiplication table and the
// distributive law. Exactly 16 scalar multiplications and 12 additions or
// subtractions; the instrumented-counter test pins this down.
template <typename T>
constexpr QuatT<T> hamilton(const QuatT<T>& x, const QuatT<T>& y) {
    return {x.a * y.a - x.b * y.b - x.c * y.c - x.d * y.d,
            x.a * y.b + x.b * y.a + x.c * y.d - x.d * y.c,
            x.a * y.c - x.b * y.d + x.c * y.a + x.d * y.b,
            x.a * y.d + x.b * y.c - x.c * y.b + x.d * y.a};
}

inline double norm(const Quaternion& q) {
    return std::sqrt(q.a * q.a + q.b * q.b + q.c * q.c + q.d * q.d);
}

inline double norm_sq(const Quaternion& q) {
    return q.a * q.a + q.b * q.b + q.c * q.c + q.d * q.d;
}

inline Quaternion conj(const Quaternion& q) { return q.conj(); }

// Unit quaternion q / |q|. Zero norm is an error rather than a silent zero
// so initialization bugs surface immediately.
inline Quaternion normalized(const Quaternion& q) {
    const double n = norm(q);
    if (n == 0.0) throw std::domain_error("cannot normalize zero quaternion");
    const double inv = 1.0 / n;
    return {q.a * inv, q.b * inv, q.c * inv, q.d * inv};
}

// 4x4 real matrix of left-multiplication by q:
//   [ a -b -c -d ]
//   [ b  a -d  c ]
//   [ c  d  a -b ]
//   [ d -c  b  a ]
// Satisfies M + M^T = 2a*I.
struct HamiltonMatrix {
    std::array<std::array<double, 4>, 4> m{};
};

inline HamiltonMatrix to_hamilton_matrix(const Quaternion& q) {
    HamiltonMatrix h;
    h.m = {{{q.a, -q.b, -q.c, -q.d},
            {q.b, q.a, -q.d, q.c},
            {q.c, q.d, q.a, -q.b},
            {q.d, -q.c, q.b, q.a}}};
    return h;
}

// Hamilton product computed through the matrix representation: the matrix of
// x applied to y's column vector (a, b, c, d).
inline Quaternion hamilton_via_matrix(const Quaternion& x, const Quaternion& y) {
    const HamiltonMatrix h = to_hamilton_matrix(x);
    const std::array<double, 4> v{y.a, y.b, y.c, y.d};
    std::array<double, 4> out{};
    for (int r = 0; r < 4; ++r) {
        out[r] = h.m[r][0] * v[0] + h.m[r][1] * v[1] + h.m[r][2] * v[2] + h.m[r][3] * v[3];
    }
    return {out[0], out[1], out[2], out[3]};
}

}  // namespace quatnn
