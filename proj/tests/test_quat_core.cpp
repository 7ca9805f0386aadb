#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "quatnn/opcount.hpp"
#include "quatnn/qtensor.hpp"
#include "quatnn/quat.hpp"
#include "quatnn/rng.hpp"

using namespace quatnn;

namespace {

Quaternion random_quat(std::mt19937_64& g, double lo = -10.0, double hi = 10.0) {
    return {uniform(g, lo, hi), uniform(g, lo, hi), uniform(g, lo, hi), uniform(g, lo, hi)};
}

void check_close(const Quaternion& a, const Quaternion& b, double tol) {
    CHECK(std::abs(a.a - b.a) <= tol);
    CHECK(std::abs(a.b - b.b) <= tol);
    CHECK(std::abs(a.c - b.c) <= tol);
    CHECK(std::abs(a.d - b.d) <= tol);
}

}  // namespace

TEST_CASE("addition identities") {
    Quaternion q{1, 2, 3, 4};
    check_close(q + Quaternion{0, 0, 0, 0}, q, 0.0);
    check_close(q + Quaternion{-1, -2, -3, -4}, {0, 0, 0, 0}, 0.0);
    check_close(Quaternion{1, 0, 1, 0} + Quaternion{0, 2, 0, 2}, {1, 2, 1, 2}, 0.0);
}

TEST_CASE("conjugation") {
    check_close(conj(Quaternion{1, 2, 3, 4}), {1, -2, -3, -4}, 0.0);
    check_close(conj(Quaternion{5, 0, 0, 0}), {5, 0, 0, 0}, 0.0);
    const Quaternion q{0.5, -1, 2, -3};
    check_close(conj(conj(q)), q, 0.0);
}

TEST_CASE("norm and normalize") {
    CHECK(norm(Quaternion{0, 3, 0, 4}) == 5.0);
    CHECK(norm(Quaternion{0, 0, 0, 0}) == 0.0);
    CHECK(norm(Quaternion{1, 1, 1, 1}) == 2.0);

    check_close(normalized(Quaternion{0, 3, 0, 4}), {0, 0.6, 0, 0.8}, 1e-15);
    check_close(normalized(Quaternion{2, 0, 0, 0}), {1, 0, 0, 0}, 0.0);
    check_close(normalized(Quaternion{1, 1, 1, 1}), {0.5, 0.5, 0.5, 0.5}, 0.0);
    CHECK_THROWS_AS(normalized(Quaternion{0, 0, 0, 0}), std::domain_error);

    std::mt19937_64 g(1);
    for (int it = 0; it < 1000; ++it) {
        Quaternion q = random_quat(g);
        if (norm(q) == 0.0) continue;
        CHECK(std::abs(norm(normalized(q)) - 1.0) <= 1e-12);
    }
}

TEST_CASE("hamilton basis table") {
    const Quaternion one{1, 0, 0, 0}, i{0, 1, 0, 0}, j{0, 0, 1, 0}, k{0, 0, 0, 1};
    check_close(hamilton(i, j), k, 0.0);
    check_close(hamilton(j, k), i, 0.0);
    check_close(hamilton(k, i), j, 0.0);
    check_close(hamilton(j, i), {0, 0, 0, -1}, 0.0);
    check_close(hamilton(i, i), {-1, 0, 0, 0}, 0.0);
    check_close(hamilton(j, j), {-1, 0, 0, 0}, 0.0);
    check_close(hamilton(k, k), {-1, 0, 0, 0}, 0.0);
    check_close(hamilton(hamilton(i, j), k), {-1, 0, 0, 0}, 0.0);
    const Quaternion q{11, -7, 3, 0.25};
    check_close(hamilton(one, q), q, 0.0);
    check_close(hamilton(q, one), q, 0.0);
}

TEST_CASE("hamilton worked example, cross-checked against the matrix route") {
    const Quaternion x{1, 2, 3, 4}, y{5, 6, 7, 8};
    const Quaternion direct = hamilton(x, y);
    const Quaternion via = hamilton_via_matrix(x, y);
    check_close(direct, {-60, 12, 30, 24}, 0.0);
    check_close(via, {-60, 12, 30, 24}, 1e-12);
}

TEST_CASE("hamilton matrix layout") {
    const HamiltonMatrix id = to_hamilton_matrix({1, 0, 0, 0});
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) CHECK(id.m[r][c] == (r == c ? 1.0 : 0.0));

    const HamiltonMatrix mi = to_hamilton_matrix({0, 1, 0, 0});
    const double expect[4][4] = {{0, -1, 0, 0}, {1, 0, 0, 0}, {0, 0, 0, -1}, {0, 0, 1, 0}};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) CHECK(mi.m[r][c] == expect[r][c]);

    const HamiltonMatrix g = to_hamilton_matrix({1, 2, 3, 4});
    CHECK(g.m[0][0] == 1.0);
    CHECK(g.m[1][0] == 2.0);
    CHECK(g.m[2][0] == 3.0);
    CHECK(g.m[3][0] == 4.0);

    // Skew structure: M + M^T = 2a I.
    std::mt19937_64 gen(7);
    for (int it = 0; it < 100; ++it) {
        const Quaternion q = random_quat(gen);
        const HamiltonMatrix m = to_hamilton_matrix(q);
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                const double want = r == c ? 2.0 * q.a : 0.0;
                CHECK(m.m[r][c] + m.m[c][r] == want);
            }
        }
    }
}

TEST_CASE("matrix route equals identity on basis products") {
    check_close(hamilton_via_matrix({1, 0, 0, 0}, {7, 8, 9, 10}), {7, 8, 9, 10}, 0.0);
    check_close(hamilton_via_matrix({0, 0, 1, 0}, {0, 0, 0, 1}), {0, 1, 0, 0}, 0.0);
}

TEST_CASE("mutual oracle: hamilton vs matrix route over 10^4 random pairs") {
    std::mt19937_64 g(123);
    for (int it = 0; it < 10000; ++it) {
        const Quaternion x = random_quat(g), y = random_quat(g);
        const Quaternion a = hamilton(x, y), b = hamilton_via_matrix(x, y);
        REQUIRE(std::abs(a.a - b.a) <= 1e-12);
        REQUIRE(std::abs(a.b - b.b) <= 1e-12);
        REQUIRE(std::abs(a.c - b.c) <= 1e-12);
        REQUIRE(std::abs(a.d - b.d) <= 1e-12);
    }
}

TEST_CASE("algebraic properties over random samples") {
    std::mt19937_64 g(99);
    for (int it = 0; it < 2000; ++it) {
        const Quaternion x = random_quat(g), y = random_quat(g);
        // Norm multiplicativity.
        const double lhs = norm(hamilton(x, y));
        const double rhs = norm(x) * norm(y);
        if (rhs > 0) CHECK(std::abs(lhs - rhs) / rhs <= 1e-9);
        // Conjugate anti-homomorphism.
        check_close(conj(hamilton(x, y)), hamilton(conj(y), conj(x)), 1e-12);
        // |q|^2 equals the real part of q (x) conj(q); imaginary parts vanish.
        const Quaternion qq = hamilton(x, conj(x));
        CHECK(std::abs(qq.a - norm_sq(x)) <= 1e-9 * std::max(1.0, norm_sq(x)));
        CHECK(std::abs(qq.b) <= 1e-12);
        CHECK(std::abs(qq.c) <= 1e-12);
        CHECK(std::abs(qq.d) <= 1e-12);
    }
}

TEST_CASE("instrumented operation count: 16 mul + 12 add") {
    CountedDouble::reset();
    QuatT<CountedDouble> x{1.5, -2.0, 0.25, 3.0}, y{-1.0, 4.0, 2.0, 0.5};
    const QuatT<CountedDouble> z = hamilton(x, y);
    CHECK(CountedDouble::mul_count == 16);
    CHECK(CountedDouble::add_count == 12);
    // Result must match the double instantiation.
    const Quaternion zd = hamilton(Quaternion{1.5, -2.0, 0.25, 3.0}, {-1.0, 4.0, 2.0, 0.5});
    CHECK(z.a.v == zd.a);
    CHECK(z.b.v == zd.b);
    CHECK(z.c.v == zd.c);
    CHECK(z.d.v == zd.d);
}

TEST_CASE("pack and unpack components") {
    SUBCASE("single element") {
        const double a[] = {1}, b[] = {2}, c[] = {3}, d[] = {4};
        QuaternionTensor t = QuaternionTensor::pack({1}, a, b, c, d);
        check_close(t.get(0), {1, 2, 3, 4}, 0.0);
    }
    SUBCASE("round trip is bit exact") {
        std::mt19937_64 g(5);
        std::array<std::vector<double>, 4> planes;
        for (auto& p : planes) {
            p.resize(6);
            for (double& v : p) v = uniform(g, -3, 3);
        }
        QuaternionTensor t = QuaternionTensor::pack(
            {2, 3}, planes[0], planes[1], planes[2], planes[3]);
        const auto back = t.unpack();
        for (int k = 0; k < 4; ++k)
            for (int i = 0; i < 6; ++i) CHECK(back[k][i] == planes[k][i]);
    }
    SUBCASE("empty shape") {
        QuaternionTensor t = QuaternionTensor::pack({0}, {}, {}, {}, {});
        CHECK(t.plane_size() == 0);
    }
    SUBCASE("mismatched planes") {
        const double a[] = {1, 2}, b[] = {2}, c[] = {3, 4}, d[] = {4, 5};
        CHECK_THROWS_AS(QuaternionTensor::pack({2}, a, b, c, d), std::invalid_argument);
    }
}

TEST_CASE("qmat_vec against a scalar-object loop") {
    SUBCASE("identity weight") {
        QuaternionTensor W = QuaternionTensor::zeros({1, 1});
        W.set(0, {1, 0, 0, 0});
        QuaternionTensor x = QuaternionTensor::zeros({1});
        x.set(0, {0.3, -0.7, 2.0, 9.0});
        QuaternionTensor y = QuaternionTensor::zeros({1});
        qmat_vec_acc(W, view(x), mut_view(y));
        check_close(y.get(0), x.get(0), 0.0);
    }
    SUBCASE("zero weights annihilate") {
        QuaternionTensor W = QuaternionTensor::zeros({2, 3});
        QuaternionTensor x = QuaternionTensor::zeros({3});
        x.set(0, {1, 1, 1, 1});
        QuaternionTensor y = QuaternionTensor::zeros({2});
        qmat_vec_acc(W, view(x), mut_view(y));
        for (std::size_t o = 0; o < 2; ++o) check_close(y.get(o), {0, 0, 0, 0}, 0.0);
    }
    SUBCASE("random 3x2 matches the loop oracle") {
        std::mt19937_64 g(17);
        QuaternionTensor W = QuaternionTensor::zeros({3, 2});
        QuaternionTensor x = QuaternionTensor::zeros({2});
        for (double& v : W.raw()) v = uniform(g, -2, 2);
        for (double& v : x.raw()) v = uniform(g, -2, 2);
        QuaternionTensor y = QuaternionTensor::zeros({3});
        qmat_vec_acc(W, view(x), mut_view(y));
        for (std::size_t o = 0; o < 3; ++o) {
            Quaternion acc{};
            for (std::size_t i = 0; i < 2; ++i)
                acc = acc + hamilton(W.get(o * 2 + i), x.get(i));
            check_close(y.get(o), acc, 1e-12);
        }
    }
    SUBCASE("shape mismatch names both extents") {
        QuaternionTensor W = QuaternionTensor::zeros({3, 2});
        QuaternionTensor x = QuaternionTensor::zeros({5});
        QuaternionTensor y = QuaternionTensor::zeros({3});
        try {
            qmat_vec_acc(W, view(x), mut_view(y));
            FAIL("expected a shape error");
        } catch (const std::invalid_argument& e) {
            const std::string msg = e.what();
            CHECK(msg.find('2') != std::string::npos);
            CHECK(msg.find('5') != std::string::npos);
        }
    }
}

TEST_CASE("non-commutativity witness") {
    check_close(hamilton(Quaternion{0, 1, 0, 0}, Quaternion{0, 0, 1, 0}), {0, 0, 0, 1}, 0.0);
    check_close(hamilton(Quaternion{0, 0, 1, 0}, Quaternion{0, 1, 0, 0}), {0, 0, 0, -1}, 0.0);
}
