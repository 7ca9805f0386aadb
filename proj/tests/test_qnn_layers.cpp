#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "quatnn/layers.hpp"
#include "quatnn/rng.hpp"
#include "quatnn/serialization.hpp"

using namespace quatnn;

namespace {

// Expands a quaternion layer into the equivalent real matrix: every weight
// becomes its 4x4 left-multiplication block, inputs/outputs ordered
// (a_0..a_{n-1}, b_0.., c_0.., d_0..) to match the plane-major layout.
Tensor real_expansion(const QLinear& layer) {
    const std::size_t n_out = layer.n_out(), n_in = layer.n_in();
    Tensor big = Tensor::zeros({4 * n_out, 4 * n_in});
    for (std::size_t o = 0; o < n_out; ++o) {
        for (std::size_t i = 0; i < n_in; ++i) {
            const HamiltonMatrix h = to_hamilton_matrix(layer.weights.get(o * n_in + i));
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c)
                    big.data[(r * n_out + o) * 4 * n_in + (c * n_in + i)] = h.m[r][c];
        }
    }
    return big;
}

std::vector<double> plane_major(const QuaternionTensor& t) {
    return {t.raw().begin(), t.raw().end()};
}

}  // namespace

TEST_CASE("qlinear identities") {
    SUBCASE("identity weight, zero bias") {
        QLinear l;
        l.weights = QuaternionTensor::zeros({1, 1});
        l.weights.set(0, {1, 0, 0, 0});
        l.bias = QuaternionTensor::zeros({1});
        QuaternionTensor x = QuaternionTensor::zeros({1});
        x.set(0, {0.25, -1.5, 3.0, 2.0});
        const QuaternionTensor y = l.forward(x);
        const Quaternion q = y.get(0);
        CHECK(q.a == 0.25);
        CHECK(q.b == -1.5);
        CHECK(q.c == 3.0);
        CHECK(q.d == 2.0);
    }
    SUBCASE("zero weights pass the bias through") {
        QLinear l;
        l.weights = QuaternionTensor::zeros({2, 3});
        l.bias = QuaternionTensor::zeros({2});
        l.bias.set(0, {1, 2, 3, 4});
        l.bias.set(1, {-1, 0, 0.5, 0});
        QuaternionTensor x = QuaternionTensor::zeros({3});
        for (double& v : x.raw()) v = 7.0;
        const QuaternionTensor y = l.forward(x);
        CHECK(y.get(0).a == 1.0);
        CHECK(y.get(0).d == 4.0);
        CHECK(y.get(1).a == -1.0);
        CHECK(y.get(1).c == 0.5);
    }
}

TEST_CASE("qlinear equals its real expansion on random 2x2 layers") {
    std::mt19937_64 g(42);
    for (int trial = 0; trial < 1000; ++trial) {
        QLinear l;
        l.weights = QuaternionTensor::zeros({2, 2});
        l.bias = QuaternionTensor::zeros({2});
        for (double& v : l.weights.raw()) v = uniform(g, -2, 2);
        for (double& v : l.bias.raw()) v = uniform(g, -2, 2);
        QuaternionTensor x = QuaternionTensor::zeros({2});
        for (double& v : x.raw()) v = uniform(g, -2, 2);

        const std::vector<double> got = plane_major(l.forward(x));

        const Tensor big = real_expansion(l);
        const std::vector<double> xin = plane_major(x);
        std::vector<double> want = plane_major(l.bias);
        for (std::size_t r = 0; r < 8; ++r) {
            for (std::size_t c = 0; c < 8; ++c) want[r] += big.data[r * 8 + c] * xin[c];
        }
        for (std::size_t r = 0; r < 8; ++r) REQUIRE(std::abs(got[r] - want[r]) <= 1e-12);
    }
}

TEST_CASE("split activations act per component plane") {
    QuaternionTensor q = QuaternionTensor::zeros({1});
    SUBCASE("sigmoid at zero") {
        const QuaternionTensor y = split_activation(Activation::Sigmoid, q);
        for (double v : y.raw()) CHECK(v == 0.5);
    }
    SUBCASE("tanh at zero") {
        const QuaternionTensor y = split_activation(Activation::Tanh, q);
        for (double v : y.raw()) CHECK(v == 0.0);
    }
    SUBCASE("relu clamps componentwise") {
        q.set(0, {1, -2, 3, -4});
        const QuaternionTensor y = split_activation(Activation::Relu, q);
        CHECK(y.get(0).a == 1.0);
        CHECK(y.get(0).b == 0.0);
        CHECK(y.get(0).c == 3.0);
        CHECK(y.get(0).d == 0.0);
    }
    SUBCASE("commutes with pack/unpack exactly") {
        std::mt19937_64 g(3);
        QuaternionTensor t = QuaternionTensor::zeros({4, 5});
        for (double& v : t.raw()) v = uniform(g, -3, 3);
        const auto planes = t.unpack();
        const auto split = split_activation(Activation::Tanh, t).unpack();
        for (int k = 0; k < 4; ++k)
            for (std::size_t i = 0; i < planes[k].size(); ++i)
                CHECK(split[k][i] == std::tanh(planes[k][i]));
    }
}

TEST_CASE("polar-form initialization statistics") {
    InitSpec spec;
    spec.criterion = InitCriterion::Glorot;
    spec.seed = 2024;
    spec.fan_in = 128;
    spec.fan_out = 128;
    const double sigma = spec.sigma();
    CHECK(sigma == doctest::Approx(1.0 / std::sqrt(2.0 * 256.0)));

    // 100k draws in one tensor.
    QuaternionTensor w = QuaternionTensor::zeros({100000});
    quaternion_init(spec, w);

    SUBCASE("deterministic for a fixed seed") {
        QuaternionTensor w2 = QuaternionTensor::zeros({100000});
        quaternion_init(spec, w2);
        for (std::size_t i = 0; i < w.raw().size(); ++i) REQUIRE(w.raw()[i] == w2.raw()[i]);
    }

    SUBCASE("pooled per-component std within 5% of the criterion sigma") {
        double sq = 0.0;
        for (double v : w.raw()) sq += v * v;
        const double std_all = std::sqrt(sq / static_cast<double>(w.raw().size()));
        CHECK(std::abs(std_all - sigma) / sigma <= 0.05);
    }

    SUBCASE("component means vanish within 3 standard errors") {
        for (int k = 0; k < 4; ++k) {
            double mean = 0.0, sq = 0.0;
            const double* p = w.plane_ptr(k);
            const double n = static_cast<double>(w.plane_size());
            for (std::size_t i = 0; i < w.plane_size(); ++i) {
                mean += p[i];
                sq += p[i] * p[i];
            }
            mean /= n;
            const double se = std::sqrt(sq / n) / std::sqrt(n);
            CHECK(std::abs(mean) <= 3.0 * se);
        }
    }

    SUBCASE("imaginary direction is unit length") {
        for (std::size_t i = 0; i < 1000; ++i) {
            const Quaternion q = w.get(i);
            const double im = std::sqrt(q.b * q.b + q.c * q.c + q.d * q.d);
            const double mag = norm(q);
            if (im > 1e-12 * mag) {
                const double ub = q.b / im, uc = q.c / im, ud = q.d / im;
                CHECK(std::abs(std::sqrt(ub * ub + uc * uc + ud * ud) - 1.0) <= 1e-9);
            }
        }
    }

    SUBCASE("magnitude and angle are uncorrelated across draws") {
        const std::size_t n = 50000;
        std::vector<double> mags(n), angs(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Quaternion q = w.get(i);
            mags[i] = norm(q);
            angs[i] = std::atan2(std::sqrt(q.b * q.b + q.c * q.c + q.d * q.d), q.a);
        }
        double mm = 0, ma = 0;
        for (std::size_t i = 0; i < n; ++i) {
            mm += mags[i];
            ma += angs[i];
        }
        mm /= n;
        ma /= n;
        double cov = 0, vm = 0, va = 0;
        for (std::size_t i = 0; i < n; ++i) {
            cov += (mags[i] - mm) * (angs[i] - ma);
            vm += (mags[i] - mm) * (mags[i] - mm);
            va += (angs[i] - ma) * (angs[i] - ma);
        }
        const double corr = cov / std::sqrt(vm * va);
        CHECK(std::abs(corr) <= 3.0 / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("init input validation") {
    InitSpec spec;
    spec.fan_in = 0;
    spec.fan_out = 4;
    QuaternionTensor w = QuaternionTensor::zeros({4});
    CHECK_THROWS_AS(quaternion_init(spec, w), std::invalid_argument);
    CHECK_THROWS_AS(quaternion_init_linear(InitSpec{}, 0, 3), std::invalid_argument);
}

TEST_CASE("parameter_count") {
    SUBCASE("128 -> 128 with bias") {
        QLinear l;
        l.weights = QuaternionTensor::zeros({128, 128});
        l.bias = QuaternionTensor::zeros({128});
        CHECK(parameter_count(l) == 4 * 128 * 128 + 4 * 128);
        CHECK(parameter_count(l) == 66048);
    }
    SUBCASE("2 -> 3 without bias") {
        QLinear l;
        l.weights = QuaternionTensor::zeros({3, 2});
        l.has_bias = false;
        CHECK(parameter_count(l) == 24);
    }
    SUBCASE("weight sharing: 4x fewer reals than the unconstrained real layer") {
        QLinear ql;
        ql.weights = QuaternionTensor::zeros({2, 2});
        ql.has_bias = false;
        RealLinear rl;
        rl.weights = Tensor::zeros({8, 8});
        rl.has_bias = false;
        CHECK(parameter_count(ql) == 16);  // 4 n m
        CHECK(parameter_count(rl) == 64);  // 16 n m
        CHECK(4 * parameter_count(ql) == parameter_count(rl));
    }
}

TEST_CASE("parameter container round-trips bit exactly") {
    InitSpec spec;
    spec.seed = 77;
    QLinear l = quaternion_init_linear(spec, 3, 5);
    for (double& v : l.bias.raw()) v = 0.125;

    const std::string path =
        (std::filesystem::temp_directory_path() / "quatnn_params_test.qar").string();
    std::vector<NamedArray> arrays = snapshot_params(l);
    CHECK(arrays.size() == 2);
    CHECK(arrays[0].shape == std::vector<std::size_t>{4, 3, 5});
    write_array_container(path, arrays);
    const std::vector<NamedArray> back = read_array_container(path);
    REQUIRE(back.size() == arrays.size());
    for (std::size_t a = 0; a < back.size(); ++a) {
        CHECK(back[a].name == arrays[a].name);
        CHECK(back[a].shape == arrays[a].shape);
        REQUIRE(back[a].f64().size() == arrays[a].f64().size());
        for (std::size_t i = 0; i < back[a].f64().size(); ++i)
            REQUIRE(back[a].f64()[i] == arrays[a].f64()[i]);
    }
    InitSpec other;
    other.seed = 1;
    QLinear restored = quaternion_init_linear(other, 3, 5);
    restore_params(restored, back);
    for (std::size_t i = 0; i < l.weights.raw().size(); ++i)
        REQUIRE(restored.weights.raw()[i] == l.weights.raw()[i]);
    std::filesystem::remove(path);
}
