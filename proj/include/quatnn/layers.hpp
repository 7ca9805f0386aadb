#pragma once

// Quaternion dense layers, split activations, and parameter initialization.

#include <cstdint>
#include <functional>
#include <string>

#include "quatnn/qtensor.hpp"
#include "quatnn/tensor.hpp"

namespace quatnn {

// ---------------------------------------------------------------------------
// Parameter visitation. Every model exposes its parameters as named real
// arrays in a fixed order; the optimizer, serializer, counter, and gradient
// checker all work through this one interface. Quaternion tensors visit as a
// single array with a leading plane dimension of 4 (a, b, c, d order).

struct ParamRef {
    std::string name;
    double* data;
    std::size_t size;
    std::vector<std::size_t> shape;
};

using ParamVisitor = std::function<void(const ParamRef&)>;

inline void visit_tensor(const std::string& name, QuaternionTensor& t, const ParamVisitor& fn) {
    std::vector<std::size_t> shape{4};
    shape.insert(shape.end(), t.shape().begin(), t.shape().end());
    fn({name, t.raw().data(), t.raw().size(), std::move(shape)});
}

inline void visit_tensor(const std::string& name, Tensor& t, const ParamVisitor& fn) {
    fn({name, t.data.data(), t.data.size(), t.shape});
}

// Total number of real scalars across all parameter arrays of anything that
// provides visit_params(model, fn).
template <typename Model>
std::size_t parameter_count(Model& m) {
    std::size_t n = 0;
    visit_params(m, [&](const ParamRef& p) { n += p.size; });
    return n;
}

// ---------------------------------------------------------------------------
// Split activations: the real nonlinearity applied to each component plane
// independently.

enum class Activation { Sigmoid, Tanh, Relu };

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double apply_activation(Activation k, double x) {
    switch (k) {
        case Activation::Sigmoid: return sigmoid(x);
        case Activation::Tanh: return std::tanh(x);
        case Activation::Relu: return x > 0.0 ? x : 0.0;
    }
    return x;
}

QuaternionTensor split_activation(Activation k, const QuaternionTensor& q);

// ---------------------------------------------------------------------------
// Layers.

struct QLinear {
    QuaternionTensor weights;  // [n_out, n_in] quaternion units
    QuaternionTensor bias;     // [n_out]; empty when has_bias is false
    bool has_bias{true};

    std::size_t n_out() const { return weights.shape()[0]; }
    std::size_t n_in() const { return weights.shape()[1]; }

    QuaternionTensor forward(const QuaternionTensor& x) const;
};

struct RealLinear {
    Tensor weights;  // [n_out, n_in]
    Tensor bias;     // [n_out]
    bool has_bias{true};

    Tensor forward(const Tensor& x) const;
};

inline void visit_params(QLinear& l, const ParamVisitor& fn, const std::string& prefix = "") {
    visit_tensor(prefix + "weights", l.weights, fn);
    if (l.has_bias) visit_tensor(prefix + "bias", l.bias, fn);
}

inline void visit_params(RealLinear& l, const ParamVisitor& fn, const std::string& prefix = "") {
    visit_tensor(prefix + "weights", l.weights, fn);
    if (l.has_bias) visit_tensor(prefix + "bias", l.bias, fn);
}

// ---------------------------------------------------------------------------
// Initialization.

enum class InitCriterion { Glorot, He };

struct InitSpec {
    InitCriterion criterion{InitCriterion::Glorot};
    std::uint64_t seed{0};
    std::size_t fan_in{0};
    std::size_t fan_out{0};

    // Target per-component standard deviation, fans in quaternion units.
    double sigma() const;
};

// Polar-form quaternion weight sampling: each weight is
//   w = |w| * (cos t + u_b sin t * i + u_c sin t * j + u_d sin t * k)
// with t ~ U(-pi, pi), (u_b, u_c, u_d) uniform on the unit sphere, and
// |w| ~ Rayleigh(sigma * sqrt(2)). The sqrt(2) puts the pooled per-component
// standard deviation at the criterion's sigma: Rayleigh(s) has E|w|^2 = 2 s^2
// spread over four components, so pooled variance is s^2 / 2.
void quaternion_init(const InitSpec& spec, QuaternionTensor& w);

// Quaternion dense layer with polar-form weights and zero biases.
QLinear quaternion_init_linear(const InitSpec& spec, std::size_t n_out, std::size_t n_in,
                               bool with_bias = true);

// Glorot-uniform for real tensors: U(+-sqrt(6 / (fan_in + fan_out))).
void glorot_init(Tensor& w, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);

RealLinear glorot_init_linear(std::size_t n_out, std::size_t n_in, std::uint64_t seed,
                              bool with_bias = true);

}  // namespace quatnn
