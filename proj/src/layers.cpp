#include "quatnn/layers.hpp"

#include <cmath>

#include "quatnn/rng.hpp"

namespace quatnn {

QuaternionTensor split_activation(Activation k, const QuaternionTensor& q) {
    QuaternionTensor out = QuaternionTensor::zeros(q.shape());
    const auto src = q.raw();
    auto dst = out.raw();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = apply_activation(k, src[i]);
    return out;
}

QuaternionTensor QLinear::forward(const QuaternionTensor& x) const {
    QuaternionTensor y = QuaternionTensor::zeros({n_out()});
    qmat_vec_acc(weights, view(x), mut_view(y));
    if (has_bias) {
        auto yb = y.raw();
        const auto bb = bias.raw();
        for (std::size_t i = 0; i < yb.size(); ++i) yb[i] += bb[i];
    }
    return y;
}

Tensor RealLinear::forward(const Tensor& x) const {
    Tensor y = Tensor::zeros({weights.shape[0]});
    mat_vec_acc(weights, {x.data.data(), x.data.size()}, {y.data.data(), y.data.size()});
    if (has_bias) {
        for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += bias.data[i];
    }
    return y;
}

double InitSpec::sigma() const {
    switch (criterion) {
        case InitCriterion::Glorot:
            return 1.0 / std::sqrt(2.0 * static_cast<double>(fan_in + fan_out));
        case InitCriterion::He:
            return 1.0 / std::sqrt(2.0 * static_cast<double>(fan_in));
    }
    return 0.0;
}

void quaternion_init(const InitSpec& spec, QuaternionTensor& w) {
    if (w.plane_size() == 0) throw std::invalid_argument("quaternion_init: zero-sized tensor");
    if (spec.fan_in == 0 || spec.fan_out == 0) {
        throw std::invalid_argument("quaternion_init: fans must be positive");
    }
    std::mt19937_64 gen(mix64(spec.seed));
    const double rayleigh_scale = spec.sigma() * std::sqrt(2.0);
    const double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < w.plane_size(); ++i) {
        // Inverse-CDF Rayleigh draw.
        double u = uniform01(gen);
        if (u >= 1.0) u = std::nextafter(1.0, 0.0);
        const double mag = rayleigh_scale * std::sqrt(-2.0 * std::log1p(-u));
        const double theta = uniform(gen, -pi, pi);
        // Uniform unit 3-vector from a normalized Gaussian triple.
        double ub, uc, ud, n;
        do {
            ub = gaussian(gen);
            uc = gaussian(gen);
            ud = gaussian(gen);
            n = std::sqrt(ub * ub + uc * uc + ud * ud);
        } while (n < 1e-12);
        const double st = std::sin(theta) / n;
        w.plane_ptr(0)[i] = mag * std::cos(theta);
        w.plane_ptr(1)[i] = mag * st * ub;
        w.plane_ptr(2)[i] = mag * st * uc;
        w.plane_ptr(3)[i] = mag * st * ud;
    }
}

QLinear quaternion_init_linear(const InitSpec& spec, std::size_t n_out, std::size_t n_in,
                               bool with_bias) {
    if (n_out == 0 || n_in == 0) {
        throw std::invalid_argument("quaternion_init_linear: dimensions must be positive");
    }
    QLinear layer;
    layer.weights = QuaternionTensor::zeros({n_out, n_in});
    InitSpec s = spec;
    s.fan_in = n_in;
    s.fan_out = n_out;
    quaternion_init(s, layer.weights);
    layer.has_bias = with_bias;
    if (with_bias) layer.bias = QuaternionTensor::zeros({n_out});
    return layer;
}

void glorot_init(Tensor& w, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
    std::mt19937_64 gen(mix64(seed));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : w.data) v = uniform(gen, -bound, bound);
}

RealLinear glorot_init_linear(std::size_t n_out, std::size_t n_in, std::uint64_t seed,
                              bool with_bias) {
    if (n_out == 0 || n_in == 0) {
        throw std::invalid_argument("glorot_init_linear: dimensions must be positive");
    }
    RealLinear layer;
    layer.weights = Tensor::zeros({n_out, n_in});
    glorot_init(layer.weights, n_in, n_out, seed);
    layer.has_bias = with_bias;
    if (with_bias) layer.bias = Tensor::zeros({n_out});
    return layer;
}

}  // namespace quatnn
