#pragma once

// Plain real tensor for the LSTM baseline, the output head, and feature
// matrices, plus the few dense kernels they need.

#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace quatnn {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> s) {
        Tensor t;
        t.shape = std::move(s);
        std::size_t n = 1;
        for (std::size_t e : t.shape) n *= e;
        t.data.assign(n, 0.0);
        return t;
    }

    std::size_t size() const { return data.size(); }
    double* row(std::size_t r) { return data.data() + r * shape.back(); }
    const double* row(std::size_t r) const { return data.data() + r * shape.back(); }
    void fill(double v) { data.assign(data.size(), v); }
};

// y += W x for W [n_out, n_in].
inline void mat_vec_acc(const Tensor& w, std::span<const double> x, std::span<double> y) {
    const std::size_t n_out = w.shape[0], n_in = w.shape[1];
    if (x.size() != n_in || y.size() != n_out) {
        throw std::invalid_argument("mat_vec: shape mismatch, weight is [" +
                                    std::to_string(n_out) + " x " + std::to_string(n_in) +
                                    "] but input has " + std::to_string(x.size()) +
                                    " and output has " + std::to_string(y.size()) +
                                    " elements");
    }
    for (std::size_t o = 0; o < n_out; ++o) {
        const double* r = w.data.data() + o * n_in;
        double s = 0.0;
        for (std::size_t i = 0; i < n_in; ++i) s += r[i] * x[i];
        y[o] += s;
    }
}

// gx += W^T gy.
inline void mat_tvec_acc(const Tensor& w, std::span<const double> gy, std::span<double> gx) {
    const std::size_t n_out = w.shape[0], n_in = w.shape[1];
    if (gx.size() != n_in || gy.size() != n_out) {
        throw std::invalid_argument("mat_tvec: shape mismatch");
    }
    for (std::size_t o = 0; o < n_out; ++o) {
        const double* r = w.data.data() + o * n_in;
        const double g = gy[o];
        for (std::size_t i = 0; i < n_in; ++i) gx[i] += r[i] * g;
    }
}

// gW += gy x^T.
inline void outer_acc(Tensor& gw, std::span<const double> gy, std::span<const double> x) {
    const std::size_t n_out = gw.shape[0], n_in = gw.shape[1];
    if (x.size() != n_in || gy.size() != n_out) {
        throw std::invalid_argument("outer_acc: shape mismatch");
    }
    for (std::size_t o = 0; o < n_out; ++o) {
        double* r = gw.data.data() + o * n_in;
        const double g = gy[o];
        for (std::size_t i = 0; i < n_in; ++i) r[i] += g * x[i];
    }
}

}  // namespace quatnn
