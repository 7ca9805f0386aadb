#pragma once

// Batched quaternion storage and the fused plane kernels.
//
// A QuaternionTensor keeps its four component planes as contiguous sections
// of one backing buffer, in a, b, c, d order (structure-of-arrays). The
// blockwise Hamilton-product kernels below operate directly on plane
// pointers so views into rows of [T, F] tensors need no copies.

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "quatnn/quat.hpp"

namespace quatnn {

class QuaternionTensor {
public:
    QuaternionTensor() = default;

    static QuaternionTensor zeros(std::vector<std::size_t> shape) {
        QuaternionTensor t;
        t.shape_ = std::move(shape);
        t.plane_ = 1;
        for (std::size_t e : t.shape_) t.plane_ *= e;
        t.data_.assign(4 * t.plane_, 0.0);
        return t;
    }

    // Assembles a tensor from four real planes (a, b, c, d). All planes must
    // share the shape's element count.
    static QuaternionTensor pack(std::vector<std::size_t> shape,
                                 std::span<const double> a, std::span<const double> b,
                                 std::span<const double> c, std::span<const double> d) {
        QuaternionTensor t = zeros(std::move(shape));
        const std::array<std::span<const double>, 4> planes{a, b, c, d};
        for (int k = 0; k < 4; ++k) {
            if (planes[k].size() != t.plane_) {
                throw std::invalid_argument(
                    "pack: plane " + std::to_string(k) + " has " +
                    std::to_string(planes[k].size()) + " elements, shape implies " +
                    std::to_string(t.plane_));
            }
            for (std::size_t i = 0; i < t.plane_; ++i) t.plane_ptr(k)[i] = planes[k][i];
        }
        return t;
    }

    std::array<std::vector<double>, 4> unpack() const {
        std::array<std::vector<double>, 4> out;
        for (int k = 0; k < 4; ++k)
            out[k].assign(plane_ptr(k), plane_ptr(k) + plane_);
        return out;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t plane_size() const { return plane_; }
    std::size_t param_count() const { return 4 * plane_; }

    double* plane_ptr(int k) { return data_.data() + static_cast<std::size_t>(k) * plane_; }
    const double* plane_ptr(int k) const {
        return data_.data() + static_cast<std::size_t>(k) * plane_;
    }

    // Whole backing buffer, planes consecutive in a,b,c,d order.
    std::span<double> raw() { return {data_.data(), data_.size()}; }
    std::span<const double> raw() const { return {data_.data(), data_.size()}; }

    Quaternion get(std::size_t flat) const {
        return {data_[flat], data_[plane_ + flat], data_[2 * plane_ + flat],
                data_[3 * plane_ + flat]};
    }
    void set(std::size_t flat, const Quaternion& q) {
        data_[flat] = q.a;
        data_[plane_ + flat] = q.b;
        data_[2 * plane_ + flat] = q.c;
        data_[3 * plane_ + flat] = q.d;
    }

    void fill(double v) { data_.assign(data_.size(), v); }

private:
    std::vector<std::size_t> shape_;
    std::size_t plane_{0};
    std::vector<double> data_;
};

// Lightweight plane-pointer bundles for kernel arguments.
struct QView {
    const double* p[4];
    std::size_t n;
};
struct QMutView {
    double* p[4];
    std::size_t n;
};

inline QView view(const QuaternionTensor& t) {
    return {{t.plane_ptr(0), t.plane_ptr(1), t.plane_ptr(2), t.plane_ptr(3)}, t.plane_size()};
}
inline QMutView mut_view(QuaternionTensor& t) {
    return {{t.plane_ptr(0), t.plane_ptr(1), t.plane_ptr(2), t.plane_ptr(3)}, t.plane_size()};
}

// Row r of a [T, F] tensor as an F-element view.
inline QView row_view(const QuaternionTensor& t, std::size_t r) {
    const std::size_t f = t.shape().back();
    return {{t.plane_ptr(0) + r * f, t.plane_ptr(1) + r * f, t.plane_ptr(2) + r * f,
             t.plane_ptr(3) + r * f},
            f};
}
inline QMutView mut_row_view(QuaternionTensor& t, std::size_t r) {
    const std::size_t f = t.shape().back();
    return {{t.plane_ptr(0) + r * f, t.plane_ptr(1) + r * f, t.plane_ptr(2) + r * f,
             t.plane_ptr(3) + r * f},
            f};
}

// y += W (*) x, where W is [n_out, n_in] in quaternion units and (*) is the
// blockwise Hamilton product: y[o] = sum_i W[o][i] (x) x[i]. Equivalent to a
// 4*n_out x 4*n_in real matrix-vector product with each weight expanded to
// its left-multiplication matrix.
void qmat_vec_acc(const QuaternionTensor& w, QView x, QMutView y);

// Gradient w.r.t. the input: gx[i] += sum_o conj(W[o][i]) (x) gy[o].
// This is the transpose of the real expansion, using M(q)^T = M(conj q).
void qmat_vec_grad_input(const QuaternionTensor& w, QView gy, QMutView gx);

// Gradient w.r.t. the weights: gW[o][i] += gy[o] (x) conj(x[i]).
void qmat_vec_grad_weight(QuaternionTensor& gw, QView gy, QView x);

// Elementwise Hamilton product over equal-length views: y[i] = l[i] (x) r[i].
void qhadamard(QView l, QView r, QMutView y);

// Elementwise gradients of y = l (x) r:
//   gl[i] += gy[i] (x) conj(r[i]),  gr[i] += conj(l[i]) (x) gy[i].
void qhadamard_grad(QView l, QView r, QView gy, QMutView gl, QMutView gr);

}  // namespace quatnn
