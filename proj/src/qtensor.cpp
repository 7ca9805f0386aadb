#include "quatnn/qtensor.hpp"

namespace quatnn {

namespace {

void check_mat_shapes(const QuaternionTensor& w, std::size_t x_n, std::size_t y_n,
                      const char* who) {
    if (w.shape().size() != 2) {
        throw std::invalid_argument(std::string(who) + ": weight tensor must be rank 2");
    }
    const std::size_t n_out = w.shape()[0], n_in = w.shape()[1];
    if (x_n != n_in || y_n != n_out) {
        throw std::invalid_argument(std::string(who) + ": shape mismatch, weight is [" +
                                    std::to_string(n_out) + " x " + std::to_string(n_in) +
                                    "] but input has " + std::to_string(x_n) +
                                    " and output has " + std::to_string(y_n) + " elements");
    }
}

}  // namespace

void qmat_vec_acc(const QuaternionTensor& w, QView x, QMutView y) {
    check_mat_shapes(w, x.n, y.n, "qmat_vec");
    const std::size_t n_out = w.shape()[0], n_in = w.shape()[1];
    const double* wa = w.plane_ptr(0);
    const double* wb = w.plane_ptr(1);
    const double* wc = w.plane_ptr(2);
    const double* wd = w.plane_ptr(3);
    for (std::size_t o = 0; o < n_out; ++o) {
        const double* ra = wa + o * n_in;
        const double* rb = wb + o * n_in;
        const double* rc = wc + o * n_in;
        const double* rd = wd + o * n_in;
        double sa = 0.0, sb = 0.0, sc = 0.0, sd = 0.0;
        for (std::size_t i = 0; i < n_in; ++i) {
            const double p = ra[i], q = rb[i], r = rc[i], s = rd[i];
            const double xa = x.p[0][i], xb = x.p[1][i], xc = x.p[2][i], xd = x.p[3][i];
            sa += p * xa - q * xb - r * xc - s * xd;
            sb += p * xb + q * xa + r * xd - s * xc;
            sc += p * xc - q * xd + r * xa + s * xb;
            sd += p * xd + q * xc - r * xb + s * xa;
        }
        y.p[0][o] += sa;
        y.p[1][o] += sb;
        y.p[2][o] += sc;
        y.p[3][o] += sd;
    }
}

void qmat_vec_grad_input(const QuaternionTensor& w, QView gy, QMutView gx) {
    check_mat_shapes(w, gx.n, gy.n, "qmat_vec_grad_input");
    const std::size_t n_out = w.shape()[0], n_in = w.shape()[1];
    const double* wa = w.plane_ptr(0);
    const double* wb = w.plane_ptr(1);
    const double* wc = w.plane_ptr(2);
    const double* wd = w.plane_ptr(3);
    for (std::size_t o = 0; o < n_out; ++o) {
        const double* ra = wa + o * n_in;
        const double* rb = wb + o * n_in;
        const double* rc = wc + o * n_in;
        const double* rd = wd + o * n_in;
        const double ga = gy.p[0][o], gb = gy.p[1][o], gc = gy.p[2][o], gd = gy.p[3][o];
        for (std::size_t i = 0; i < n_in; ++i) {
            const double p = ra[i], q = rb[i], r = rc[i], s = rd[i];
            // conj(W) (x) g
            gx.p[0][i] += p * ga + q * gb + r * gc + s * gd;
            gx.p[1][i] += p * gb - q * ga - r * gd + s * gc;
            gx.p[2][i] += p * gc + q * gd - r * ga - s * gb;
            gx.p[3][i] += p * gd - q * gc + r * gb - s * ga;
        }
    }
}

void qmat_vec_grad_weight(QuaternionTensor& gw, QView gy, QView x) {
    check_mat_shapes(gw, x.n, gy.n, "qmat_vec_grad_weight");
    const std::size_t n_out = gw.shape()[0], n_in = gw.shape()[1];
    double* wa = gw.plane_ptr(0);
    double* wb = gw.plane_ptr(1);
    double* wc = gw.plane_ptr(2);
    double* wd = gw.plane_ptr(3);
    for (std::size_t o = 0; o < n_out; ++o) {
        double* ra = wa + o * n_in;
        double* rb = wb + o * n_in;
        double* rc = wc + o * n_in;
        double* rd = wd + o * n_in;
        const double ga = gy.p[0][o], gb = gy.p[1][o], gc = gy.p[2][o], gd = gy.p[3][o];
        for (std::size_t i = 0; i < n_in; ++i) {
            const double xa = x.p[0][i], xb = x.p[1][i], xc = x.p[2][i], xd = x.p[3][i];
            // g (x) conj(x)
            ra[i] += ga * xa + gb * xb + gc * xc + gd * xd;
            rb[i] += -ga * xb + gb * xa - gc * xd + gd * xc;
            rc[i] += -ga * xc + gb * xd + gc * xa - gd * xb;
            rd[i] += -ga * xd - gb * xc + gc * xb + gd * xa;
        }
    }
}

void qhadamard(QView l, QView r, QMutView y) {
    for (std::size_t i = 0; i < y.n; ++i) {
        const double la = l.p[0][i], lb = l.p[1][i], lc = l.p[2][i], ld = l.p[3][i];
        const double ra = r.p[0][i], rb = r.p[1][i], rc = r.p[2][i], rd = r.p[3][i];
        y.p[0][i] = la * ra - lb * rb - lc * rc - ld * rd;
        y.p[1][i] = la * rb + lb * ra + lc * rd - ld * rc;
        y.p[2][i] = la * rc - lb * rd + lc * ra + ld * rb;
        y.p[3][i] = la * rd + lb * rc - lc * rb + ld * ra;
    }
}

void qhadamard_grad(QView l, QView r, QView gy, QMutView gl, QMutView gr) {
    for (std::size_t i = 0; i < gy.n; ++i) {
        const double la = l.p[0][i], lb = l.p[1][i], lc = l.p[2][i], ld = l.p[3][i];
        const double ra = r.p[0][i], rb = r.p[1][i], rc = r.p[2][i], rd = r.p[3][i];
        const double ga = gy.p[0][i], gb = gy.p[1][i], gc = gy.p[2][i], gd = gy.p[3][i];
        // gl += g (x) conj(r)
        gl.p[0][i] += ga * ra + gb * rb + gc * rc + gd * rd;
        gl.p[1][i] += -ga * rb + gb * ra - gc * rd + gd * rc;
        gl.p[2][i] += -ga * rc + gb * rd + gc * ra - gd * rb;
        gl.p[3][i] += -ga * rd - gb * rc + gc * rb + gd * ra;
        // gr += conj(l) (x) g
        gr.p[0][i] += la * ga + lb * gb + lc * gc + ld * gd;
        gr.p[1][i] += la * gb - lb * ga - lc * gd + ld * gc;
        gr.p[2][i] += la * gc + lb * gd - lc * ga - ld * gb;
        gr.p[3][i] += la * gd - lb * gc + lc * gb - ld * ga;
    }
}

}  // namespace quatnn
