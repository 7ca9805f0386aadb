#include "quatnn/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include "quatnn/rng.hpp"

namespace quatnn {

namespace {

// Elementwise out = x (x) conj(y): the gradient of the left factor of a
// Hamilton product, with x the upstream gradient.
void ham_right_conj(QView x, QView y, QMutView out) {
    for (std::size_t i = 0; i < out.n; ++i) {
        const double ga = x.p[0][i], gb = x.p[1][i], gc = x.p[2][i], gd = x.p[3][i];
        const double ra = y.p[0][i], rb = y.p[1][i], rc = y.p[2][i], rd = y.p[3][i];
        out.p[0][i] = ga * ra + gb * rb + gc * rc + gd * rd;
        out.p[1][i] = -ga * rb + gb * ra - gc * rd + gd * rc;
        out.p[2][i] = -ga * rc + gb * rd + gc * ra - gd * rb;
        out.p[3][i] = -ga * rd - gb * rc + gc * rb + gd * ra;
    }
}

// Elementwise out = conj(x) (x) y: the gradient of the right factor, with y
// the upstream gradient.
void ham_left_conj(QView x, QView y, QMutView out) {
    for (std::size_t i = 0; i < out.n; ++i) {
        const double la = x.p[0][i], lb = x.p[1][i], lc = x.p[2][i], ld = x.p[3][i];
        const double ga = y.p[0][i], gb = y.p[1][i], gc = y.p[2][i], gd = y.p[3][i];
        out.p[0][i] = la * ga + lb * gb + lc * gc + ld * gd;
        out.p[1][i] = la * gb - lb * ga - lc * gd + ld * gc;
        out.p[2][i] = la * gc + lb * gd - lc * ga - ld * gb;
        out.p[3][i] = la * gd - lb * gc + lc * gb - ld * ga;
    }
}

void planes_mul(QView a, QView b, QMutView out) {
    for (int k = 0; k < 4; ++k)
        for (std::size_t i = 0; i < out.n; ++i) out.p[k][i] = a.p[k][i] * b.p[k][i];
}

void planes_add_acc(QMutView dst, QView src) {
    for (int k = 0; k < 4; ++k)
        for (std::size_t i = 0; i < dst.n; ++i) dst.p[k][i] += src.p[k][i];
}

// One direction of QLSTM backpropagation through time. dh_up carries the
// per-frame gradient arriving from above; parameter gradients accumulate
// into gp and input gradients into dinput.
void qlstm_scan_backward(const QLSTMParams& p, const QuaternionTensor& input, bool reverse,
                         GateProduct mode, const QDirTrace& tr, const QuaternionTensor& dh_up,
                         QLSTMParams& gp, QuaternionTensor& dinput) {
    const std::size_t T = input.shape()[0];
    const std::size_t H = p.hidden();
    QuaternionTensor dh = QuaternionTensor::zeros({H});
    QuaternionTensor dh_carry = QuaternionTensor::zeros({H});
    QuaternionTensor dC_carry = QuaternionTensor::zeros({H});
    QuaternionTensor do_ = QuaternionTensor::zeros({H});
    QuaternionTensor dtanhC = QuaternionTensor::zeros({H});
    QuaternionTensor dC = QuaternionTensor::zeros({H});
    QuaternionTensor df = QuaternionTensor::zeros({H});
    QuaternionTensor di = QuaternionTensor::zeros({H});
    QuaternionTensor dcbar = QuaternionTensor::zeros({H});
    QuaternionTensor dC_next = QuaternionTensor::zeros({H});
    QuaternionTensor dh_next = QuaternionTensor::zeros({H});
    QuaternionTensor dpre = QuaternionTensor::zeros({H});
    QuaternionTensor zero_state = QuaternionTensor::zeros({H});

    for (std::size_t s = T; s-- > 0;) {
        const std::size_t t = reverse ? T - 1 - s : s;
        const bool has_prev = s > 0;
        const std::size_t t_prev = reverse ? t + 1 : t - 1;

        QView up = row_view(dh_up, t);
        for (int k = 0; k < 4; ++k)
            for (std::size_t j = 0; j < H; ++j)
                dh.plane_ptr(k)[j] = up.p[k][j] + dh_carry.plane_ptr(k)[j];

        QView o_t = row_view(tr.o, t);
        QView tc_t = row_view(tr.tanhC, t);
        if (mode == GateProduct::Componentwise) {
            planes_mul(view(dh), tc_t, mut_view(do_));
            planes_mul(view(dh), o_t, mut_view(dtanhC));
        } else {
            ham_right_conj(view(dh), tc_t, mut_view(do_));
            ham_left_conj(o_t, view(dh), mut_view(dtanhC));
        }

        for (int k = 0; k < 4; ++k) {
            for (std::size_t j = 0; j < H; ++j) {
                const double tc = tc_t.p[k][j];
                dC.plane_ptr(k)[j] =
                    dC_carry.plane_ptr(k)[j] + dtanhC.plane_ptr(k)[j] * (1.0 - tc * tc);
            }
        }

        QView C_prev = has_prev ? row_view(tr.C, t_prev) : view(zero_state);
        QView f_t = row_view(tr.f, t);
        QView i_t = row_view(tr.i, t);
        QView cb_t = row_view(tr.cbar, t);
        if (mode == GateProduct::Componentwise) {
            planes_mul(view(dC), C_prev, mut_view(df));
            planes_mul(view(dC), f_t, mut_view(dC_next));
            planes_mul(view(dC), cb_t, mut_view(di));
            planes_mul(view(dC), i_t, mut_view(dcbar));
        } else {
            ham_right_conj(view(dC), C_prev, mut_view(df));
            ham_left_conj(f_t, view(dC), mut_view(dC_next));
            ham_right_conj(view(dC), cb_t, mut_view(di));
            ham_left_conj(i_t, view(dC), mut_view(dcbar));
        }

        QView h_prev = has_prev ? row_view(tr.h, t_prev) : view(zero_state);
        QView x_t = row_view(input, t);
        dh_next.fill(0.0);

        struct GateSlot {
            const QuaternionTensor* act;
            const QuaternionTensor* dact;
            bool is_tanh;
            const QuaternionTensor* W_h;
            const QuaternionTensor* W_x;
            QuaternionTensor* gW_h;
            QuaternionTensor* gW_x;
            QuaternionTensor* gb;
        };
        const GateSlot slots[4] = {
            {&tr.f, &df, false, &p.W_fh, &p.W_fx, &gp.W_fh, &gp.W_fx, &gp.b_f},
            {&tr.i, &di, false, &p.W_ih, &p.W_ix, &gp.W_ih, &gp.W_ix, &gp.b_i},
            {&tr.cbar, &dcbar, true, &p.W_ch, &p.W_cx, &gp.W_ch, &gp.W_cx, &gp.b_c},
            {&tr.o, &do_, false, &p.W_oh, &p.W_ox, &gp.W_oh, &gp.W_ox, &gp.b_o},
        };
        for (const GateSlot& g : slots) {
            QView act = row_view(*g.act, t);
            for (int k = 0; k < 4; ++k) {
                for (std::size_t j = 0; j < H; ++j) {
                    const double a = act.p[k][j];
                    const double d = g.dact->plane_ptr(k)[j];
                    dpre.plane_ptr(k)[j] = g.is_tanh ? d * (1.0 - a * a) : d * a * (1.0 - a);
                }
            }
            qmat_vec_grad_weight(*g.gW_h, view(dpre), h_prev);
            qmat_vec_grad_weight(*g.gW_x, view(dpre), x_t);
            planes_add_acc(mut_view(*g.gb), view(dpre));
            qmat_vec_grad_input(*g.W_x, view(dpre), mut_row_view(dinput, t));
            qmat_vec_grad_input(*g.W_h, view(dpre), mut_view(dh_next));
        }
        std::swap(dh_carry, dh_next);
        std::swap(dC_carry, dC_next);
    }
}

// Real-valued twin of the scan backward.
void real_scan_backward(const RealLSTMParams& p, const Tensor& input, bool reverse,
                        const RDirTrace& tr, const Tensor& dh_up, RealLSTMParams& gp,
                        Tensor& dinput) {
    const std::size_t T = input.shape[0];
    const std::size_t H = p.hidden();
    std::vector<double> dh(H), dh_carry(H, 0.0), dC_carry(H, 0.0), do_(H), dtanhC(H), dC(H),
        df(H), di(H), dcbar(H), dC_next(H), dh_next(H), dpre(H), zero(H, 0.0);

    for (std::size_t s = T; s-- > 0;) {
        const std::size_t t = reverse ? T - 1 - s : s;
        const bool has_prev = s > 0;
        const std::size_t t_prev = reverse ? t + 1 : t - 1;

        const double* up = dh_up.row(t);
        for (std::size_t j = 0; j < H; ++j) dh[j] = up[j] + dh_carry[j];

        const double* o_t = tr.o.row(t);
        const double* tc_t = tr.tanhC.row(t);
        const double* f_t = tr.f.row(t);
        const double* i_t = tr.i.row(t);
        const double* cb_t = tr.cbar.row(t);
        const double* C_prev = has_prev ? tr.C.row(t_prev) : zero.data();
        for (std::size_t j = 0; j < H; ++j) {
            do_[j] = dh[j] * tc_t[j];
            dtanhC[j] = dh[j] * o_t[j];
            dC[j] = dC_carry[j] + dtanhC[j] * (1.0 - tc_t[j] * tc_t[j]);
            df[j] = dC[j] * C_prev[j];
            dC_next[j] = dC[j] * f_t[j];
            di[j] = dC[j] * cb_t[j];
            dcbar[j] = dC[j] * i_t[j];
        }

        std::span<const double> h_prev =
            has_prev ? std::span<const double>{tr.h.row(t_prev), H}
                     : std::span<const double>{zero.data(), H};
        std::span<const double> x_t{input.row(t), input.shape[1]};
        std::fill(dh_next.begin(), dh_next.end(), 0.0);

        struct GateSlot {
            const double* act;
            const double* dact;
            bool is_tanh;
            const Tensor* W_h;
            const Tensor* W_x;
            Tensor* gW_h;
            Tensor* gW_x;
            Tensor* gb;
        };
        const GateSlot slots[4] = {
            {f_t, df.data(), false, &p.W_fh, &p.W_fx, &gp.W_fh, &gp.W_fx, &gp.b_f},
            {i_t, di.data(), false, &p.W_ih, &p.W_ix, &gp.W_ih, &gp.W_ix, &gp.b_i},
            {cb_t, dcbar.data(), true, &p.W_ch, &p.W_cx, &gp.W_ch, &gp.W_cx, &gp.b_c},
            {o_t, do_.data(), false, &p.W_oh, &p.W_ox, &gp.W_oh, &gp.W_ox, &gp.b_o},
        };
        for (const GateSlot& g : slots) {
            for (std::size_t j = 0; j < H; ++j) {
                const double a = g.act[j];
                dpre[j] = g.is_tanh ? g.dact[j] * (1.0 - a * a) : g.dact[j] * a * (1.0 - a);
            }
            outer_acc(*g.gW_h, {dpre.data(), H}, h_prev);
            outer_acc(*g.gW_x, {dpre.data(), H}, x_t);
            for (std::size_t j = 0; j < H; ++j) g.gb->data[j] += dpre[j];
            mat_tvec_acc(*g.W_x, {dpre.data(), H}, {dinput.row(t), input.shape[1]});
            mat_tvec_acc(*g.W_h, {dpre.data(), H}, {dh_next.data(), H});
        }
        std::swap(dh_carry, dh_next);
        std::swap(dC_carry, dC_next);
    }
}

}  // namespace

double qlstm_backward(const QLSTMModel& m, const QForwardTrace& trace,
                      const std::vector<int>& labels, double loss_scale, QLSTMModel& grads) {
    const SoftmaxResult sm = softmax_cross_entropy(trace.logits, labels);
    if (!std::isfinite(sm.loss)) throw std::runtime_error("backward: non-finite loss");
    const std::size_t T = trace.logits.shape[0];
    const std::size_t K = m.cfg.num_classes;
    const std::size_t D = m.cfg.fused_width();

    Tensor dlogits = Tensor::zeros({T, K});
    const double w = loss_scale / static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) {
        const double* post = sm.posteriors.row(t);
        double* dst = dlogits.row(t);
        for (std::size_t k = 0; k < K; ++k) dst[k] = post[k] * w;
        dst[labels[t]] -= w;
    }

    Tensor dfeat = Tensor::zeros({T, 4 * D});
    for (std::size_t t = 0; t < T; ++t) {
        std::span<const double> dl{dlogits.row(t), K};
        outer_acc(grads.head.weights, dl, {trace.features.row(t), 4 * D});
        if (m.head.has_bias)
            for (std::size_t k = 0; k < K; ++k) grads.head.bias.data[k] += dl[k];
        mat_tvec_acc(m.head.weights, dl, {dfeat.row(t), 4 * D});
    }

    // Re-fold head feature gradients into quaternion planes.
    QuaternionTensor dfused = QuaternionTensor::zeros({T, D});
    for (std::size_t t = 0; t < T; ++t) {
        QMutView dst = mut_row_view(dfused, t);
        const double* src = dfeat.row(t);
        for (int k = 0; k < 4; ++k)
            for (std::size_t j = 0; j < D; ++j) dst.p[k][j] = src[k * D + j];
    }

    const std::size_t H = m.cfg.hidden;
    for (std::size_t l = m.layers.size(); l-- > 0;) {
        const QLayerTrace& lt = trace.layers[l];
        const std::size_t I = lt.input.shape()[1];

        QuaternionTensor dh_up_f = QuaternionTensor::zeros({T, H});
        QuaternionTensor dh_up_b;
        if (m.cfg.bidirectional) dh_up_b = QuaternionTensor::zeros({T, H});
        for (std::size_t t = 0; t < T; ++t) {
            QView src = row_view(dfused, t);
            QMutView f = mut_row_view(dh_up_f, t);
            if (!m.cfg.bidirectional) {
                for (int k = 0; k < 4; ++k)
                    for (std::size_t j = 0; j < H; ++j) f.p[k][j] = src.p[k][j];
                continue;
            }
            QMutView b = mut_row_view(dh_up_b, t);
            if (m.cfg.fusion == BidirFusion::Concat) {
                for (int k = 0; k < 4; ++k) {
                    for (std::size_t j = 0; j < H; ++j) {
                        f.p[k][j] = src.p[k][j];
                        b.p[k][j] = src.p[k][H + j];
                    }
                }
            } else {
                for (int k = 0; k < 4; ++k) {
                    for (std::size_t j = 0; j < H; ++j) {
                        f.p[k][j] = src.p[k][j];
                        b.p[k][j] = src.p[k][j];
                    }
                }
            }
        }

        QuaternionTensor dinput = QuaternionTensor::zeros({T, I});
        qlstm_scan_backward(m.layers[l].fwd, lt.input, false, m.cfg.gate_product, lt.dir[0],
                            dh_up_f, grads.layers[l].fwd, dinput);
        if (m.cfg.bidirectional) {
            qlstm_scan_backward(m.layers[l].bwd, lt.input, true, m.cfg.gate_product,
                                lt.dir[1], dh_up_b, grads.layers[l].bwd, dinput);
        }

        if (l > 0) {
            if (!lt.drop_keep.empty()) {
                auto raw = dinput.raw();
                const std::size_t plane = dinput.plane_size();
                for (int k = 0; k < 4; ++k)
                    for (std::size_t i = 0; i < plane; ++i)
                        raw[k * plane + i] =
                            lt.drop_keep[i] ? raw[k * plane + i] * lt.drop_scale : 0.0;
            }
            dfused = std::move(dinput);
        }
    }
    return sm.loss;
}

double real_lstm_backward(const RealLSTMModel& m, const RForwardTrace& trace,
                          const std::vector<int>& labels, double loss_scale,
                          RealLSTMModel& grads) {
    const SoftmaxResult sm = softmax_cross_entropy(trace.logits, labels);
    if (!std::isfinite(sm.loss)) throw std::runtime_error("backward: non-finite loss");
    const std::size_t T = trace.logits.shape[0];
    const std::size_t K = m.cfg.num_classes;
    const std::size_t D = m.cfg.fused_width();
    const std::size_t H = m.cfg.hidden;

    Tensor dlogits = Tensor::zeros({T, K});
    const double w = loss_scale / static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) {
        const double* post = sm.posteriors.row(t);
        double* dst = dlogits.row(t);
        for (std::size_t k = 0; k < K; ++k) dst[k] = post[k] * w;
        dst[labels[t]] -= w;
    }

    // The head consumed the top layer's fused hidden sequence; rebuild it.
    const RLayerTrace& top = trace.layers.back();
    Tensor fused_top = Tensor::zeros({T, D});
    for (std::size_t t = 0; t < T; ++t) {
        double* dst = fused_top.row(t);
        const double* fw = top.dir[0].h.row(t);
        if (!m.cfg.bidirectional) {
            for (std::size_t j = 0; j < H; ++j) dst[j] = fw[j];
        } else if (m.cfg.fusion == BidirFusion::Concat) {
            const double* bw = top.dir[1].h.row(t);
            for (std::size_t j = 0; j < H; ++j) {
                dst[j] = fw[j];
                dst[H + j] = bw[j];
            }
        } else {
            const double* bw = top.dir[1].h.row(t);
            for (std::size_t j = 0; j < H; ++j) dst[j] = fw[j] + bw[j];
        }
    }

    Tensor dfused = Tensor::zeros({T, D});
    for (std::size_t t = 0; t < T; ++t) {
        std::span<const double> dl{dlogits.row(t), K};
        outer_acc(grads.head.weights, dl, {fused_top.row(t), D});
        if (m.head.has_bias)
            for (std::size_t k = 0; k < K; ++k) grads.head.bias.data[k] += dl[k];
        mat_tvec_acc(m.head.weights, dl, {dfused.row(t), D});
    }

    for (std::size_t l = m.layers.size(); l-- > 0;) {
        const RLayerTrace& lt = trace.layers[l];
        const std::size_t I = lt.input.shape[1];

        Tensor dh_up_f = Tensor::zeros({T, H});
        Tensor dh_up_b;
        if (m.cfg.bidirectional) dh_up_b = Tensor::zeros({T, H});
        for (std::size_t t = 0; t < T; ++t) {
            const double* src = dfused.row(t);
            double* f = dh_up_f.row(t);
            if (!m.cfg.bidirectional) {
                for (std::size_t j = 0; j < H; ++j) f[j] = src[j];
                continue;
            }
            double* b = dh_up_b.row(t);
            if (m.cfg.fusion == BidirFusion::Concat) {
                for (std::size_t j = 0; j < H; ++j) {
                    f[j] = src[j];
                    b[j] = src[H + j];
                }
            } else {
                for (std::size_t j = 0; j < H; ++j) {
                    f[j] = src[j];
                    b[j] = src[j];
                }
            }
        }

        Tensor dinput = Tensor::zeros({T, I});
        real_scan_backward(m.layers[l].fwd, lt.input, false, lt.dir[0], dh_up_f,
                           grads.layers[l].fwd, dinput);
        if (m.cfg.bidirectional) {
            real_scan_backward(m.layers[l].bwd, lt.input, true, lt.dir[1], dh_up_b,
                               grads.layers[l].bwd, dinput);
        }

        if (l > 0) {
            if (!lt.drop_keep.empty()) {
                for (std::size_t i = 0; i < dinput.size(); ++i)
                    dinput.data[i] = lt.drop_keep[i] ? dinput.data[i] * lt.drop_scale : 0.0;
            }
            dfused = std::move(dinput);
        }
    }
    return sm.loss;
}

// ---------------------------------------------------------------------------
// Batched forward/backward with per-item gradient buffers reduced in item
// order, so results do not depend on the worker count.

namespace {

template <typename Model, typename Example, typename BackwardFn>
BatchResult batch_backward_impl(const Model& m, const std::vector<const Example*>& batch,
                                const std::function<std::uint64_t(std::size_t)>& seed_fn,
                                Model& grads, int threads, BackwardFn&& bwd) {
    if (batch.empty()) throw std::invalid_argument("batch_backward: empty batch");
    std::size_t total_frames = 0;
    for (const Example* e : batch) total_frames += e->labels.size();

    std::vector<Model> item_grads;
    item_grads.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) item_grads.push_back(Model::zeros_like(m));
    std::vector<double> item_loss(batch.size(), 0.0);

    auto work = [&](std::size_t i) {
        const Example& ex = *batch[i];
        const double scale =
            static_cast<double>(ex.labels.size()) / static_cast<double>(total_frames);
        std::mt19937_64 rng(seed_fn(i));
        item_loss[i] = bwd(ex, rng, scale, item_grads[i]);
    };

    const int workers =
        std::max(1, std::min<int>(threads, static_cast<int>(batch.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < batch.size(); ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w]() {
                for (std::size_t i = static_cast<std::size_t>(w); i < batch.size();
                     i += static_cast<std::size_t>(workers))
                    work(i);
            });
        }
        for (auto& th : pool) th.join();
    }

    std::vector<ParamRef> dst;
    visit_params(grads, [&](const ParamRef& p) { dst.push_back(p); });
    BatchResult res;
    res.frames = total_frames;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::vector<ParamRef> src;
        visit_params(item_grads[i], [&](const ParamRef& p) { src.push_back(p); });
        for (std::size_t a = 0; a < dst.size(); ++a)
            for (std::size_t j = 0; j < dst[a].size; ++j) dst[a].data[j] += src[a].data[j];
        res.loss += item_loss[i] * static_cast<double>(batch[i]->labels.size()) /
                    static_cast<double>(total_frames);
    }
    return res;
}

}  // namespace

BatchResult qlstm_batch_backward(const QLSTMModel& m,
                                 const std::vector<const QSequenceExample*>& batch,
                                 const std::function<std::uint64_t(std::size_t)>& seed_fn,
                                 bool training, QLSTMModel& grads, int threads) {
    return batch_backward_impl<QLSTMModel, QSequenceExample>(
        m, batch, seed_fn, grads, threads,
        [&](const QSequenceExample& ex, std::mt19937_64& rng, double scale,
            QLSTMModel& g) -> double {
            QForwardTrace trace;
            qlstm_sequence_forward(m, ex.frames, training, &rng, &trace);
            return qlstm_backward(m, trace, ex.labels, scale, g);
        });
}

BatchResult real_batch_backward(const RealLSTMModel& m,
                                const std::vector<const RSequenceExample*>& batch,
                                const std::function<std::uint64_t(std::size_t)>& seed_fn,
                                bool training, RealLSTMModel& grads, int threads) {
    return batch_backward_impl<RealLSTMModel, RSequenceExample>(
        m, batch, seed_fn, grads, threads,
        [&](const RSequenceExample& ex, std::mt19937_64& rng, double scale,
            RealLSTMModel& g) -> double {
            RForwardTrace trace;
            real_lstm_forward(m, ex.frames, training, &rng, &trace);
            return real_lstm_backward(m, trace, ex.labels, scale, g);
        });
}

// ---------------------------------------------------------------------------
// Gradient checks.

GradCheckReport grad_check_qlstm(QLSTMModel& model, const std::vector<QSequenceExample>& batch,
                                 double tolerance, double step, std::uint64_t dropout_seed) {
    std::vector<const QSequenceExample*> ptrs;
    for (const auto& e : batch) ptrs.push_back(&e);
    auto seed_fn = [&](std::size_t i) { return derive_seed(dropout_seed, 0xD0, i); };
    const bool training = model.cfg.dropout_rate > 0.0;

    QLSTMModel analytic = QLSTMModel::zeros_like(model);
    qlstm_batch_backward(model, ptrs, seed_fn, training, analytic, 1);

    auto loss_fn = [&]() -> double {
        double total = 0.0;
        std::size_t frames = 0;
        for (std::size_t i = 0; i < ptrs.size(); ++i) {
            std::mt19937_64 rng(seed_fn(i));
            Tensor logits = qlstm_sequence_forward(model, ptrs[i]->frames, training, &rng);
            total += softmax_cross_entropy(logits, ptrs[i]->labels).loss *
                     static_cast<double>(ptrs[i]->labels.size());
            frames += ptrs[i]->labels.size();
        }
        return total / static_cast<double>(frames);
    };
    return compare_gradients(model, analytic, loss_fn, tolerance, step);
}

GradCheckReport grad_check_lstm(RealLSTMModel& model, const std::vector<RSequenceExample>& batch,
                                double tolerance, double step, std::uint64_t dropout_seed) {
    std::vector<const RSequenceExample*> ptrs;
    for (const auto& e : batch) ptrs.push_back(&e);
    auto seed_fn = [&](std::size_t i) { return derive_seed(dropout_seed, 0xD0, i); };
    const bool training = model.cfg.dropout_rate > 0.0;

    RealLSTMModel analytic = RealLSTMModel::zeros_like(model);
    real_batch_backward(model, ptrs, seed_fn, training, analytic, 1);

    auto loss_fn = [&]() -> double {
        double total = 0.0;
        std::size_t frames = 0;
        for (std::size_t i = 0; i < ptrs.size(); ++i) {
            std::mt19937_64 rng(seed_fn(i));
            Tensor logits = real_lstm_forward(model, ptrs[i]->frames, training, &rng);
            total += softmax_cross_entropy(logits, ptrs[i]->labels).loss *
                     static_cast<double>(ptrs[i]->labels.size());
            frames += ptrs[i]->labels.size();
        }
        return total / static_cast<double>(frames);
    };
    return compare_gradients(model, analytic, loss_fn, tolerance, step);
}

// ---------------------------------------------------------------------------
// Evaluation.

namespace {

template <typename Model, typename Example, typename InferFn>
EvalResult evaluate_impl(const Model& m, const std::vector<Example>& items, InferFn&& infer) {
    EvalResult res;
    const std::size_t K = m.cfg.num_classes;
    res.confusion.assign(K * K, 0);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const Example& ex : items) {
        Tensor logits = infer(ex);
        const SoftmaxResult sm = softmax_cross_entropy(logits, ex.labels);
        loss_sum += sm.loss * static_cast<double>(ex.labels.size());
        for (std::size_t t = 0; t < ex.labels.size(); ++t) {
            const double* row = logits.row(t);
            std::size_t arg = 0;
            for (std::size_t k = 1; k < K; ++k)
                if (row[k] > row[arg]) arg = k;
            if (static_cast<int>(arg) == ex.labels[t]) ++correct;
            res.confusion[static_cast<std::size_t>(ex.labels[t]) * K + arg] += 1;
        }
        res.frames += ex.labels.size();
    }
    if (res.frames == 0) throw std::invalid_argument("evaluate: no frames");
    res.loss = loss_sum / static_cast<double>(res.frames);
    res.frame_accuracy = static_cast<double>(correct) / static_cast<double>(res.frames);
    return res;
}

}  // namespace

EvalResult evaluate_qlstm(const QLSTMModel& m, const std::vector<QSequenceExample>& items) {
    return evaluate_impl(m, items, [&](const QSequenceExample& ex) {
        return qlstm_sequence_forward(m, ex.frames, false);
    });
}

EvalResult evaluate_lstm(const RealLSTMModel& m, const std::vector<RSequenceExample>& items) {
    return evaluate_impl(m, items, [&](const RSequenceExample& ex) {
        return real_lstm_forward(m, ex.frames, false);
    });
}

// ---------------------------------------------------------------------------
// Training loop.

namespace {

template <typename Model, typename Example, typename BatchFn, typename EvalFn>
TrainOutput<Model> train_impl(Model& model, const std::vector<Example>& train,
                              const std::vector<Example>& valid, const TrainLoopConfig& cfg,
                              const TrainingState* resume, const EpochCallback& on_epoch,
                              BatchFn&& batch_fn, EvalFn&& eval_fn) {
    if (train.empty() || valid.empty()) {
        throw std::invalid_argument("train_loop: empty train or validation split");
    }
    if (cfg.batch_size == 0) throw std::invalid_argument("train_loop: batch_size must be > 0");
    if (cfg.epochs < 0) throw std::invalid_argument("train_loop: negative epoch count");

    TrainOutput<Model> out;
    if (resume) {
        out.state = *resume;
    } else {
        out.state.opt = OptimizerState::make(model, cfg.initial_lr);
        out.state.opt.decay = cfg.rmsprop_decay;
        out.state.opt.epsilon = cfg.rmsprop_epsilon;
        out.state.sched.initial_lr = cfg.initial_lr;
        out.state.sched.current_lr = cfg.initial_lr;
    }
    out.best_model = model;

    for (int epoch = out.state.next_epoch; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr_used = out.state.sched.current_lr;
        out.state.opt.learning_rate = lr_used;

        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0xE10C, static_cast<std::uint64_t>(epoch)));
        shuffle(order, shuffle_rng);

        double loss_sum = 0.0;
        std::size_t frame_sum = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const Example*> batch;
            std::vector<std::size_t> ids;
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(&train[order[i]]);
                ids.push_back(order[i]);
            }
            auto seed_fn = [&](std::size_t i) {
                return derive_seed(cfg.seed, 0xD407 + static_cast<std::uint64_t>(epoch),
                                   ids[i]);
            };
            Model grads = Model::zeros_like(model);
            const BatchResult br = batch_fn(model, batch, seed_fn, grads);
            clip_global_norm(grads, cfg.clip_norm);
            rmsprop_step(out.state.opt, model, grads);
            loss_sum += br.loss * static_cast<double>(br.frames);
            frame_sum += br.frames;
        }

        const EvalResult ev = eval_fn(model, valid);
        out.state.sched.step(ev.loss);
        if (ev.loss < out.state.best_val_loss) {
            out.state.best_val_loss = ev.loss;
            out.state.best_val_accuracy = ev.frame_accuracy;
            out.state.best_epoch = epoch;
            out.best_model = model;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr_used;
        rec.train_loss = loss_sum / static_cast<double>(frame_sum);
        rec.val_loss = ev.loss;
        rec.val_frame_accuracy = ev.frame_accuracy;
        rec.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
        out.state.next_epoch = epoch + 1;
    }
    return out;
}

}  // namespace

TrainOutput<QLSTMModel> train_qlstm(QLSTMModel& model,
                                    const std::vector<QSequenceExample>& train,
                                    const std::vector<QSequenceExample>& valid,
                                    const TrainLoopConfig& cfg, const TrainingState* resume,
                                    const EpochCallback& on_epoch) {
    return train_impl(
        model, train, valid, cfg, resume, on_epoch,
        [&](const QLSTMModel& m, const std::vector<const QSequenceExample*>& batch,
            const std::function<std::uint64_t(std::size_t)>& seed_fn, QLSTMModel& grads) {
            return qlstm_batch_backward(m, batch, seed_fn, true, grads, cfg.threads);
        },
        [](const QLSTMModel& m, const std::vector<QSequenceExample>& v) {
            return evaluate_qlstm(m, v);
        });
}

TrainOutput<RealLSTMModel> train_lstm(RealLSTMModel& model,
                                      const std::vector<RSequenceExample>& train,
                                      const std::vector<RSequenceExample>& valid,
                                      const TrainLoopConfig& cfg, const TrainingState* resume,
                                      const EpochCallback& on_epoch) {
    return train_impl(
        model, train, valid, cfg, resume, on_epoch,
        [&](const RealLSTMModel& m, const std::vector<const RSequenceExample*>& batch,
            const std::function<std::uint64_t(std::size_t)>& seed_fn, RealLSTMModel& grads) {
            return real_batch_backward(m, batch, seed_fn, true, grads, cfg.threads);
        },
        [](const RealLSTMModel& m, const std::vector<RSequenceExample>& v) {
            return evaluate_lstm(m, v);
        });
}

}  // namespace quatnn
