#include "quatnn/network.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

#include "quatnn/rng.hpp"

namespace quatnn {

namespace {

void gate_product(GateProduct mode, QView x, QView y, QMutView out) {
    if (mode == GateProduct::Hamilton) {
        qhadamard(x, y, out);
        return;
    }
    for (int k = 0; k < 4; ++k)
        for (std::size_t i = 0; i < out.n; ++i) out.p[k][i] = x.p[k][i] * y.p[k][i];
}

void apply_split(Activation act, QMutView v) {
    for (int k = 0; k < 4; ++k)
        for (std::size_t i = 0; i < v.n; ++i) v.p[k][i] = apply_activation(act, v.p[k][i]);
}

// One gate pre-activation: out = b + W_h * h_prev + W_x * x.
void gate_pre(const QuaternionTensor& w_h, const QuaternionTensor& w_x,
              const QuaternionTensor& b, QView h_prev, QView x, QuaternionTensor& out) {
    auto ob = out.raw();
    const auto bb = b.raw();
    for (std::size_t i = 0; i < ob.size(); ++i) ob[i] = bb[i];
    qmat_vec_acc(w_h, h_prev, mut_view(out));
    qmat_vec_acc(w_x, x, mut_view(out));
}

// Writes one recurrence step into the provided row views.
void qlstm_step_core(const QLSTMParams& p, QView x, QView h_prev, QView C_prev,
                     GateProduct mode, QuaternionTensor scratch[4], QMutView f, QMutView i,
                     QMutView cbar, QMutView o, QMutView C, QMutView tanhC, QMutView h) {
    const std::size_t H = p.hidden();
    gate_pre(p.W_fh, p.W_fx, p.b_f, h_prev, x, scratch[0]);
    gate_pre(p.W_ih, p.W_ix, p.b_i, h_prev, x, scratch[1]);
    gate_pre(p.W_ch, p.W_cx, p.b_c, h_prev, x, scratch[2]);
    gate_pre(p.W_oh, p.W_ox, p.b_o, h_prev, x, scratch[3]);
    apply_split(Activation::Sigmoid, mut_view(scratch[0]));
    apply_split(Activation::Sigmoid, mut_view(scratch[1]));
    apply_split(Activation::Tanh, mut_view(scratch[2]));
    apply_split(Activation::Sigmoid, mut_view(scratch[3]));
    for (int k = 0; k < 4; ++k) {
        for (std::size_t j = 0; j < H; ++j) {
            f.p[k][j] = scratch[0].plane_ptr(k)[j];
            i.p[k][j] = scratch[1].plane_ptr(k)[j];
            cbar.p[k][j] = scratch[2].plane_ptr(k)[j];
            o.p[k][j] = scratch[3].plane_ptr(k)[j];
        }
    }
    // C = g(f, C_prev) + g(i, cbar)
    QuaternionTensor t1 = QuaternionTensor::zeros({H});
    QuaternionTensor t2 = QuaternionTensor::zeros({H});
    gate_product(mode, {f.p[0], f.p[1], f.p[2], f.p[3], H}, C_prev, mut_view(t1));
    gate_product(mode, {i.p[0], i.p[1], i.p[2], i.p[3], H},
                 {cbar.p[0], cbar.p[1], cbar.p[2], cbar.p[3], H}, mut_view(t2));
    for (int k = 0; k < 4; ++k)
        for (std::size_t j = 0; j < H; ++j) C.p[k][j] = t1.plane_ptr(k)[j] + t2.plane_ptr(k)[j];
    for (int k = 0; k < 4; ++k)
        for (std::size_t j = 0; j < H; ++j) tanhC.p[k][j] = std::tanh(C.p[k][j]);
    gate_product(mode, {o.p[0], o.p[1], o.p[2], o.p[3], H},
                 {tanhC.p[0], tanhC.p[1], tanhC.p[2], tanhC.p[3], H}, h);
#ifndef NDEBUG
    for (int k = 0; k < 4; ++k)
        for (std::size_t j = 0; j < H; ++j)
            assert(std::isfinite(h.p[k][j]) && std::isfinite(C.p[k][j]) &&
                   "qlstm state blew up");
#endif
}

QDirTrace make_qdir_trace(std::size_t T, std::size_t H) {
    QDirTrace tr;
    tr.f = QuaternionTensor::zeros({T, H});
    tr.i = QuaternionTensor::zeros({T, H});
    tr.cbar = QuaternionTensor::zeros({T, H});
    tr.o = QuaternionTensor::zeros({T, H});
    tr.C = QuaternionTensor::zeros({T, H});
    tr.tanhC = QuaternionTensor::zeros({T, H});
    tr.h = QuaternionTensor::zeros({T, H});
    return tr;
}

// Scans a whole sequence in one direction from zero states. Trace rows are
// indexed by original time.
void qlstm_scan(const QLSTMParams& p, const QuaternionTensor& input, bool reverse,
                GateProduct mode, QDirTrace& tr) {
    const std::size_t T = input.shape()[0];
    const std::size_t H = p.hidden();
    QuaternionTensor scratch[4] = {
        QuaternionTensor::zeros({H}), QuaternionTensor::zeros({H}),
        QuaternionTensor::zeros({H}), QuaternionTensor::zeros({H})};
    QuaternionTensor zero_state = QuaternionTensor::zeros({H});
    for (std::size_t s = 0; s < T; ++s) {
        const std::size_t t = reverse ? T - 1 - s : s;
        QView h_prev = s == 0 ? view(zero_state) : row_view(tr.h, reverse ? t + 1 : t - 1);
        QView C_prev = s == 0 ? view(zero_state) : row_view(tr.C, reverse ? t + 1 : t - 1);
        qlstm_step_core(p, row_view(input, t), h_prev, C_prev, mode, scratch,
                        mut_row_view(tr.f, t), mut_row_view(tr.i, t),
                        mut_row_view(tr.cbar, t), mut_row_view(tr.o, t),
                        mut_row_view(tr.C, t), mut_row_view(tr.tanhC, t),
                        mut_row_view(tr.h, t));
    }
}

// Fuses the direction hidden sequences of one layer into [T, fused_width].
QuaternionTensor fuse_directions(const NetworkConfig& cfg, const QDirTrace dir[2],
                                 std::size_t T) {
    const std::size_t H = cfg.hidden;
    QuaternionTensor out = QuaternionTensor::zeros({T, cfg.fused_width()});
    for (std::size_t t = 0; t < T; ++t) {
        QMutView dst = mut_row_view(out, t);
        QView fw = row_view(dir[0].h, t);
        if (!cfg.bidirectional) {
            for (int k = 0; k < 4; ++k)
                for (std::size_t j = 0; j < H; ++j) dst.p[k][j] = fw.p[k][j];
            continue;
        }
        QView bw = row_view(dir[1].h, t);
        if (cfg.fusion == BidirFusion::Concat) {
            for (int k = 0; k < 4; ++k) {
                for (std::size_t j = 0; j < H; ++j) {
                    dst.p[k][j] = fw.p[k][j];
                    dst.p[k][H + j] = bw.p[k][j];
                }
            }
        } else {
            for (int k = 0; k < 4; ++k)
                for (std::size_t j = 0; j < H; ++j) dst.p[k][j] = fw.p[k][j] + bw.p[k][j];
        }
    }
    return out;
}

}  // namespace

QLSTMParams QLSTMParams::zeros(std::size_t hidden, std::size_t input) {
    QLSTMParams p;
    p.W_fh = QuaternionTensor::zeros({hidden, hidden});
    p.W_ih = QuaternionTensor::zeros({hidden, hidden});
    p.W_ch = QuaternionTensor::zeros({hidden, hidden});
    p.W_oh = QuaternionTensor::zeros({hidden, hidden});
    p.W_fx = QuaternionTensor::zeros({hidden, input});
    p.W_ix = QuaternionTensor::zeros({hidden, input});
    p.W_cx = QuaternionTensor::zeros({hidden, input});
    p.W_ox = QuaternionTensor::zeros({hidden, input});
    p.b_f = QuaternionTensor::zeros({hidden});
    p.b_i = QuaternionTensor::zeros({hidden});
    p.b_c = QuaternionTensor::zeros({hidden});
    p.b_o = QuaternionTensor::zeros({hidden});
    return p;
}

QLSTMParams QLSTMParams::init(std::size_t hidden, std::size_t input, std::uint64_t seed) {
    QLSTMParams p = zeros(hidden, input);
    InitSpec spec;
    spec.criterion = InitCriterion::Glorot;
    int tag = 0;
    for (QuaternionTensor* w : {&p.W_fh, &p.W_ih, &p.W_ch, &p.W_oh}) {
        spec.seed = derive_seed(seed, 100 + tag++);
        spec.fan_in = hidden;
        spec.fan_out = hidden;
        quaternion_init(spec, *w);
    }
    for (QuaternionTensor* w : {&p.W_fx, &p.W_ix, &p.W_cx, &p.W_ox}) {
        spec.seed = derive_seed(seed, 200 + tag++);
        spec.fan_in = input;
        spec.fan_out = hidden;
        quaternion_init(spec, *w);
    }
    return p;
}

void visit_params(QLSTMParams& p, const ParamVisitor& fn, const std::string& prefix) {
    visit_tensor(prefix + "W_fh", p.W_fh, fn);
    visit_tensor(prefix + "W_fx", p.W_fx, fn);
    visit_tensor(prefix + "b_f", p.b_f, fn);
    visit_tensor(prefix + "W_ih", p.W_ih, fn);
    visit_tensor(prefix + "W_ix", p.W_ix, fn);
    visit_tensor(prefix + "b_i", p.b_i, fn);
    visit_tensor(prefix + "W_ch", p.W_ch, fn);
    visit_tensor(prefix + "W_cx", p.W_cx, fn);
    visit_tensor(prefix + "b_c", p.b_c, fn);
    visit_tensor(prefix + "W_oh", p.W_oh, fn);
    visit_tensor(prefix + "W_ox", p.W_ox, fn);
    visit_tensor(prefix + "b_o", p.b_o, fn);
}

QLSTMState QLSTMState::zeros(std::size_t hidden) {
    return {QuaternionTensor::zeros({hidden}), QuaternionTensor::zeros({hidden})};
}

QLSTMState qlstm_cell_step(const QLSTMParams& p, const QuaternionTensor& x,
                           const QLSTMState& s, GateProduct mode) {
    if (x.shape().back() != p.input()) {
        throw std::invalid_argument("qlstm_cell_step: input has " +
                                    std::to_string(x.shape().back()) + " units, cell expects " +
                                    std::to_string(p.input()));
    }
    const std::size_t H = p.hidden();
    QuaternionTensor scratch[4] = {
        QuaternionTensor::zeros({H}), QuaternionTensor::zeros({H}),
        QuaternionTensor::zeros({H}), QuaternionTensor::zeros({H})};
    QuaternionTensor f = QuaternionTensor::zeros({H}), i = f, cbar = f, o = f, tanhC = f;
    QLSTMState next = QLSTMState::zeros(H);
    qlstm_step_core(p, view(x), view(s.h), view(s.C), mode, scratch, mut_view(f), mut_view(i),
                    mut_view(cbar), mut_view(o), mut_view(next.C), mut_view(tanhC),
                    mut_view(next.h));
    return next;
}

QLSTMModel QLSTMModel::init(const NetworkConfig& cfg, std::size_t input_dim,
                            std::uint64_t seed) {
    if (cfg.num_layers == 0 || cfg.hidden == 0 || input_dim == 0 || cfg.num_classes == 0) {
        throw std::invalid_argument("qlstm model: layers, hidden, input and classes must be positive");
    }
    QLSTMModel m;
    m.cfg = cfg;
    m.input_dim = input_dim;
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        QLSTMLayer layer;
        layer.fwd = QLSTMParams::init(cfg.hidden, in, derive_seed(seed, l, 0));
        if (cfg.bidirectional) {
            layer.bwd = QLSTMParams::init(cfg.hidden, in, derive_seed(seed, l, 1));
        }
        m.layers.push_back(std::move(layer));
        in = cfg.fused_width();
    }
    m.head = glorot_init_linear(cfg.num_classes, 4 * cfg.fused_width(),
                                derive_seed(seed, 999, 7));
    return m;
}

QLSTMModel QLSTMModel::zeros_like(const QLSTMModel& src) {
    QLSTMModel m;
    m.cfg = src.cfg;
    m.input_dim = src.input_dim;
    std::size_t in = src.input_dim;
    for (std::size_t l = 0; l < src.cfg.num_layers; ++l) {
        QLSTMLayer layer;
        layer.fwd = QLSTMParams::zeros(src.cfg.hidden, in);
        if (src.cfg.bidirectional) layer.bwd = QLSTMParams::zeros(src.cfg.hidden, in);
        m.layers.push_back(std::move(layer));
        in = src.cfg.fused_width();
    }
    m.head.weights = Tensor::zeros(src.head.weights.shape);
    m.head.bias = Tensor::zeros(src.head.bias.shape);
    m.head.has_bias = src.head.has_bias;
    return m;
}

void visit_params(QLSTMModel& m, const ParamVisitor& fn) {
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const std::string base = "layer" + std::to_string(l) + ".";
        visit_params(m.layers[l].fwd, fn, base + "fwd.");
        if (m.cfg.bidirectional) visit_params(m.layers[l].bwd, fn, base + "bwd.");
    }
    visit_params(m.head, fn, "head.");
}

QuaternionTensor quaternion_dropout(const QuaternionTensor& seq, double rate, bool training,
                                    std::mt19937_64& rng, std::vector<std::uint8_t>* keep_out) {
    if (rate < 0.0 || rate >= 1.0) {
        throw std::invalid_argument("dropout rate must be in [0, 1)");
    }
    if (!training || rate == 0.0) {
        if (keep_out) keep_out->clear();
        return seq;
    }
    QuaternionTensor out = QuaternionTensor::zeros(seq.shape());
    const double scale = 1.0 / (1.0 - rate);
    std::vector<std::uint8_t> keep(seq.plane_size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = uniform01(rng) >= rate ? 1 : 0;
    for (int k = 0; k < 4; ++k) {
        const double* src = seq.plane_ptr(k);
        double* dst = out.plane_ptr(k);
        for (std::size_t i = 0; i < keep.size(); ++i) dst[i] = keep[i] ? src[i] * scale : 0.0;
    }
    if (keep_out) *keep_out = std::move(keep);
    return out;
}

Tensor qlstm_sequence_forward(const QLSTMModel& m, const QuaternionTensor& frames,
                              bool training, std::mt19937_64* dropout_rng,
                              QForwardTrace* trace) {
    if (frames.shape().size() != 2 || frames.shape()[0] == 0) {
        throw std::invalid_argument("qlstm forward: frames must be a nonempty [T, F] tensor");
    }
    if (frames.shape()[1] != m.input_dim) {
        throw std::invalid_argument("qlstm forward: got " + std::to_string(frames.shape()[1]) +
                                    " input units, model expects " +
                                    std::to_string(m.input_dim));
    }
    const std::size_t T = frames.shape()[0];
    const bool want_dropout = training && m.cfg.dropout_rate > 0.0;
    if (want_dropout && dropout_rng == nullptr) {
        throw std::invalid_argument("qlstm forward: training with dropout needs an rng");
    }
    QForwardTrace local;
    QForwardTrace& tr = trace ? *trace : local;
    tr.layers.clear();
    tr.layers.resize(m.layers.size());

    QuaternionTensor current = frames;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        QLayerTrace& lt = tr.layers[l];
        if (l > 0 && want_dropout) {
            lt.drop_scale = 1.0 / (1.0 - m.cfg.dropout_rate);
            current = quaternion_dropout(current, m.cfg.dropout_rate, true, *dropout_rng,
                                         &lt.drop_keep);
        }
        lt.input = current;
        lt.dir[0] = make_qdir_trace(T, m.cfg.hidden);
        qlstm_scan(m.layers[l].fwd, lt.input, false, m.cfg.gate_product, lt.dir[0]);
        if (m.cfg.bidirectional) {
            lt.dir[1] = make_qdir_trace(T, m.cfg.hidden);
            qlstm_scan(m.layers[l].bwd, lt.input, true, m.cfg.gate_product, lt.dir[1]);
        }
        current = fuse_directions(m.cfg, lt.dir, T);
    }

    // Unpack fused hidden features plane-major: [a(0..D-1), b, c, d] per frame.
    const std::size_t D = m.cfg.fused_width();
    tr.features = Tensor::zeros({T, 4 * D});
    for (std::size_t t = 0; t < T; ++t) {
        QView src = row_view(current, t);
        double* dst = tr.features.row(t);
        for (int k = 0; k < 4; ++k)
            for (std::size_t j = 0; j < D; ++j) dst[k * D + j] = src.p[k][j];
    }
    tr.logits = Tensor::zeros({T, m.cfg.num_classes});
    for (std::size_t t = 0; t < T; ++t) {
        std::span<const double> x{tr.features.row(t), 4 * D};
        std::span<double> y{tr.logits.row(t), m.cfg.num_classes};
        mat_vec_acc(m.head.weights, x, y);
        if (m.head.has_bias)
            for (std::size_t k = 0; k < y.size(); ++k) y[k] += m.head.bias.data[k];
    }
    return tr.logits;
}

// ---------------------------------------------------------------------------
// Real LSTM

namespace {

void real_gate_pre(const Tensor& w_h, const Tensor& w_x, const Tensor& b,
                   std::span<const double> h_prev, std::span<const double> x, Tensor& out) {
    out.data = b.data;
    mat_vec_acc(w_h, h_prev, {out.data.data(), out.data.size()});
    mat_vec_acc(w_x, x, {out.data.data(), out.data.size()});
}

void real_step_core(const RealLSTMParams& p, std::span<const double> x,
                    std::span<const double> h_prev, std::span<const double> C_prev,
                    double* f, double* i, double* cbar, double* o, double* C, double* tanhC,
                    double* h) {
    const std::size_t H = p.hidden();
    Tensor pf = Tensor::zeros({H}), pi = pf, pc = pf, po = pf;
    real_gate_pre(p.W_fh, p.W_fx, p.b_f, h_prev, x, pf);
    real_gate_pre(p.W_ih, p.W_ix, p.b_i, h_prev, x, pi);
    real_gate_pre(p.W_ch, p.W_cx, p.b_c, h_prev, x, pc);
    real_gate_pre(p.W_oh, p.W_ox, p.b_o, h_prev, x, po);
    for (std::size_t j = 0; j < H; ++j) {
        f[j] = sigmoid(pf.data[j]);
        i[j] = sigmoid(pi.data[j]);
        cbar[j] = std::tanh(pc.data[j]);
        o[j] = sigmoid(po.data[j]);
        C[j] = f[j] * C_prev[j] + i[j] * cbar[j];
        tanhC[j] = std::tanh(C[j]);
        h[j] = o[j] * tanhC[j];
#ifndef NDEBUG
        assert(std::isfinite(h[j]) && std::isfinite(C[j]) && "lstm state blew up");
#endif
    }
}

RDirTrace make_rdir_trace(std::size_t T, std::size_t H) {
    RDirTrace tr;
    for (Tensor* t : {&tr.f, &tr.i, &tr.cbar, &tr.o, &tr.C, &tr.tanhC, &tr.h})
        *t = Tensor::zeros({T, H});
    return tr;
}

void real_scan(const RealLSTMParams& p, const Tensor& input, bool reverse, RDirTrace& tr) {
    const std::size_t T = input.shape[0];
    const std::size_t H = p.hidden();
    const std::size_t I = input.shape[1];
    Tensor zero_state = Tensor::zeros({H});
    for (std::size_t s = 0; s < T; ++s) {
        const std::size_t t = reverse ? T - 1 - s : s;
        const std::size_t tp = reverse ? t + 1 : t - 1;
        std::span<const double> h_prev =
            s == 0 ? std::span<const double>{zero_state.data.data(), H}
                   : std::span<const double>{tr.h.row(tp), H};
        std::span<const double> C_prev =
            s == 0 ? std::span<const double>{zero_state.data.data(), H}
                   : std::span<const double>{tr.C.row(tp), H};
        real_step_core(p, {input.row(t), I}, h_prev, C_prev, tr.f.row(t), tr.i.row(t),
                       tr.cbar.row(t), tr.o.row(t), tr.C.row(t), tr.tanhC.row(t), tr.h.row(t));
    }
}

Tensor real_fuse(const NetworkConfig& cfg, const RDirTrace dir[2], std::size_t T) {
    const std::size_t H = cfg.hidden;
    Tensor out = Tensor::zeros({T, cfg.fused_width()});
    for (std::size_t t = 0; t < T; ++t) {
        double* dst = out.row(t);
        const double* fw = dir[0].h.row(t);
        if (!cfg.bidirectional) {
            for (std::size_t j = 0; j < H; ++j) dst[j] = fw[j];
            continue;
        }
        const double* bw = dir[1].h.row(t);
        if (cfg.fusion == BidirFusion::Concat) {
            for (std::size_t j = 0; j < H; ++j) {
                dst[j] = fw[j];
                dst[H + j] = bw[j];
            }
        } else {
            for (std::size_t j = 0; j < H; ++j) dst[j] = fw[j] + bw[j];
        }
    }
    return out;
}

}  // namespace

RealLSTMParams RealLSTMParams::zeros(std::size_t hidden, std::size_t input) {
    RealLSTMParams p;
    for (Tensor* t : {&p.W_fh, &p.W_ih, &p.W_ch, &p.W_oh}) *t = Tensor::zeros({hidden, hidden});
    for (Tensor* t : {&p.W_fx, &p.W_ix, &p.W_cx, &p.W_ox}) *t = Tensor::zeros({hidden, input});
    for (Tensor* t : {&p.b_f, &p.b_i, &p.b_c, &p.b_o}) *t = Tensor::zeros({hidden});
    return p;
}

RealLSTMParams RealLSTMParams::init(std::size_t hidden, std::size_t input,
                                    std::uint64_t seed) {
    RealLSTMParams p = zeros(hidden, input);
    int tag = 0;
    for (Tensor* t : {&p.W_fh, &p.W_ih, &p.W_ch, &p.W_oh})
        glorot_init(*t, hidden, hidden, derive_seed(seed, 300 + tag++));
    for (Tensor* t : {&p.W_fx, &p.W_ix, &p.W_cx, &p.W_ox})
        glorot_init(*t, input, hidden, derive_seed(seed, 400 + tag++));
    return p;
}

void visit_params(RealLSTMParams& p, const ParamVisitor& fn, const std::string& prefix) {
    visit_tensor(prefix + "W_fh", p.W_fh, fn);
    visit_tensor(prefix + "W_fx", p.W_fx, fn);
    visit_tensor(prefix + "b_f", p.b_f, fn);
    visit_tensor(prefix + "W_ih", p.W_ih, fn);
    visit_tensor(prefix + "W_ix", p.W_ix, fn);
    visit_tensor(prefix + "b_i", p.b_i, fn);
    visit_tensor(prefix + "W_ch", p.W_ch, fn);
    visit_tensor(prefix + "W_cx", p.W_cx, fn);
    visit_tensor(prefix + "b_c", p.b_c, fn);
    visit_tensor(prefix + "W_oh", p.W_oh, fn);
    visit_tensor(prefix + "W_ox", p.W_ox, fn);
    visit_tensor(prefix + "b_o", p.b_o, fn);
}

RealLSTMState RealLSTMState::zeros(std::size_t hidden) {
    return {Tensor::zeros({hidden}), Tensor::zeros({hidden})};
}

RealLSTMState real_lstm_cell_step(const RealLSTMParams& p, const Tensor& x,
                                  const RealLSTMState& s) {
    if (x.size() != p.input()) {
        throw std::invalid_argument("lstm_cell_step: input has " + std::to_string(x.size()) +
                                    " units, cell expects " + std::to_string(p.input()));
    }
    const std::size_t H = p.hidden();
    Tensor f = Tensor::zeros({H}), i = f, cbar = f, o = f, tanhC = f;
    RealLSTMState next = RealLSTMState::zeros(H);
    real_step_core(p, {x.data.data(), x.size()}, {s.h.data.data(), H}, {s.C.data.data(), H},
                   f.data.data(), i.data.data(), cbar.data.data(), o.data.data(),
                   next.C.data.data(), tanhC.data.data(), next.h.data.data());
    return next;
}

RealLSTMModel RealLSTMModel::init(const NetworkConfig& cfg, std::size_t input_dim,
                                  std::uint64_t seed) {
    if (cfg.num_layers == 0 || cfg.hidden == 0 || input_dim == 0 || cfg.num_classes == 0) {
        throw std::invalid_argument("lstm model: layers, hidden, input and classes must be positive");
    }
    RealLSTMModel m;
    m.cfg = cfg;
    m.input_dim = input_dim;
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        RealLSTMLayer layer;
        layer.fwd = RealLSTMParams::init(cfg.hidden, in, derive_seed(seed, l, 10));
        if (cfg.bidirectional) {
            layer.bwd = RealLSTMParams::init(cfg.hidden, in, derive_seed(seed, l, 11));
        }
        m.layers.push_back(std::move(layer));
        in = cfg.fused_width();
    }
    m.head = glorot_init_linear(cfg.num_classes, cfg.fused_width(), derive_seed(seed, 999, 8));
    return m;
}

RealLSTMModel RealLSTMModel::zeros_like(const RealLSTMModel& src) {
    RealLSTMModel m;
    m.cfg = src.cfg;
    m.input_dim = src.input_dim;
    std::size_t in = src.input_dim;
    for (std::size_t l = 0; l < src.cfg.num_layers; ++l) {
        RealLSTMLayer layer;
        layer.fwd = RealLSTMParams::zeros(src.cfg.hidden, in);
        if (src.cfg.bidirectional) layer.bwd = RealLSTMParams::zeros(src.cfg.hidden, in);
        m.layers.push_back(std::move(layer));
        in = src.cfg.fused_width();
    }
    m.head.weights = Tensor::zeros(src.head.weights.shape);
    m.head.bias = Tensor::zeros(src.head.bias.shape);
    m.head.has_bias = src.head.has_bias;
    return m;
}

void visit_params(RealLSTMModel& m, const ParamVisitor& fn) {
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const std::string base = "layer" + std::to_string(l) + ".";
        visit_params(m.layers[l].fwd, fn, base + "fwd.");
        if (m.cfg.bidirectional) visit_params(m.layers[l].bwd, fn, base + "bwd.");
    }
    visit_params(m.head, fn, "head.");
}

Tensor real_dropout(const Tensor& seq, double rate, bool training, std::mt19937_64& rng,
                    std::vector<std::uint8_t>* keep_out) {
    if (rate < 0.0 || rate >= 1.0) {
        throw std::invalid_argument("dropout rate must be in [0, 1)");
    }
    if (!training || rate == 0.0) {
        if (keep_out) keep_out->clear();
        return seq;
    }
    Tensor out = Tensor::zeros(seq.shape);
    const double scale = 1.0 / (1.0 - rate);
    std::vector<std::uint8_t> keep(seq.size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = uniform01(rng) >= rate ? 1 : 0;
    for (std::size_t i = 0; i < keep.size(); ++i)
        out.data[i] = keep[i] ? seq.data[i] * scale : 0.0;
    if (keep_out) *keep_out = std::move(keep);
    return out;
}

Tensor real_lstm_forward(const RealLSTMModel& m, const Tensor& frames, bool training,
                         std::mt19937_64* dropout_rng, RForwardTrace* trace) {
    if (frames.shape.size() != 2 || frames.shape[0] == 0) {
        throw std::invalid_argument("lstm forward: frames must be a nonempty [T, D] tensor");
    }
    if (frames.shape[1] != m.input_dim) {
        throw std::invalid_argument("lstm forward: got " + std::to_string(frames.shape[1]) +
                                    " input units, model expects " + std::to_string(m.input_dim));
    }
    const std::size_t T = frames.shape[0];
    const bool want_dropout = training && m.cfg.dropout_rate > 0.0;
    if (want_dropout && dropout_rng == nullptr) {
        throw std::invalid_argument("lstm forward: training with dropout needs an rng");
    }
    RForwardTrace local;
    RForwardTrace& tr = trace ? *trace : local;
    tr.layers.clear();
    tr.layers.resize(m.layers.size());

    Tensor current = frames;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        RLayerTrace& lt = tr.layers[l];
        if (l > 0 && want_dropout) {
            lt.drop_scale = 1.0 / (1.0 - m.cfg.dropout_rate);
            current = real_dropout(current, m.cfg.dropout_rate, true, *dropout_rng,
                                   &lt.drop_keep);
        }
        lt.input = current;
        lt.dir[0] = make_rdir_trace(T, m.cfg.hidden);
        real_scan(m.layers[l].fwd, lt.input, false, lt.dir[0]);
        if (m.cfg.bidirectional) {
            lt.dir[1] = make_rdir_trace(T, m.cfg.hidden);
            real_scan(m.layers[l].bwd, lt.input, true, lt.dir[1]);
        }
        current = real_fuse(m.cfg, lt.dir, T);
    }

    tr.logits = Tensor::zeros({T, m.cfg.num_classes});
    for (std::size_t t = 0; t < T; ++t) {
        std::span<const double> x{current.row(t), m.cfg.fused_width()};
        std::span<double> y{tr.logits.row(t), m.cfg.num_classes};
        mat_vec_acc(m.head.weights, x, y);
        if (m.head.has_bias)
            for (std::size_t k = 0; k < y.size(); ++k) y[k] += m.head.bias.data[k];
    }
    return tr.logits;
}

SoftmaxResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t T = logits.shape[0], K = logits.shape[1];
    if (labels.size() != T) {
        throw std::invalid_argument("cross entropy: " + std::to_string(labels.size()) +
                                    " labels for " + std::to_string(T) + " frames");
    }
    SoftmaxResult res;
    res.posteriors = Tensor::zeros({T, K});
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        const int y = labels[t];
        if (y < 0 || static_cast<std::size_t>(y) >= K) {
            throw std::invalid_argument("cross entropy: label " + std::to_string(y) +
                                        " out of range [0, " + std::to_string(K) + ")");
        }
        const double* row = logits.row(t);
        double mx = row[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - mx);
        const double logz = std::log(z) + mx;
        double* post = res.posteriors.row(t);
        for (std::size_t k = 0; k < K; ++k) post[k] = std::exp(row[k] - logz);
        total += logz - row[y];
    }
    res.loss = total / static_cast<double>(T);
    return res;
}

}  // namespace quatnn
