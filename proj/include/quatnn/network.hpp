#pragma once

// The QLSTM cell and multi-layer bidirectional stacks, the parameter-matched
// real LSTM baseline, whole-quaternion dropout, and the real-valued softmax
// output head.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "quatnn/layers.hpp"
#include "quatnn/qtensor.hpp"
#include "quatnn/tensor.hpp"

namespace quatnn {

// Whether gate-by-state products multiply componentwise per plane (default;
// keeps every gate component acting as a (0,1) gain) or as elementwise
// Hamilton products (literal reading, kept behind this switch for study).
enum class GateProduct { Componentwise, Hamilton };

// How forward and backward hidden sequences combine before feeding the next
// layer (and the head): feature concatenation or elementwise sum.
enum class BidirFusion { Concat, Sum };

struct NetworkConfig {
    std::size_t num_layers{4};
    std::size_t hidden{128};  // quaternion units for QLSTM, real units for LSTM
    bool bidirectional{true};
    double dropout_rate{0.2};
    std::size_t num_classes{0};
    GateProduct gate_product{GateProduct::Componentwise};
    BidirFusion fusion{BidirFusion::Concat};

    std::size_t directions() const { return bidirectional ? 2 : 1; }
    // Fused sequence width in the model's own units (quaternion or real).
    std::size_t fused_width() const {
        return (bidirectional && fusion == BidirFusion::Concat) ? 2 * hidden : hidden;
    }
};

// ---------------------------------------------------------------------------
// QLSTM

// One direction of one layer: the eight weight matrices and four biases of
// the gate equations. Hidden-side matrices are [H, H], input-side [H, I],
// biases [H], all in quaternion units.
struct QLSTMParams {
    QuaternionTensor W_fh, W_fx, W_ih, W_ix, W_ch, W_cx, W_oh, W_ox;
    QuaternionTensor b_f, b_i, b_c, b_o;

    std::size_t hidden() const { return W_fh.shape()[0]; }
    std::size_t input() const { return W_fx.shape()[1]; }

    static QLSTMParams zeros(std::size_t hidden, std::size_t input);
    static QLSTMParams init(std::size_t hidden, std::size_t input, std::uint64_t seed);
};

void visit_params(QLSTMParams& p, const ParamVisitor& fn, const std::string& prefix = "");

struct QLSTMState {
    QuaternionTensor h;  // [H]
    QuaternionTensor C;  // [H]

    static QLSTMState zeros(std::size_t hidden);
};

// Single recurrence step:
//   f = sigma(W_fh*h + W_fx*x + b_f)    (split sigmoid, * = blockwise Hamilton)
//   i, o likewise; cbar = tanh(W_ch*h + W_cx*x + b_c)
//   C' = g(f, C) + g(i, cbar);  h' = g(o, tanh(C'))
// with g the gate product selected by mode.
QLSTMState qlstm_cell_step(const QLSTMParams& p, const QuaternionTensor& x,
                           const QLSTMState& s, GateProduct mode);

// Per-direction activation record over a sequence; every tensor is [T, H]
// and rows are indexed by original time regardless of scan direction.
struct QDirTrace {
    QuaternionTensor f, i, cbar, o, C, tanhC, h;
};

struct QLayerTrace {
    QuaternionTensor input;              // [T, I_l], what the gates consumed
    std::vector<std::uint8_t> drop_keep; // per-quaternion keep mask on this input; empty if no dropout
    double drop_scale{1.0};
    QDirTrace dir[2];
};

struct QForwardTrace {
    std::vector<QLayerTrace> layers;
    Tensor features;  // [T, 4 * fused_width] head input, plane-major
    Tensor logits;    // [T, K]
};

struct QLSTMLayer {
    QLSTMParams fwd, bwd;  // bwd unused when unidirectional
};

struct QLSTMModel {
    NetworkConfig cfg;
    std::size_t input_dim{0};  // quaternion units
    std::vector<QLSTMLayer> layers;
    RealLinear head;

    static QLSTMModel init(const NetworkConfig& cfg, std::size_t input_dim,
                           std::uint64_t seed);
    // Same shapes, all parameters zero; used for gradient accumulators.
    static QLSTMModel zeros_like(const QLSTMModel& m);
};

void visit_params(QLSTMModel& m, const ParamVisitor& fn);

// Full stack forward: per layer a forward and (if bidirectional) a backward
// scan from fresh zero states, fused per the config, inter-layer
// whole-quaternion dropout in training mode, then the real linear head over
// the unpacked fused features. Returns [T, K] logits; fills *trace when
// given (required later for backpropagation).
Tensor qlstm_sequence_forward(const QLSTMModel& m, const QuaternionTensor& frames,
                              bool training, std::mt19937_64* dropout_rng = nullptr,
                              QForwardTrace* trace = nullptr);

// Whole-quaternion dropout over a [T, F] sequence: each quaternion is zeroed
// (all four components jointly) with probability rate, survivors scaled by
// 1/(1-rate). Identity when training is false or rate is 0.
QuaternionTensor quaternion_dropout(const QuaternionTensor& seq, double rate, bool training,
                                    std::mt19937_64& rng,
                                    std::vector<std::uint8_t>* keep_out = nullptr);

// ---------------------------------------------------------------------------
// Real LSTM baseline (standard gate equations, same stacking contract).

struct RealLSTMParams {
    Tensor W_fh, W_fx, W_ih, W_ix, W_ch, W_cx, W_oh, W_ox;
    Tensor b_f, b_i, b_c, b_o;

    std::size_t hidden() const { return W_fh.shape[0]; }
    std::size_t input() const { return W_fx.shape[1]; }

    static RealLSTMParams zeros(std::size_t hidden, std::size_t input);
    static RealLSTMParams init(std::size_t hidden, std::size_t input, std::uint64_t seed);
};

void visit_params(RealLSTMParams& p, const ParamVisitor& fn, const std::string& prefix = "");

struct RealLSTMState {
    Tensor h, C;
    static RealLSTMState zeros(std::size_t hidden);
};

RealLSTMState real_lstm_cell_step(const RealLSTMParams& p, const Tensor& x,
                                  const RealLSTMState& s);

struct RDirTrace {
    Tensor f, i, cbar, o, C, tanhC, h;
};

struct RLayerTrace {
    Tensor input;
    std::vector<std::uint8_t> drop_keep;
    double drop_scale{1.0};
    RDirTrace dir[2];
};

struct RForwardTrace {
    std::vector<RLayerTrace> layers;
    Tensor logits;
};

struct RealLSTMLayer {
    RealLSTMParams fwd, bwd;
};

struct RealLSTMModel {
    NetworkConfig cfg;
    std::size_t input_dim{0};
    std::vector<RealLSTMLayer> layers;
    RealLinear head;

    static RealLSTMModel init(const NetworkConfig& cfg, std::size_t input_dim,
                              std::uint64_t seed);
    static RealLSTMModel zeros_like(const RealLSTMModel& m);
};

void visit_params(RealLSTMModel& m, const ParamVisitor& fn);

Tensor real_lstm_forward(const RealLSTMModel& m, const Tensor& frames, bool training,
                         std::mt19937_64* dropout_rng = nullptr,
                         RForwardTrace* trace = nullptr);

Tensor real_dropout(const Tensor& seq, double rate, bool training, std::mt19937_64& rng,
                    std::vector<std::uint8_t>* keep_out = nullptr);

// ---------------------------------------------------------------------------
// Loss.

struct SoftmaxResult {
    double loss{0.0};
    Tensor posteriors;  // [T, K], rows sum to 1
};

// Mean over frames of -log softmax(logits)[label].
SoftmaxResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Labeled sequence examples, the common currency of training and evaluation.

struct QSequenceExample {
    QuaternionTensor frames;  // [T, F] quaternion units
    std::vector<int> labels;  // [T]
};

struct RSequenceExample {
    Tensor frames;  // [T, D] real
    std::vector<int> labels;
};

}  // namespace quatnn
