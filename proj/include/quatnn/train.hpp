#pragma once

// Backpropagation through time for both stacks, finite-difference gradient
// verification, RMSProp, the validation-driven learning-rate schedule, and
// the training loop.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "quatnn/network.hpp"

namespace quatnn {

// ---------------------------------------------------------------------------
// Backward passes. Gradients of loss_scale * (mean-over-frames cross entropy)
// accumulate into a zeros_like model; the return value is the example's loss
// (unscaled). Every quaternion parameter is differentiated as its four real
// components; the Hamilton product's linear structure gives the plane-wise
// chain rule through conjugated products.

double qlstm_backward(const QLSTMModel& m, const QForwardTrace& trace,
                      const std::vector<int>& labels, double loss_scale, QLSTMModel& grads);

double real_lstm_backward(const RealLSTMModel& m, const RForwardTrace& trace,
                          const std::vector<int>& labels, double loss_scale,
                          RealLSTMModel& grads);

// Forward + backward over a batch: loss is the frame-weighted mean across
// items, gradients match it. dropout_seed_fn supplies a deterministic seed
// per item (item index within the batch order given here).
struct BatchResult {
    double loss{0.0};
    std::size_t frames{0};
};

BatchResult qlstm_batch_backward(const QLSTMModel& m,
                                 const std::vector<const QSequenceExample*>& batch,
                                 const std::function<std::uint64_t(std::size_t)>& dropout_seed_fn,
                                 bool training, QLSTMModel& grads, int threads = 1);

BatchResult real_batch_backward(const RealLSTMModel& m,
                                const std::vector<const RSequenceExample*>& batch,
                                const std::function<std::uint64_t(std::size_t)>& dropout_seed_fn,
                                bool training, RealLSTMModel& grads, int threads = 1);

// ---------------------------------------------------------------------------
// Gradient verification.

struct GradCheckReport {
    double max_rel_error{0.0};
    std::string worst_param;
    std::size_t worst_index{0};
    bool pass{false};
    std::size_t n_params{0};
};

// Central-difference comparison of every scalar parameter against the given
// analytic gradients. loss_fn must re-evaluate the loss with the model's
// current (perturbed) parameters. rel = |ga - gn| / max(|ga|, |gn|, 1e-8).
template <typename Model>
GradCheckReport compare_gradients(Model& model, Model& analytic,
                                  const std::function<double()>& loss_fn, double tolerance,
                                  double step) {
    GradCheckReport rep;
    std::vector<ParamRef> prefs, grefs;
    visit_params(model, [&](const ParamRef& p) { prefs.push_back(p); });
    visit_params(analytic, [&](const ParamRef& p) { grefs.push_back(p); });
    for (std::size_t a = 0; a < prefs.size(); ++a) {
        for (std::size_t j = 0; j < prefs[a].size; ++j) {
            double& v = prefs[a].data[j];
            const double saved = v;
            v = saved + step;
            const double up = loss_fn();
            v = saved - step;
            const double down = loss_fn();
            v = saved;
            const double gn = (up - down) / (2.0 * step);
            const double ga = grefs[a].data[j];
            const double rel =
                std::abs(ga - gn) / std::max({std::abs(ga), std::abs(gn), 1e-8});
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.worst_param = prefs[a].name;
                rep.worst_index = j;
            }
            ++rep.n_params;
        }
    }
    rep.pass = rep.max_rel_error <= tolerance;
    return rep;
}

// Analytic-gradient + finite-difference check over a batch for each model.
GradCheckReport grad_check_qlstm(QLSTMModel& model, const std::vector<QSequenceExample>& batch,
                                 double tolerance, double step, std::uint64_t dropout_seed = 0);
GradCheckReport grad_check_lstm(RealLSTMModel& model, const std::vector<RSequenceExample>& batch,
                                double tolerance, double step, std::uint64_t dropout_seed = 0);

// ---------------------------------------------------------------------------
// Optimizer and schedule.

struct OptimizerState {
    double decay{0.99};
    double epsilon{1e-8};
    double learning_rate{1.6e-3};
    // Running mean-square accumulators, one per parameter array in visit order.
    std::vector<std::vector<double>> acc;

    template <typename Model>
    static OptimizerState make(Model& m, double lr) {
        OptimizerState s;
        s.learning_rate = lr;
        visit_params(m, [&](const ParamRef& p) { s.acc.emplace_back(p.size, 0.0); });
        return s;
    }
};

// acc <- decay * acc + (1 - decay) * g^2;  p <- p - lr * g / (sqrt(acc) + eps).
template <typename Model>
void rmsprop_step(OptimizerState& st, Model& params, Model& grads) {
    std::vector<ParamRef> prefs, grefs;
    visit_params(params, [&](const ParamRef& p) { prefs.push_back(p); });
    visit_params(grads, [&](const ParamRef& p) { grefs.push_back(p); });
    if (prefs.size() != st.acc.size()) {
        throw std::invalid_argument("rmsprop_step: optimizer state has " +
                                    std::to_string(st.acc.size()) + " arrays, model has " +
                                    std::to_string(prefs.size()));
    }
    for (std::size_t a = 0; a < prefs.size(); ++a) {
        if (grefs[a].size != prefs[a].size || st.acc[a].size() != prefs[a].size) {
            throw std::invalid_argument("rmsprop_step: shape mismatch on " + prefs[a].name);
        }
        double* acc = st.acc[a].data();
        double* p = prefs[a].data;
        const double* g = grefs[a].data;
        for (std::size_t j = 0; j < prefs[a].size; ++j) {
            acc[j] = st.decay * acc[j] + (1.0 - st.decay) * g[j] * g[j];
            p[j] -= st.learning_rate * g[j] / (std::sqrt(acc[j]) + st.epsilon);
        }
    }
}

// Scales all gradients so the global L2 norm is at most max_norm. No-op when
// max_norm <= 0. Returns the pre-clip norm.
template <typename Model>
double clip_global_norm(Model& grads, double max_norm) {
    double sq = 0.0;
    visit_params(grads, [&](const ParamRef& p) {
        for (std::size_t j = 0; j < p.size; ++j) sq += p.data[j] * p.data[j];
    });
    const double nrm = std::sqrt(sq);
    if (max_norm > 0.0 && nrm > max_norm) {
        const double s = max_norm / nrm;
        visit_params(grads, [&](const ParamRef& p) {
            for (std::size_t j = 0; j < p.size; ++j) p.data[j] *= s;
        });
    }
    return nrm;
}

// Halve the rate whenever validation loss worsens; current_lr is always
// initial_lr / 2^halvings.
struct LRSchedule {
    double initial_lr{1.6e-3};
    double current_lr{1.6e-3};
    std::optional<double> prev_val_loss;
    int halvings{0};

    void step(double epoch_val_loss) {
        if (prev_val_loss.has_value() && epoch_val_loss > *prev_val_loss) {
            current_lr *= 0.5;
            ++halvings;
        }
        prev_val_loss = epoch_val_loss;
    }
};

// ---------------------------------------------------------------------------
// Evaluation and the training loop.

struct EvalResult {
    double loss{0.0};
    double frame_accuracy{0.0};
    std::size_t frames{0};
    std::vector<std::size_t> confusion;  // [K * K], row = reference label
};

EvalResult evaluate_qlstm(const QLSTMModel& m, const std::vector<QSequenceExample>& items);
EvalResult evaluate_lstm(const RealLSTMModel& m, const std::vector<RSequenceExample>& items);

struct EpochRecord {
    int epoch{0};
    double lr{0.0};
    double train_loss{0.0};
    double val_loss{0.0};
    double val_frame_accuracy{0.0};
    double wall_time_s{0.0};
};

struct TrainLoopConfig {
    int epochs{24};
    double initial_lr{1.6e-3};
    std::size_t batch_size{8};
    std::uint64_t seed{0};
    double clip_norm{5.0};  // <= 0 disables clipping
    int threads{1};
    double rmsprop_decay{0.99};
    double rmsprop_epsilon{1e-8};
};

// Epoch-boundary snapshot sufficient to resume a run exactly (all per-epoch
// randomness is derived from (seed, epoch, item), so no engine state is
// carried).
struct TrainingState {
    int next_epoch{0};
    OptimizerState opt;
    LRSchedule sched;
    double best_val_loss{std::numeric_limits<double>::infinity()};
    double best_val_accuracy{0.0};
    int best_epoch{-1};
};

template <typename Model>
struct TrainOutput {
    std::vector<EpochRecord> history;
    Model best_model;
    TrainingState state;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainOutput<QLSTMModel> train_qlstm(QLSTMModel& model,
                                    const std::vector<QSequenceExample>& train,
                                    const std::vector<QSequenceExample>& valid,
                                    const TrainLoopConfig& cfg,
                                    const TrainingState* resume = nullptr,
                                    const EpochCallback& on_epoch = {});

TrainOutput<RealLSTMModel> train_lstm(RealLSTMModel& model,
                                      const std::vector<RSequenceExample>& train,
                                      const std::vector<RSequenceExample>& valid,
                                      const TrainLoopConfig& cfg,
                                      const TrainingState* resume = nullptr,
                                      const EpochCallback& on_epoch = {});

}  // namespace quatnn
