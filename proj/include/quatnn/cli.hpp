#pragma once

// Command entry points behind the CLI binary; they return process exit codes
// so tests can drive them in-process.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "quatnn/config.hpp"
#include "quatnn/train.hpp"

namespace quatnn {

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

int cmd_gen_data(const std::string& config_path, const CliOverrides& ov = {});
int cmd_train(const std::string& config_path, const CliOverrides& ov = {});
int cmd_eval(const std::string& checkpoint_path, const std::string& dataset_dir,
             const std::string& split, const std::optional<std::string>& out_path = {});
int cmd_ablation(const std::string& config_path, const CliOverrides& ov = {});
int cmd_gradcheck(const std::string& preset, std::uint64_t seed = 1);
int cmd_bench(const std::vector<std::size_t>& sizes);

// Checkpoint plumbing shared by train/eval and the tests.
struct LoadedModel {
    std::string model;  // "qlstm" | "lstm"
    Provenance provenance{Provenance::FourMic};
    std::size_t input_dim{0};
    NetworkConfig net;
    QLSTMModel qlstm;    // populated when model == "qlstm"
    RealLSTMModel lstm;  // populated when model == "lstm"
};

void save_model_checkpoint(const std::string& path, const TrainConfig& cfg,
                           std::size_t input_dim, QLSTMModel* q, RealLSTMModel* r,
                           const TrainingState* state);
LoadedModel load_model_checkpoint(const std::string& path, TrainingState* state_out = nullptr);

// The deterministic per-epoch metrics record written to metrics.jsonl;
// wall-clock time is reported on the console stream only so reruns are
// byte-identical.
std::string metrics_line(const EpochRecord& rec);

}  // namespace quatnn
