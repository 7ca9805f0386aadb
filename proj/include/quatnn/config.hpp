#pragma once

// Experiment configuration files: strict JSON with unknown-key rejection and
// canonical re-serialization (defaults resolved), so runs are auditable and
// regression fixtures can diff the canonical form.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "quatnn/multichannel.hpp"
#include "quatnn/network.hpp"
#include "quatnn/vendor_json.hpp"

namespace quatnn {

struct TrainConfig {
    std::string model{"qlstm"};  // "qlstm" | "lstm"
    Provenance provenance{Provenance::FourMic};
    std::string dataset;
    std::string out;
    std::uint64_t seed{0};
    int epochs{24};
    double initial_lr{1.6e-3};
    std::size_t batch_size{8};
    double clip_norm{5.0};
    int threads{1};
    NetworkConfig net;  // hidden defaults: 128 (qlstm) / 290 (lstm)
    std::string resume;  // optional checkpoint to continue from
};

TrainConfig parse_train_config(const nlohmann::json& j);
nlohmann::json train_config_json(const TrainConfig& c);

struct GenDataConfig {
    std::string out;
    DatasetConfig dataset;
};

GenDataConfig parse_gen_data_config(const nlohmann::json& j);
nlohmann::json gen_data_config_json(const GenDataConfig& c);

struct AblationCell {
    std::string model;  // "qlstm" | "lstm"
    Provenance provenance{Provenance::FourMic};
};

struct AblationConfig {
    std::string dataset;
    std::string out;
    std::vector<std::uint64_t> seeds;  // one training run per seed per cell
    int epochs{8};
    double initial_lr{1.6e-3};
    std::size_t batch_size{8};
    double clip_norm{5.0};
    int threads{1};
    NetworkConfig qlstm_net;
    NetworkConfig lstm_net;
    std::vector<AblationCell> cells;  // default: all 6
};

AblationConfig parse_ablation_config(const nlohmann::json& j);
nlohmann::json ablation_config_json(const AblationConfig& c);

nlohmann::json load_json_file(const std::string& path);

const char* gate_product_name(GateProduct g);
const char* fusion_name(BidirFusion f);
GateProduct gate_product_from_name(const std::string& s);
BidirFusion fusion_from_name(const std::string& s);

nlohmann::json network_config_json(const NetworkConfig& n);
NetworkConfig parse_network_config(const nlohmann::json& j, const std::string& model,
                                   const std::string& where);

}  // namespace quatnn
