#include "quatnn/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace quatnn {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!ok.count(it.key())) {
            throw std::invalid_argument("unknown key '" + it.key() + "' in " + where);
        }
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

}  // namespace

const char* gate_product_name(GateProduct g) {
    return g == GateProduct::Componentwise ? "componentwise" : "hamilton";
}
const char* fusion_name(BidirFusion f) { return f == BidirFusion::Concat ? "concat" : "sum"; }

GateProduct gate_product_from_name(const std::string& s) {
    if (s == "componentwise") return GateProduct::Componentwise;
    if (s == "hamilton") return GateProduct::Hamilton;
    throw std::invalid_argument("unknown gate_product '" + s + "'");
}
BidirFusion fusion_from_name(const std::string& s) {
    if (s == "concat") return BidirFusion::Concat;
    if (s == "sum") return BidirFusion::Sum;
    throw std::invalid_argument("unknown fusion '" + s + "'");
}

json network_config_json(const NetworkConfig& n) {
    return json{{"num_layers", n.num_layers},
                {"hidden", n.hidden},
                {"bidirectional", n.bidirectional},
                {"dropout_rate", n.dropout_rate},
                {"gate_product", gate_product_name(n.gate_product)},
                {"fusion", fusion_name(n.fusion)}};
}

NetworkConfig parse_network_config(const json& j, const std::string& model,
                                   const std::string& where) {
    reject_unknown_keys(j, {"num_layers", "hidden", "bidirectional", "dropout_rate",
                            "gate_product", "fusion"},
                        where);
    NetworkConfig n;
    n.num_layers = get_or<std::size_t>(j, "num_layers", 4);
    n.hidden = get_or<std::size_t>(j, "hidden", model == "lstm" ? 290 : 128);
    n.bidirectional = get_or<bool>(j, "bidirectional", true);
    n.dropout_rate = get_or<double>(j, "dropout_rate", 0.2);
    n.gate_product =
        gate_product_from_name(get_or<std::string>(j, "gate_product", "componentwise"));
    // The size-290 real baseline fuses directions by sum so its parameter
    // count matches the quaternion model; the quaternion stack concatenates.
    n.fusion = fusion_from_name(
        get_or<std::string>(j, "fusion", model == "lstm" ? "sum" : "concat"));
    if (n.dropout_rate < 0.0 || n.dropout_rate >= 1.0) {
        throw std::invalid_argument(where + ": dropout_rate must be in [0, 1)");
    }
    if (n.num_layers == 0 || n.hidden == 0) {
        throw std::invalid_argument(where + ": num_layers and hidden must be positive");
    }
    return n;
}

static void validate_model_name(const std::string& m) {
    if (m != "qlstm" && m != "lstm") {
        throw std::invalid_argument("model must be 'qlstm' or 'lstm', got '" + m + "'");
    }
}

TrainConfig parse_train_config(const json& j) {
    reject_unknown_keys(j,
                        {"model", "provenance", "dataset", "out", "seed", "epochs",
                         "initial_lr", "batch_size", "clip_norm", "threads", "network",
                         "resume"},
                        "train config");
    TrainConfig c;
    c.model = get_or<std::string>(j, "model", "qlstm");
    validate_model_name(c.model);
    c.provenance = provenance_from_name(get_or<std::string>(j, "provenance", "four_mic"));
    if (!j.contains("dataset")) throw std::invalid_argument("train config: 'dataset' is required");
    c.dataset = j.at("dataset").get<std::string>();
    if (!j.contains("out")) throw std::invalid_argument("train config: 'out' is required");
    c.out = j.at("out").get<std::string>();
    c.seed = get_or<std::uint64_t>(j, "seed", 0);
    c.epochs = get_or<int>(j, "epochs", 24);
    c.initial_lr = get_or<double>(j, "initial_lr", 1.6e-3);
    c.batch_size = get_or<std::size_t>(j, "batch_size", 8);
    c.clip_norm = get_or<double>(j, "clip_norm", 5.0);
    c.threads = get_or<int>(j, "threads", 1);
    c.net = parse_network_config(j.contains("network") ? j.at("network") : json::object(),
                                 c.model, "train config network");
    c.resume = get_or<std::string>(j, "resume", "");
    if (c.epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
    if (c.batch_size == 0) throw std::invalid_argument("train config: batch_size must be > 0");
    if (c.initial_lr <= 0.0) throw std::invalid_argument("train config: initial_lr must be > 0");
    if (c.threads < 1) throw std::invalid_argument("train config: threads must be >= 1");
    return c;
}

json train_config_json(const TrainConfig& c) {
    json j{{"model", c.model},
           {"provenance", provenance_name(c.provenance)},
           {"dataset", c.dataset},
           {"out", c.out},
           {"seed", c.seed},
           {"epochs", c.epochs},
           {"initial_lr", c.initial_lr},
           {"batch_size", c.batch_size},
           {"clip_norm", c.clip_norm},
           {"threads", c.threads},
           {"network", network_config_json(c.net)}};
    if (!c.resume.empty()) j["resume"] = c.resume;
    return j;
}

namespace {

FbankConfig parse_fbank_config(const json& j, const std::string& where) {
    reject_unknown_keys(j,
                        {"sample_rate", "n_filters", "frame_len_ms", "hop_ms", "mel_low_hz",
                         "mel_high_hz", "log_floor"},
                        where);
    FbankConfig f;
    f.sample_rate = get_or<double>(j, "sample_rate", 8000.0);
    f.n_filters = get_or<std::size_t>(j, "n_filters", 40);
    f.frame_len_ms = get_or<double>(j, "frame_len_ms", 25.0);
    f.hop_ms = get_or<double>(j, "hop_ms", 10.0);
    f.mel_low_hz = get_or<double>(j, "mel_low_hz", 20.0);
    f.mel_high_hz = get_or<double>(j, "mel_high_hz", 0.0);
    f.log_floor = get_or<double>(j, "log_floor", 1e-10);
    return f;
}

json fbank_config_json(const FbankConfig& f) {
    return json{{"sample_rate", f.sample_rate},   {"n_filters", f.n_filters},
                {"frame_len_ms", f.frame_len_ms}, {"hop_ms", f.hop_ms},
                {"mel_low_hz", f.mel_low_hz},     {"mel_high_hz", f.mel_high_hz},
                {"log_floor", f.log_floor}};
}

SceneConfig parse_scene_config(const json& j, const std::string& where) {
    reject_unknown_keys(j,
                        {"sample_rate", "min_duration_s", "max_duration_s", "num_classes",
                         "min_segment_s", "max_segment_s", "max_delay", "delay_bound",
                         "min_gain", "max_gain", "noise_enabled", "min_snr_db", "max_snr_db",
                         "tail_ms", "tail_level", "fbank"},
                        where);
    SceneConfig s;
    s.sample_rate = get_or<double>(j, "sample_rate", 8000.0);
    s.min_duration_s = get_or<double>(j, "min_duration_s", 1.0);
    s.max_duration_s = get_or<double>(j, "max_duration_s", 1.6);
    s.num_classes = get_or<std::size_t>(j, "num_classes", 4);
    s.min_segment_s = get_or<double>(j, "min_segment_s", 0.25);
    s.max_segment_s = get_or<double>(j, "max_segment_s", 0.60);
    s.max_delay = get_or<int>(j, "max_delay", 12);
    s.delay_bound = get_or<int>(j, "delay_bound", 20);
    s.min_gain = get_or<double>(j, "min_gain", 0.75);
    s.max_gain = get_or<double>(j, "max_gain", 1.25);
    s.noise_enabled = get_or<bool>(j, "noise_enabled", true);
    s.min_snr_db = get_or<double>(j, "min_snr_db", 0.0);
    s.max_snr_db = get_or<double>(j, "max_snr_db", 6.0);
    s.tail_ms = get_or<double>(j, "tail_ms", 25.0);
    s.tail_level = get_or<double>(j, "tail_level", 0.25);
    s.fbank = parse_fbank_config(j.contains("fbank") ? j.at("fbank") : json::object(),
                                 where + " fbank");
    if (s.fbank.sample_rate != s.sample_rate) {
        // Keep one source of truth for sampling rate.
        s.fbank.sample_rate = s.sample_rate;
    }
    return s;
}

json scene_config_json(const SceneConfig& s) {
    return json{{"sample_rate", s.sample_rate},
                {"min_duration_s", s.min_duration_s},
                {"max_duration_s", s.max_duration_s},
                {"num_classes", s.num_classes},
                {"min_segment_s", s.min_segment_s},
                {"max_segment_s", s.max_segment_s},
                {"max_delay", s.max_delay},
                {"delay_bound", s.delay_bound},
                {"min_gain", s.min_gain},
                {"max_gain", s.max_gain},
                {"noise_enabled", s.noise_enabled},
                {"min_snr_db", s.min_snr_db},
                {"max_snr_db", s.max_snr_db},
                {"tail_ms", s.tail_ms},
                {"tail_level", s.tail_level},
                {"fbank", fbank_config_json(s.fbank)}};
}

}  // namespace

GenDataConfig parse_gen_data_config(const json& j) {
    reject_unknown_keys(j,
                        {"out", "seed", "train_scenes", "valid_scenes", "test_scenes",
                         "copy_channel", "beam_ref_channel", "scene"},
                        "gen-data config");
    GenDataConfig c;
    if (!j.contains("out")) throw std::invalid_argument("gen-data config: 'out' is required");
    c.out = j.at("out").get<std::string>();
    c.dataset.seed = get_or<std::uint64_t>(j, "seed", 0);
    c.dataset.train_scenes = get_or<std::size_t>(j, "train_scenes", 200);
    c.dataset.valid_scenes = get_or<std::size_t>(j, "valid_scenes", 40);
    c.dataset.test_scenes = get_or<std::size_t>(j, "test_scenes", 60);
    c.dataset.copy_channel = get_or<int>(j, "copy_channel", 0);
    c.dataset.beam_ref_channel = get_or<int>(j, "beam_ref_channel", 0);
    c.dataset.scene = parse_scene_config(
        j.contains("scene") ? j.at("scene") : json::object(), "gen-data config scene");
    return c;
}

json gen_data_config_json(const GenDataConfig& c) {
    return json{{"out", c.out},
                {"seed", c.dataset.seed},
                {"train_scenes", c.dataset.train_scenes},
                {"valid_scenes", c.dataset.valid_scenes},
                {"test_scenes", c.dataset.test_scenes},
                {"copy_channel", c.dataset.copy_channel},
                {"beam_ref_channel", c.dataset.beam_ref_channel},
                {"scene", scene_config_json(c.dataset.scene)}};
}

AblationConfig parse_ablation_config(const json& j) {
    reject_unknown_keys(j,
                        {"dataset", "out", "seeds", "epochs", "initial_lr", "batch_size",
                         "clip_norm", "threads", "qlstm_network", "lstm_network", "cells"},
                        "ablation config");
    AblationConfig c;
    if (!j.contains("dataset"))
        throw std::invalid_argument("ablation config: 'dataset' is required");
    c.dataset = j.at("dataset").get<std::string>();
    if (!j.contains("out")) throw std::invalid_argument("ablation config: 'out' is required");
    c.out = j.at("out").get<std::string>();
    if (j.contains("seeds")) {
        const json& s = j.at("seeds");
        if (s.is_number()) {
            const auto n = s.get<std::size_t>();
            for (std::size_t i = 0; i < n; ++i) c.seeds.push_back(i + 1);
        } else {
            c.seeds = s.get<std::vector<std::uint64_t>>();
        }
    } else {
        c.seeds = {1, 2, 3, 4, 5};
    }
    if (c.seeds.empty()) throw std::invalid_argument("ablation config: needs at least one seed");
    c.epochs = get_or<int>(j, "epochs", 8);
    c.initial_lr = get_or<double>(j, "initial_lr", 1.6e-3);
    c.batch_size = get_or<std::size_t>(j, "batch_size", 8);
    c.clip_norm = get_or<double>(j, "clip_norm", 5.0);
    c.threads = get_or<int>(j, "threads", 1);
    c.qlstm_net = parse_network_config(
        j.contains("qlstm_network") ? j.at("qlstm_network") : json::object(), "qlstm",
        "ablation qlstm_network");
    c.lstm_net = parse_network_config(
        j.contains("lstm_network") ? j.at("lstm_network") : json::object(), "lstm",
        "ablation lstm_network");
    if (j.contains("cells")) {
        for (const json& cell : j.at("cells")) {
            if (!cell.is_array() || cell.size() != 2) {
                throw std::invalid_argument("ablation config: each cell is [model, provenance]");
            }
            AblationCell ac;
            ac.model = cell[0].get<std::string>();
            validate_model_name(ac.model);
            ac.provenance = provenance_from_name(cell[1].get<std::string>());
            c.cells.push_back(ac);
        }
    } else {
        for (const char* m : {"qlstm", "lstm"}) {
            for (Provenance p :
                 {Provenance::FourMic, Provenance::CopiedMic, Provenance::Beamformed}) {
                c.cells.push_back({m, p});
            }
        }
    }
    return c;
}

json ablation_config_json(const AblationConfig& c) {
    json cells = json::array();
    for (const AblationCell& cell : c.cells) {
        cells.push_back(json::array({cell.model, provenance_name(cell.provenance)}));
    }
    return json{{"dataset", c.dataset},
                {"out", c.out},
                {"seeds", c.seeds},
                {"epochs", c.epochs},
                {"initial_lr", c.initial_lr},
                {"batch_size", c.batch_size},
                {"clip_norm", c.clip_norm},
                {"threads", c.threads},
                {"qlstm_network", network_config_json(c.qlstm_net)},
                {"lstm_network", network_config_json(c.lstm_net)},
                {"cells", cells}};
}

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file '" + path + "'");
    return nlohmann::json::parse(f);
}

}  // namespace quatnn
