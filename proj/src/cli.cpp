#include "quatnn/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "quatnn/opcount.hpp"
#include "quatnn/quat.hpp"
#include "quatnn/rng.hpp"
#include "quatnn/serialization.hpp"

namespace fs = std::filesystem;

namespace quatnn {

namespace {

using nlohmann::json;

void ensure_out_dir(const std::string& out) {
    const fs::path p(out);
    if (fs::exists(p)) {
        if (!fs::is_directory(p)) throw std::runtime_error("'" + out + "' is not a directory");
        return;
    }
    if (!p.parent_path().empty() && !fs::exists(p.parent_path())) {
        throw std::runtime_error("parent of output directory '" + out + "' does not exist");
    }
    fs::create_directory(p);
}

std::vector<QSequenceExample> qexamples(const Dataset& ds, Split s, Provenance p) {
    std::vector<QSequenceExample> out;
    for (const FeatureSequence& fsq : dataset_items(ds, s, p)) out.push_back(to_qexample(fsq));
    return out;
}

std::vector<RSequenceExample> rexamples(const Dataset& ds, Split s, Provenance p) {
    std::vector<RSequenceExample> out;
    for (const FeatureSequence& fsq : dataset_items(ds, s, p)) out.push_back(to_rexample(fsq));
    return out;
}

json sched_json(const LRSchedule& s) {
    json j{{"initial_lr", s.initial_lr}, {"current_lr", s.current_lr}, {"halvings", s.halvings}};
    if (s.prev_val_loss.has_value())
        j["prev_val_loss"] = *s.prev_val_loss;
    else
        j["prev_val_loss"] = nullptr;
    return j;
}

LRSchedule sched_from_json(const json& j) {
    LRSchedule s;
    s.initial_lr = j.at("initial_lr").get<double>();
    s.current_lr = j.at("current_lr").get<double>();
    s.halvings = j.at("halvings").get<int>();
    if (!j.at("prev_val_loss").is_null()) s.prev_val_loss = j.at("prev_val_loss").get<double>();
    return s;
}

Split split_from_name(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "valid") return Split::Valid;
    if (s == "test") return Split::Test;
    throw std::invalid_argument("unknown split '" + s + "' (expected train|valid|test)");
}

}  // namespace

std::string metrics_line(const EpochRecord& rec) {
    json j{{"epoch", rec.epoch},
           {"lr", rec.lr},
           {"train_loss", rec.train_loss},
           {"val_loss", rec.val_loss},
           {"val_frame_accuracy", rec.val_frame_accuracy}};
    return j.dump();
}

void save_model_checkpoint(const std::string& path, const TrainConfig& cfg,
                           std::size_t input_dim, QLSTMModel* q, RealLSTMModel* r,
                           const TrainingState* state) {
    json header;
    header["format"] = "quatnn-checkpoint-1";
    header["model"] = cfg.model;
    header["provenance"] = provenance_name(cfg.provenance);
    header["input_dim"] = input_dim;
    header["num_classes"] = q ? q->cfg.num_classes : r->cfg.num_classes;
    header["network"] = network_config_json(cfg.net);
    std::vector<NamedArray> arrays =
        q ? snapshot_params(*q) : snapshot_params(*r);
    if (state) {
        header["state"] = {{"next_epoch", state->next_epoch},
                           {"best_val_loss", state->best_val_loss},
                           {"best_val_accuracy", state->best_val_accuracy},
                           {"best_epoch", state->best_epoch},
                           {"sched", sched_json(state->sched)},
                           {"rmsprop",
                            {{"decay", state->opt.decay},
                             {"epsilon", state->opt.epsilon},
                             {"learning_rate", state->opt.learning_rate}}}};
        // Optimizer accumulators ride along under "opt.", one per parameter
        // array in visit order.
        std::vector<std::string> names;
        auto collect = [&](const ParamRef& p) { names.push_back(p.name); };
        if (q)
            visit_params(*q, collect);
        else
            visit_params(*r, collect);
        for (std::size_t a = 0; a < state->opt.acc.size(); ++a) {
            NamedArray na;
            na.name = "opt." + names[a];
            na.shape = {state->opt.acc[a].size()};
            na.values = state->opt.acc[a];
            arrays.push_back(std::move(na));
        }
    }
    write_checkpoint(path, header, arrays);
}

LoadedModel load_model_checkpoint(const std::string& path, TrainingState* state_out) {
    const Checkpoint ck = read_checkpoint(path);
    if (ck.header.value("format", "") != "quatnn-checkpoint-1") {
        throw std::runtime_error("'" + path + "' has an unsupported checkpoint format");
    }
    LoadedModel lm;
    lm.model = ck.header.at("model").get<std::string>();
    lm.provenance = provenance_from_name(ck.header.at("provenance").get<std::string>());
    lm.input_dim = ck.header.at("input_dim").get<std::size_t>();
    lm.net = parse_network_config(ck.header.at("network"), lm.model, "checkpoint network");
    lm.net.num_classes = ck.header.at("num_classes").get<std::size_t>();
    if (lm.model == "qlstm") {
        lm.qlstm = QLSTMModel::init(lm.net, lm.input_dim, 0);
        restore_params(lm.qlstm, ck.arrays);
    } else {
        lm.lstm = RealLSTMModel::init(lm.net, lm.input_dim, 0);
        restore_params(lm.lstm, ck.arrays);
    }
    if (state_out) {
        if (!ck.header.contains("state")) {
            throw std::runtime_error("checkpoint '" + path + "' carries no training state");
        }
        const json& st = ck.header.at("state");
        state_out->next_epoch = st.at("next_epoch").get<int>();
        state_out->best_val_loss = st.at("best_val_loss").get<double>();
        state_out->best_val_accuracy = st.at("best_val_accuracy").get<double>();
        state_out->best_epoch = st.at("best_epoch").get<int>();
        state_out->sched = sched_from_json(st.at("sched"));
        state_out->opt.decay = st.at("rmsprop").at("decay").get<double>();
        state_out->opt.epsilon = st.at("rmsprop").at("epsilon").get<double>();
        state_out->opt.learning_rate = st.at("rmsprop").at("learning_rate").get<double>();
        state_out->opt.acc.clear();
        std::vector<std::string> names;
        auto collect = [&](const ParamRef& p) { names.push_back(p.name); };
        if (lm.model == "qlstm")
            visit_params(lm.qlstm, collect);
        else
            visit_params(lm.lstm, collect);
        std::map<std::string, const NamedArray*> index;
        for (const auto& a : ck.arrays) index[a.name] = &a;
        for (const std::string& n : names) {
            auto it = index.find("opt." + n);
            if (it == index.end()) {
                throw std::runtime_error("checkpoint is missing optimizer state for " + n);
            }
            state_out->opt.acc.push_back(it->second->f64());
        }
    }
    return lm;
}

int cmd_gen_data(const std::string& config_path, const CliOverrides& ov) {
    try {
        GenDataConfig cfg = parse_gen_data_config(load_json_file(config_path));
        if (ov.seed) cfg.dataset.seed = *ov.seed;
        if (ov.out) cfg.out = *ov.out;
        const Dataset ds = build_dataset(cfg.dataset);
        write_dataset(cfg.out, ds);
        std::size_t frames = 0;
        for (const auto& fsq : dataset_items(ds, Split::Train, Provenance::FourMic))
            frames += fsq.labels.size();
        std::cout << "dataset written to " << cfg.out << " (train scenes "
                  << cfg.dataset.train_scenes << ", train frames " << frames << ")\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "gen-data: " << e.what() << "\n";
        return 1;
    }
}

int cmd_train(const std::string& config_path, const CliOverrides& ov) {
    try {
        TrainConfig cfg = parse_train_config(load_json_file(config_path));
        if (ov.seed) cfg.seed = *ov.seed;
        if (ov.out) cfg.out = *ov.out;
        const Dataset ds = load_dataset(cfg.dataset);
        ensure_out_dir(cfg.out);

        cfg.net.num_classes = ds.cfg.scene.num_classes;
        TrainLoopConfig loop;
        loop.epochs = cfg.epochs;
        loop.initial_lr = cfg.initial_lr;
        loop.batch_size = cfg.batch_size;
        loop.seed = cfg.seed;
        loop.clip_norm = cfg.clip_norm;
        loop.threads = cfg.threads;

        {
            std::ofstream cf(fs::path(cfg.out) / "config.json");
            cf << train_config_json(cfg).dump(2) << "\n";
        }
        std::ofstream metrics(fs::path(cfg.out) / "metrics.jsonl",
                              std::ios::trunc);
        if (!metrics) throw std::runtime_error("cannot write metrics.jsonl");
        auto on_epoch = [&](const EpochRecord& rec) {
            metrics << metrics_line(rec) << "\n";
            metrics.flush();
            std::cout << "epoch " << rec.epoch << " lr " << rec.lr << " train_loss "
                      << rec.train_loss << " val_loss " << rec.val_loss << " val_acc "
                      << rec.val_frame_accuracy << " wall_time_s " << rec.wall_time_s << "\n";
        };

        TrainingState resume_state;
        const bool resuming = !cfg.resume.empty();
        const std::string best_path = (fs::path(cfg.out) / "ckpt_best.qckpt").string();
        const std::string last_path = (fs::path(cfg.out) / "ckpt_last.qckpt").string();

        if (cfg.model == "qlstm") {
            const std::size_t input_dim = ds.cfg.scene.fbank.n_filters;
            QLSTMModel model = QLSTMModel::init(cfg.net, input_dim, cfg.seed);
            if (resuming) {
                LoadedModel lm = load_model_checkpoint(cfg.resume, &resume_state);
                if (lm.model != "qlstm" || lm.input_dim != input_dim ||
                    lm.net.num_layers != cfg.net.num_layers ||
                    lm.net.hidden != cfg.net.hidden) {
                    throw std::runtime_error("resume checkpoint does not match this config");
                }
                model = lm.qlstm;
            }
            auto train = qexamples(ds, Split::Train, cfg.provenance);
            auto valid = qexamples(ds, Split::Valid, cfg.provenance);
            auto out = train_qlstm(model, train, valid, loop,
                                   resuming ? &resume_state : nullptr, on_epoch);
            const bool improved =
                !resuming || out.state.best_epoch >= resume_state.next_epoch;
            if (improved) {
                save_model_checkpoint(best_path, cfg, input_dim, &out.best_model, nullptr,
                                      nullptr);
            }
            save_model_checkpoint(last_path, cfg, input_dim, &model, nullptr, &out.state);
        } else {
            const std::size_t F = ds.cfg.scene.fbank.n_filters;
            const std::size_t input_dim =
                cfg.provenance == Provenance::FourMic ? 4 * F : F;
            RealLSTMModel model = RealLSTMModel::init(cfg.net, input_dim, cfg.seed);
            if (resuming) {
                LoadedModel lm = load_model_checkpoint(cfg.resume, &resume_state);
                if (lm.model != "lstm" || lm.input_dim != input_dim ||
                    lm.net.num_layers != cfg.net.num_layers ||
                    lm.net.hidden != cfg.net.hidden) {
                    throw std::runtime_error("resume checkpoint does not match this config");
                }
                model = lm.lstm;
            }
            auto train = rexamples(ds, Split::Train, cfg.provenance);
            auto valid = rexamples(ds, Split::Valid, cfg.provenance);
            auto out = train_lstm(model, train, valid, loop,
                                  resuming ? &resume_state : nullptr, on_epoch);
            const bool improved =
                !resuming || out.state.best_epoch >= resume_state.next_epoch;
            if (improved) {
                save_model_checkpoint(best_path, cfg, input_dim, nullptr, &out.best_model,
                                      nullptr);
            }
            save_model_checkpoint(last_path, cfg, input_dim, nullptr, &model, &out.state);
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "train: " << e.what() << "\n";
        return 1;
    }
}

int cmd_eval(const std::string& checkpoint_path, const std::string& dataset_dir,
             const std::string& split, const std::optional<std::string>& out_path) {
    try {
        const LoadedModel lm = load_model_checkpoint(checkpoint_path);
        const Dataset ds = load_dataset(dataset_dir);
        const Split sp = split_from_name(split);

        EvalResult ev;
        if (lm.model == "qlstm") {
            ev = evaluate_qlstm(lm.qlstm, qexamples(ds, sp, lm.provenance));
        } else {
            ev = evaluate_lstm(lm.lstm, rexamples(ds, sp, lm.provenance));
        }
        const std::size_t K = lm.net.num_classes;
        json rep{{"split", split},
                 {"provenance", provenance_name(lm.provenance)},
                 {"model", lm.model},
                 {"frames", ev.frames},
                 {"loss", ev.loss},
                 {"frame_accuracy", ev.frame_accuracy}};
        json conf = json::array();
        for (std::size_t r = 0; r < K; ++r) {
            json row = json::array();
            for (std::size_t c = 0; c < K; ++c) row.push_back(ev.confusion[r * K + c]);
            conf.push_back(row);
        }
        rep["confusion"] = conf;
        std::cout << rep.dump(2) << "\n";
        if (out_path) {
            std::ofstream f(*out_path);
            if (!f) throw std::runtime_error("cannot write '" + *out_path + "'");
            f << rep.dump(2) << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "eval: " << e.what() << "\n";
        return 1;
    }
}

namespace {

struct CellStats {
    std::vector<double> accuracies;
    double mean() const {
        double s = 0.0;
        for (double a : accuracies) s += a;
        return s / static_cast<double>(accuracies.size());
    }
    double stddev() const {
        const double m = mean();
        double s = 0.0;
        for (double a : accuracies) s += (a - m) * (a - m);
        return accuracies.size() > 1
                   ? std::sqrt(s / static_cast<double>(accuracies.size() - 1))
                   : 0.0;
    }
};

}  // namespace

int cmd_ablation(const std::string& config_path, const CliOverrides& ov) {
    try {
        AblationConfig cfg = parse_ablation_config(load_json_file(config_path));
        if (ov.out) cfg.out = *ov.out;
        ensure_out_dir(cfg.out);
        const Dataset ds = load_dataset(cfg.dataset);
        const std::size_t K = ds.cfg.scene.num_classes;
        const std::size_t F = ds.cfg.scene.fbank.n_filters;

        json runs = json::array();
        std::vector<std::pair<std::string, CellStats>> table;
        for (const AblationCell& cell : cfg.cells) {
            CellStats stats;
            for (std::uint64_t seed : cfg.seeds) {
                TrainLoopConfig loop;
                loop.epochs = cfg.epochs;
                loop.initial_lr = cfg.initial_lr;
                loop.batch_size = cfg.batch_size;
                loop.seed = seed;
                loop.clip_norm = cfg.clip_norm;
                loop.threads = cfg.threads;
                double acc = 0.0;
                if (cell.model == "qlstm") {
                    NetworkConfig net = cfg.qlstm_net;
                    net.num_classes = K;
                    QLSTMModel model = QLSTMModel::init(net, F, seed);
                    auto train = qexamples(ds, Split::Train, cell.provenance);
                    auto valid = qexamples(ds, Split::Valid, cell.provenance);
                    auto out = train_qlstm(model, train, valid, loop);
                    acc = evaluate_qlstm(out.best_model,
                                         qexamples(ds, Split::Test, cell.provenance))
                              .frame_accuracy;
                } else {
                    NetworkConfig net = cfg.lstm_net;
                    net.num_classes = K;
                    const std::size_t input_dim =
                        cell.provenance == Provenance::FourMic ? 4 * F : F;
                    RealLSTMModel model = RealLSTMModel::init(net, input_dim, seed);
                    auto train = rexamples(ds, Split::Train, cell.provenance);
                    auto valid = rexamples(ds, Split::Valid, cell.provenance);
                    auto out = train_lstm(model, train, valid, loop);
                    acc = evaluate_lstm(out.best_model,
                                        rexamples(ds, Split::Test, cell.provenance))
                              .frame_accuracy;
                }
                stats.accuracies.push_back(acc);
                runs.push_back(json{{"model", cell.model},
                                    {"provenance", provenance_name(cell.provenance)},
                                    {"seed", seed},
                                    {"test_frame_accuracy", acc}});
                std::cout << cell.model << "/" << provenance_name(cell.provenance) << " seed "
                          << seed << " test acc " << acc << "\n";
            }
            table.emplace_back(
                cell.model + std::string("/") + provenance_name(cell.provenance), stats);
        }

        json summary;
        summary["runs"] = runs;
        json cells = json::array();
        std::string tsv = "cell\tmean_test_frame_accuracy\tstd\truns\n";
        std::cout << "\ncell                     mean    std     runs\n";
        for (const auto& [name, stats] : table) {
            cells.push_back(json{{"cell", name},
                                 {"mean_test_frame_accuracy", stats.mean()},
                                 {"std", stats.stddev()},
                                 {"runs", stats.accuracies.size()}});
            char line[160];
            std::snprintf(line, sizeof(line), "%-24s %.4f  %.4f  %zu\n", name.c_str(),
                          stats.mean(), stats.stddev(), stats.accuracies.size());
            std::cout << line;
            tsv += name + "\t" + std::to_string(stats.mean()) + "\t" +
                   std::to_string(stats.stddev()) + "\t" +
                   std::to_string(stats.accuracies.size()) + "\n";
        }
        summary["cells"] = cells;
        {
            std::ofstream f(fs::path(cfg.out) / "summary.json");
            f << summary.dump(2) << "\n";
            std::ofstream t(fs::path(cfg.out) / "summary.tsv");
            t << tsv;
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "ablation: " << e.what() << "\n";
        return 1;
    }
}

int cmd_gradcheck(const std::string& preset, std::uint64_t seed) {
    try {
        GradCheckReport rep;
        if (preset == "tiny-qlstm") {
            NetworkConfig net;
            net.num_layers = 2;
            net.hidden = 3;
            net.bidirectional = true;
            net.dropout_rate = 0.0;
            net.num_classes = 3;
            QLSTMModel model = QLSTMModel::init(net, 2, seed);
            std::vector<QSequenceExample> batch;
            std::mt19937_64 rng(mix64(seed + 17));
            for (int b = 0; b < 2; ++b) {
                QSequenceExample ex;
                ex.frames = QuaternionTensor::zeros({5, 2});
                for (double& v : ex.frames.raw()) v = uniform(rng, -1.0, 1.0);
                for (int t = 0; t < 5; ++t)
                    ex.labels.push_back(static_cast<int>(uniform_index(rng, 3)));
                batch.push_back(std::move(ex));
            }
            rep = grad_check_qlstm(model, batch, 1e-4, 1e-5);
        } else if (preset == "tiny-lstm") {
            NetworkConfig net;
            net.num_layers = 2;
            net.hidden = 4;
            net.bidirectional = true;
            net.dropout_rate = 0.0;
            net.num_classes = 3;
            RealLSTMModel model = RealLSTMModel::init(net, 3, seed);
            std::vector<RSequenceExample> batch;
            std::mt19937_64 rng(mix64(seed + 17));
            for (int b = 0; b < 2; ++b) {
                RSequenceExample ex;
                ex.frames = Tensor::zeros({5, 3});
                for (double& v : ex.frames.data) v = uniform(rng, -1.0, 1.0);
                for (int t = 0; t < 5; ++t)
                    ex.labels.push_back(static_cast<int>(uniform_index(rng, 3)));
                batch.push_back(std::move(ex));
            }
            rep = grad_check_lstm(model, batch, 1e-4, 1e-5);
        } else {
            throw std::invalid_argument("unknown preset '" + preset +
                                        "' (expected tiny-qlstm|tiny-lstm)");
        }
        std::cout << "params checked: " << rep.n_params << "\n"
                  << "max relative error: " << rep.max_rel_error << "\n"
                  << "worst parameter: " << rep.worst_param << "[" << rep.worst_index << "]\n"
                  << (rep.pass ? "PASS" : "FAIL") << "\n";
        return rep.pass ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "gradcheck: " << e.what() << "\n";
        return 1;
    }
}

int cmd_bench(const std::vector<std::size_t>& sizes) {
    try {
        {
            CountedDouble::reset();
            QuatT<CountedDouble> a{1.0, 2.0, 3.0, 4.0}, b{5.0, 6.0, 7.0, 8.0};
            (void)hamilton(a, b);
            std::cout << "scalar hamilton product: " << CountedDouble::mul_count
                      << " mul + " << CountedDouble::add_count << " add = "
                      << (CountedDouble::mul_count + CountedDouble::add_count)
                      << " basic operations\n";
        }
        std::cout << "size     products   scalar_prod/s   batched_prod/s\n";
        for (std::size_t n : sizes) {
            std::mt19937_64 rng(mix64(n));
            QuaternionTensor W = QuaternionTensor::zeros({n, n});
            QuaternionTensor x = QuaternionTensor::zeros({n});
            for (double& v : W.raw()) v = uniform(rng, -1.0, 1.0);
            for (double& v : x.raw()) v = uniform(rng, -1.0, 1.0);

            // Scalar object path.
            QuaternionTensor y_scalar = QuaternionTensor::zeros({n});
            auto run_scalar = [&]() {
                for (std::size_t o = 0; o < n; ++o) {
                    Quaternion acc{};
                    for (std::size_t i = 0; i < n; ++i) {
                        acc = acc + hamilton(W.get(o * n + i), x.get(i));
                    }
                    y_scalar.set(o, acc);
                }
            };
            // Fused plane-kernel path.
            QuaternionTensor y_batched = QuaternionTensor::zeros({n});
            auto run_batched = [&]() {
                y_batched.fill(0.0);
                qmat_vec_acc(W, view(x), mut_view(y_batched));
            };

            auto time_it = [&](auto&& fn) {
                int reps = 0;
                const auto t0 = std::chrono::steady_clock::now();
                double elapsed = 0.0;
                do {
                    fn();
                    ++reps;
                    elapsed = std::chrono::duration<double>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
                } while (elapsed < 0.2);
                return static_cast<double>(reps) * static_cast<double>(n) *
                       static_cast<double>(n) / elapsed;
            };
            const double scalar_rate = time_it(run_scalar);
            const double batched_rate = time_it(run_batched);

            for (std::size_t i = 0; i < 4 * n; ++i) {
                if (std::abs(y_scalar.raw()[i] - y_batched.raw()[i]) > 1e-12) {
                    std::cerr << "bench: scalar and batched paths disagree at size " << n
                              << "\n";
                    return 1;
                }
            }
            char line[160];
            std::snprintf(line, sizeof(line), "%-8zu %-10zu %-15.3e %-15.3e\n", n, n * n,
                          scalar_rate, batched_rate);
            std::cout << line;
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "bench: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace quatnn
