#include <cstdint>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "quatnn/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"quatnn: quaternion recurrent sequence models for multi-channel data"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;

    auto add_common = [&](CLI::App* sub, bool need_config) {
        auto* copt = sub->add_option("--config", config_path, "path to the JSON config file");
        if (need_config) copt->required();
        sub->add_option("--seed", seed, "override the config's seed")
            ->each([&](const std::string&) { seed_set = true; });
        sub->add_option("--out", out, "override the config's output directory");
    };

    auto* gen = app.add_subcommand("gen-data", "synthesize and write a dataset");
    add_common(gen, true);

    auto* train = app.add_subcommand("train", "train a model on a dataset");
    add_common(train, true);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    std::string ckpt, dataset, split = "test", eval_out;
    eval->add_option("--checkpoint", ckpt, "model checkpoint")->required();
    eval->add_option("--dataset", dataset, "dataset directory")->required();
    eval->add_option("--split", split, "train|valid|test (default test)");
    eval->add_option("--out", eval_out, "also write the report JSON here");

    auto* abl = app.add_subcommand("ablation", "run the model x signal experiment matrix");
    add_common(abl, true);

    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string preset = "tiny-qlstm";
    grad->add_option("--preset", preset, "tiny-qlstm|tiny-lstm");
    grad->add_option("--seed", seed, "preset seed")
        ->each([&](const std::string&) { seed_set = true; });

    auto* bench = app.add_subcommand("bench", "Hamilton product throughput report");
    std::vector<std::size_t> sizes{16, 64, 256};
    bench->add_option("--sizes", sizes, "matrix sizes to time");

    CLI11_PARSE(app, argc, argv);

    quatnn::CliOverrides ov;
    if (seed_set) ov.seed = seed;
    if (!out.empty()) ov.out = out;

    if (gen->parsed()) return quatnn::cmd_gen_data(config_path, ov);
    if (train->parsed()) return quatnn::cmd_train(config_path, ov);
    if (eval->parsed()) {
        return quatnn::cmd_eval(ckpt, dataset, split,
                                eval_out.empty() ? std::nullopt
                                                 : std::optional<std::string>(eval_out));
    }
    if (abl->parsed()) return quatnn::cmd_ablation(config_path, ov);
    if (grad->parsed()) return quatnn::cmd_gradcheck(preset, seed_set ? seed : 1);
    if (bench->parsed()) return quatnn::cmd_bench(sizes);
    return 1;
}
