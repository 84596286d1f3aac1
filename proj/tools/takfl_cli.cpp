// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "takfl/capacity.hpp"
#include "takfl/checkpoint.hpp"
#include "takfl/config.hpp"
#include "takfl/errors.hpp"
#include "takfl/experiment.hpp"

namespace {

using namespace takfl;

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            std::optional<std::string> out, std::size_t threads) {
    auto cfg = harness::load_config(config_path);
    if (seed)
        cfg.seed = *seed;
    harness::RunOptions opts;
    opts.threads = threads;
    opts.out_dir = out ? std::filesystem::path(*out) : harness::default_output_dir();
    const auto result = harness::run_experiment(cfg, opts);
    for (const auto& r : result.reports)
        if (r.final_round)
            std::cout << r.prototype << ": final test top-1 " << std::fixed
                      << std::setprecision(4) << r.test_top1 << ", loss " << r.test_loss << '\n';
    std::cout << "wrote " << opts.out_dir->string() << '\n';
    return 0;
}

int cmd_capacity(std::uint32_t q1, std::uint32_t w1, std::uint32_t w12,
                 std::optional<std::uint32_t> w2, const std::string& mode,
                 const std::string& bound_name, bool brute_force) {
    capacity::CapacityScenario s{q1, w1, w12, w2};
    const bool garbage = mode == "garbage";
    const auto bound = bound_name == "printed" ? capacity::GarbageBound::printed
                                               : capacity::GarbageBound::teacher_deficit;
    const auto value = garbage ? capacity::ved_garbage_expectation(s, bound)
                               : capacity::ved_offsolution_expectation(s);
    nlohmann::ordered_json out;
    out["q1"] = q1;
    out["w1"] = w1;
    out["w12"] = w12;
    out["w2"] = w2 ? nlohmann::ordered_json(*w2) : nlohmann::ordered_json();
    out["mode"] = mode;
    if (garbage)
        out["bound"] = bound_name;
    out["exact"] = capacity::to_string(value);
    out["decimal"] = capacity::to_double(value);
    if (brute_force) {
        const auto bf = capacity::brute_force_expectation(
            s, garbage ? capacity::ExpectationMode::garbage : capacity::ExpectationMode::offsolution,
            bound);
        out["brute_force"] = capacity::to_string(bf);
        out["brute_force_agrees"] = bf == value;
    }
    const auto check = capacity::takfl_preservation_check(s);
    out["merge_own_basis_misallocated"] = check.own_basis_misallocated;
    if (garbage && q1 == 4 && w1 == 2 && w12 == 2 && w2 && *w2 == 1) {
        out["published_value"] = capacity::kPublishedGarbageExample;
        out["published_value_reproduced"] = capacity::to_string(value) ==
                                             capacity::kPublishedGarbageExample;
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

int cmd_inspect(const std::string& path) {
    const auto cp = harness::load_checkpoint(path);
    double sum_sq = 0.0;
    for (double v : cp.params.values)
        sum_sq += v * v;
    nlohmann::ordered_json out;
    out["version"] = cp.header.version;
    out["prototype"] = cp.header.prototype;
    out["architecture"] = cp.header.arch.describe();
    out["dtype"] = cp.header.dtype;
    out["seed"] = cp.header.seed;
    out["round"] = cp.header.round;
    out["parameter_count"] = cp.params.values.size();
    out["l2_norm"] = std::sqrt(sum_sq);
    std::cout << out.dump(2) << '\n';
    return 0;
}

int cmd_partition_stats(const std::string& config_path, std::optional<std::uint64_t> seed) {
    auto cfg = harness::load_config(config_path);
    if (seed)
        cfg.seed = *seed;
    const auto data = harness::prepare_data(cfg);
    for (std::size_t p = 0; p < cfg.prototypes.size(); ++p) {
        for (const auto& shard : data.shards[p]) {
            nlohmann::ordered_json line;
            line["prototype"] = cfg.prototypes[p].name;
            line["client"] = shard.client_id;
            line["size"] = shard.data.size();
            line["class_histogram"] = shard.data.class_histogram();
            std::cout << line.dump() << '\n';
        }
        nlohmann::ordered_json summary;
        summary["prototype"] = cfg.prototypes[p].name;
        summary["mean_label_tv_distance"] =
            data::mean_label_tv_distance(data.prototype_data[p], data.plans[p]);
        std::cout << summary.dump() << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heterogeneous-device federated learning simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run an experiment from a config file");
    std::string run_config;
    std::optional<std::uint64_t> run_seed;
    std::optional<std::string> run_out;
    std::size_t run_threads = 1;
    run->add_option("--config", run_config, "Config file (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", run_seed, "Override the config seed");
    run->add_option("--out", run_out, "Output directory (default: $TAKFL_OUT_DIR or takfl_out)");
    run->add_option("--threads", run_threads, "Worker threads")->check(CLI::PositiveNumber);

    auto* cap = app.add_subcommand("capacity", "Exact capacity-allocation expectations");
    std::uint32_t q1 = 0, w1 = 0, w12 = 0;
    std::optional<std::uint32_t> w2;
    std::string mode = "offsolution";
    std::string bound = "teacher_deficit";
    bool brute = false;
    cap->add_option("--q1", q1, "Student capacity")->required();
    cap->add_option("--w1", w1, "Own solution dimension")->required();
    cap->add_option("--w12", w12, "Solution dimension for the teacher's data")->required();
    cap->add_option("--w2", w2, "Dimension supplied by the teacher (garbage mode)");
    cap->add_option("--mode", mode, "offsolution or garbage")
        ->check(CLI::IsMember({"offsolution", "garbage"}));
    cap->add_option("--bound", bound, "Garbage-mode summation bound")
        ->check(CLI::IsMember({"teacher_deficit", "printed"}));
    cap->add_flag("--brute-force", brute, "Cross-check against subset enumeration");

    auto* inspect = app.add_subcommand("inspect-checkpoint", "Print a checkpoint header");
    std::string ckpt;
    inspect->add_option("path", ckpt, "Checkpoint file")->required();

    auto* stats = app.add_subcommand("partition-stats", "Per-client class histograms as JSONL");
    std::string stats_config;
    std::optional<std::uint64_t> stats_seed;
    stats->add_option("--config", stats_config, "Config file (JSON)")->required()->check(CLI::ExistingFile);
    stats->add_option("--seed", stats_seed, "Override the config seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help and friends exit 0; every other parse error is a usage error
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*run)
            return cmd_run(run_config, run_seed, run_out, run_threads);
        if (*cap)
            return cmd_capacity(q1, w1, w12, w2, mode, bound, brute);
        if (*inspect)
            return cmd_inspect(ckpt);
        if (*stats)
            return cmd_partition_stats(stats_config, stats_seed);
    } catch (const takfl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const takfl::FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
