// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0
//
// The federated training loop. Each round, for every prototype: sample
// clients, run local updates, aggregate; then the method's server step
// (nothing for fedavg, ensemble distillation for feddf / fedet_lite, M x M
// distillation tasks plus task-vector merging for takfl). All prototypes are
// evaluated on the shared test split after every round.

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "takfl/config.hpp"
#include "takfl/data.hpp"
#include "takfl/fedcore.hpp"
#include "takfl/metrics.hpp"
#include "takfl/nn.hpp"

namespace takfl::harness {

struct PreparedData {
    data::LabeledDataset train;
    data::LabeledDataset validation;
    data::LabeledDataset test;
    // One entry per prototype: that prototype's share of `train`, its
    // partition plan over that share, and the resulting client shards.
    std::vector<data::LabeledDataset> prototype_data;
    std::vector<data::PartitionPlan> plans;
    std::vector<std::vector<fedcore::ClientShard>> shards;
    data::UnlabeledDataset public_set;
    std::size_t input_dim = 0;
    std::size_t num_classes = 0;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

struct RunOptions {
    std::size_t threads = 1;
    // When set, metrics.jsonl, config.json and checkpoints/<prototype>.takf are written here.
    std::optional<std::filesystem::path> out_dir;
    // Called after every round with that round's per-prototype parameters.
    std::function<void(std::size_t round, std::span<const nn::ParameterVector> params)> on_round;
};

struct ExperimentResult {
    // Sorted by (round, prototype index).
    std::vector<RoundReport> reports;
    std::vector<nn::ParameterVector> final_params;
};

ExperimentResult run_experiment(ExperimentConfig cfg, const RunOptions& opts = {});

// Runs fn(0..n-1) on up to `threads` workers. Each call must only write its own
// result slot. If calls throw, the exception from the lowest index is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

// $TAKFL_OUT_DIR when set and nonempty, otherwise "takfl_out".
std::filesystem::path default_output_dir();

} // namespace takfl::harness
