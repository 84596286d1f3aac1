// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-prototype federated averaging: client sampling, local training,
// dataset-size weighted aggregation and evaluation.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "takfl/data.hpp"
#include "takfl/nn.hpp"
#include "takfl/rng.hpp"

namespace takfl::fedcore {

struct FixedLambdas {
    std::vector<double> values;
};

struct HeuristicLambdas {
    std::size_t n_candidates = 10;
};

using LambdaMode = std::variant<FixedLambdas, HeuristicLambdas>;

enum class LocalOptimizer { adam, sgd };

struct LocalTrainConfig {
    std::size_t epochs = 20;
    double lr = 1e-3;
    double weight_decay = 5e-5;
    std::size_t batch = 64;
    // sgd: theta -= lr * (grad + weight_decay * theta)
    LocalOptimizer optimizer = LocalOptimizer::adam;
};

struct PrototypeConfig {
    std::string name;
    nn::MlpArchitecture arch;
    std::size_t n_clients = 1;
    double sample_rate = 1.0;
    double data_ratio = 1.0;
    LocalTrainConfig local;
    // Self-regularization weight for this student; falls back to the distill default.
    std::optional<double> gamma;
    LambdaMode lambda_mode = HeuristicLambdas{};
};

struct ClientShard {
    std::size_t client_id = 0;
    data::LabeledDataset data;
};

// ceil(sample_rate * n_clients) distinct ids, uniform without replacement, sorted.
std::vector<std::size_t> sample_clients(std::size_t n_clients, double sample_rate, Rng& rng);

// Mini-batch Adam on cross-entropy for hp.epochs passes; batches are reshuffled
// each epoch from `rng`. A batch larger than the shard is clamped to the shard.
nn::ParameterVector client_update(const nn::ParameterVector& init, const ClientShard& shard,
                                  const LocalTrainConfig& hp, Rng& rng);

// sum_k (sizes_k / sum sizes) * params_k
nn::ParameterVector fedavg_aggregate(std::span<const nn::ParameterVector> params,
                                     std::span<const std::size_t> sizes);

struct EvalResult {
    double top1 = 0.0;
    double mean_loss = 0.0;
};

EvalResult evaluate(const nn::ParameterVector& params, const data::LabeledDataset& test);

// Top-1 accuracy of precomputed logits; ties resolve to the lowest class index.
double top1_accuracy(const nn::Matrix& logits, std::span<const nn::Label> labels);

} // namespace takfl::fedcore
