// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "takfl/fedcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "takfl/errors.hpp"

namespace takfl::fedcore {

std::vector<std::size_t> sample_clients(std::size_t n_clients, double sample_rate, Rng& rng) {
    if (!(sample_rate > 0.0 && sample_rate <= 1.0))
        throw ConfigError("sample_rate must lie in (0, 1]");
    if (n_clients == 0)
        throw ConfigError("n_clients must be at least 1");
    // 1e-9 slack so 0.3 * 10 stays 3 instead of rounding up to 4.
    auto k = static_cast<std::size_t>(
        std::ceil(sample_rate * static_cast<double>(n_clients) - 1e-9));
    k = std::clamp<std::size_t>(k, 1, n_clients);
    std::vector<std::size_t> ids(n_clients);
    std::iota(ids.begin(), ids.end(), 0);
    // partial Fisher-Yates: the first k slots are the sample
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + rng.below(n_clients - i);
        std::swap(ids[i], ids[j]);
    }
    ids.resize(k);
    std::sort(ids.begin(), ids.end());
    return ids;
}

nn::ParameterVector client_update(const nn::ParameterVector& init, const ClientShard& shard,
                                  const LocalTrainConfig& hp, Rng& rng) {
    const auto& ds = shard.data;
    if (ds.size() == 0)
        throw ConfigError("client " + std::to_string(shard.client_id) + " has an empty shard");
    if (hp.batch == 0)
        throw ConfigError("local batch size must be positive");
    nn::ParameterVector params = init;
    if (hp.epochs == 0)
        return params;

    auto adam = nn::AdamState::init(params.size(), {.lr = hp.lr, .weight_decay = hp.weight_decay});
    const std::size_t batch = std::min(hp.batch, ds.size());
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<nn::Label> labels;
    for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            auto x = ds.features.gather_rows(idx);
            labels.clear();
            for (std::size_t i : idx)
                labels.push_back(ds.labels[i]);
            auto trace = nn::forward_trace(params, x);
            auto ce = nn::cross_entropy(trace.logits, labels);
            if (!std::isfinite(ce.loss))
                throw NumericError("non-finite local loss on client " +
                                   std::to_string(shard.client_id));
            auto grads = nn::backward(params, trace, ce.grad);
            if (hp.optimizer == LocalOptimizer::adam) {
                nn::adam_step(adam, params.values, grads);
            } else {
                for (std::size_t i = 0; i < grads.size(); ++i)
                    params.values[i] -= hp.lr * (grads[i] + hp.weight_decay * params.values[i]);
            }
        }
    }
    return params;
}

nn::ParameterVector fedavg_aggregate(std::span<const nn::ParameterVector> params,
                                     std::span<const std::size_t> sizes) {
    if (params.empty())
        throw ConfigError("fedavg_aggregate: no models to aggregate");
    if (params.size() != sizes.size())
        throw ShapeError("fedavg_aggregate: " + std::to_string(params.size()) + " models but " +
                         std::to_string(sizes.size()) + " sizes");
    const auto& arch = params.front().arch;
    double total = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!(params[k].arch == arch))
            throw ShapeError("fedavg_aggregate: model " + std::to_string(k) + " has architecture " +
                             params[k].arch.describe() + ", expected " + arch.describe());
        if (params[k].values.size() != arch.parameter_count())
            throw ShapeError("fedavg_aggregate: model " + std::to_string(k) + " has wrong length");
        if (sizes[k] == 0)
            throw ConfigError("fedavg_aggregate: dataset size must be positive");
        total += static_cast<double>(sizes[k]);
    }
    if (params.size() == 1)
        return params.front();

    nn::ParameterVector out{arch, std::vector<double>(arch.parameter_count(), 0.0)};
    // Coordinates whose inputs all agree are copied verbatim. Otherwise the
    // weighted terms are summed in ascending order, which makes the result
    // independent of the order the models arrive in.
    std::vector<double> terms(params.size());
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const double first = params.front().values[i];
        bool same = true;
        for (std::size_t k = 0; k < params.size(); ++k) {
            const double v = params[k].values[i];
            same = same && v == first;
            terms[k] = (static_cast<double>(sizes[k]) / total) * v;
        }
        if (same) {
            out.values[i] = first;
            continue;
        }
        std::sort(terms.begin(), terms.end());
        double acc = 0.0;
        for (double t : terms)
            acc += t;
        out.values[i] = acc;
    }
    return out;
}

double top1_accuracy(const nn::Matrix& logits, std::span<const nn::Label> labels) {
    if (logits.rows() != labels.size())
        throw ShapeError("top1_accuracy: label count does not match logits");
    if (labels.empty())
        throw ConfigError("top1_accuracy: empty evaluation set");
    std::size_t correct = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r)
        correct += nn::argmax(logits.row(r)) == labels[r] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

EvalResult evaluate(const nn::ParameterVector& params, const data::LabeledDataset& test) {
    if (test.size() == 0)
        throw ConfigError("evaluate: empty test set");
    auto logits = nn::forward(params, test.features);
    auto ce = nn::cross_entropy(logits, test.labels);
    return {top1_accuracy(logits, test.labels), ce.loss};
}

} // namespace takfl::fedcore
