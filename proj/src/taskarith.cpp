// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "takfl/taskarith.hpp"

#include <algorithm>
#include <cmath>

#include "takfl/errors.hpp"
#include "takfl/fedcore.hpp"

namespace takfl::taskarith {

void MergeCandidate::validate() const {
    if (lambdas.empty())
        throw ConfigError("merge coefficients must be nonempty");
    double sum = 0.0;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        if (!(lambdas[i] >= 0.0) || !std::isfinite(lambdas[i]))
            throw ConfigError("merge coefficient [" + std::to_string(i) +
                              "] must be a finite nonnegative number");
        sum += lambdas[i];
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance)
        throw ConfigError("merge coefficients must sum to 1 (got " + std::to_string(sum) + ")");
}

TaskVector task_vector(const nn::ParameterVector& theta_distilled,
                       const nn::ParameterVector& theta_avg, std::size_t teacher_prototype_id) {
    if (!(theta_distilled.arch == theta_avg.arch) ||
        theta_distilled.values.size() != theta_avg.values.size())
        throw ShapeError("task_vector: architecture mismatch (" +
                         theta_distilled.arch.describe() + " vs " + theta_avg.arch.describe() +
                         ")");
    TaskVector tau{theta_avg.arch, teacher_prototype_id,
                   std::vector<double>(theta_avg.values.size()), theta_distilled.values};
    for (std::size_t i = 0; i < tau.values.size(); ++i)
        tau.values[i] = theta_distilled.values[i] - theta_avg.values[i];
    return tau;
}

nn::ParameterVector merge(const nn::ParameterVector& theta_avg, std::span<const TaskVector> taus,
                          const MergeCandidate& candidate) {
    candidate.validate();
    if (taus.size() != candidate.lambdas.size())
        throw ShapeError("merge: " + std::to_string(taus.size()) + " task vectors but " +
                         std::to_string(candidate.lambdas.size()) + " coefficients");
    for (std::size_t i = 0; i < taus.size(); ++i)
        if (!(taus[i].arch == theta_avg.arch) || taus[i].values.size() != theta_avg.values.size())
            throw ShapeError("merge: task vector " + std::to_string(i) + " has architecture " +
                             taus[i].arch.describe() + ", student is " +
                             theta_avg.arch.describe());

    for (std::size_t i = 0; i < taus.size(); ++i)
        if (candidate.lambdas[i] == 1.0 && taus[i].endpoint)
            return {theta_avg.arch, *taus[i].endpoint};

    nn::ParameterVector out = theta_avg;
    for (std::size_t i = 0; i < taus.size(); ++i) {
        const double lambda = candidate.lambdas[i];
        if (lambda == 0.0)
            continue;
        for (std::size_t p = 0; p < out.values.size(); ++p) {
            const double term = lambda * taus[i].values[p];
            if (term != 0.0)
                out.values[p] += term;
        }
    }
    return out;
}

std::vector<MergeCandidate> heuristic_candidates(std::size_t num_devices,
                                                 std::size_t n_candidates, Rng& rng) {
    if (num_devices == 0)
        throw ConfigError("heuristic_candidates: num_devices must be at least 1");
    std::vector<MergeCandidate> out;
    out.reserve(1 + 3 * n_candidates);
    out.push_back({std::vector<double>(num_devices, 1.0 / static_cast<double>(num_devices))});
    for (double exponent : {1.0, 5.0, 10.0}) {
        for (std::size_t i = 0; i < n_candidates; ++i) {
            std::vector<double> c(num_devices);
            for (double& x : c)
                x = std::pow(rng.beta_one(100.0), exponent);
            std::sort(c.begin(), c.end());
            double sum = 0.0;
            for (double x : c)
                sum += x;
            if (!(sum > 0.0)) {
                // every draw underflowed; fall back to the uniform vector
                std::fill(c.begin(), c.end(), 1.0 / static_cast<double>(num_devices));
            } else {
                for (double& x : c)
                    x /= sum;
            }
            out.push_back({std::move(c)});
        }
    }
    return out;
}

std::pair<MergeCandidate, SelectionReport>
select_coefficients(const nn::ParameterVector& theta_avg, std::span<const TaskVector> taus,
                    std::span<const MergeCandidate> candidates,
                    const data::LabeledDataset& validation) {
    if (candidates.empty())
        throw ConfigError("select_coefficients: no candidates");
    if (validation.size() == 0)
        throw ConfigError("select_coefficients: empty validation set");
    SelectionReport report;
    report.scores.reserve(candidates.size());
    for (const auto& c : candidates) {
        auto merged = merge(theta_avg, taus, c);
        auto logits = nn::forward(merged, validation.features);
        report.scores.push_back({c, fedcore::top1_accuracy(logits, validation.labels)});
    }
    for (std::size_t i = 1; i < report.scores.size(); ++i)
        if (report.scores[i].validation_top1 > report.scores[report.chosen].validation_top1)
            report.chosen = i;
    const double best = report.scores[report.chosen].validation_top1;
    report.tied = static_cast<std::size_t>(
        std::count_if(report.scores.begin(), report.scores.end(),
                      [&](const CandidateScore& s) { return s.validation_top1 == best; }));
    if (report.tied > 1)
        report.tie_note = std::to_string(report.tied) +
                          " candidates tied at the best validation top-1; kept the lowest index";
    return {candidates[report.chosen], std::move(report)};
}

} // namespace takfl::taskarith
