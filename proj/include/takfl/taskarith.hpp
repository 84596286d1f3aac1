// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Task vectors, simplex-constrained merging and merge-coefficient selection.
// Coefficient lists are ordered smallest prototype first.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "takfl/data.hpp"
#include "takfl/nn.hpp"
#include "takfl/rng.hpp"

namespace takfl::taskarith {

inline constexpr double kSimplexTolerance = 1e-9;

struct TaskVector {
    nn::MlpArchitecture arch;
    std::size_t teacher_prototype_id = 0;
    std::vector<double> values;
    // theta_distilled, kept when the vector comes from task_vector() so that a
    // one-hot merge returns it verbatim instead of theta_avg + (theta_d - theta_avg).
    std::optional<std::vector<double>> endpoint;
};

struct MergeCandidate {
    std::vector<double> lambdas;

    // Throws ConfigError on negative entries or |sum - 1| > kSimplexTolerance.
    void validate() const;
};

struct CandidateScore {
    MergeCandidate candidate;
    double validation_top1 = 0.0;
};

struct SelectionReport {
    std::vector<CandidateScore> scores;
    std::size_t chosen = 0;
    // Number of candidates that tied with the winner (the lowest index is kept).
    std::size_t tied = 1;
    std::string tie_note;
};

TaskVector task_vector(const nn::ParameterVector& theta_distilled,
                       const nn::ParameterVector& theta_avg, std::size_t teacher_prototype_id = 0);

// theta_avg + sum_i lambda_i * tau_i
nn::ParameterVector merge(const nn::ParameterVector& theta_avg, std::span<const TaskVector> taus,
                          const MergeCandidate& candidate);

// Uniform candidate first, then for exponent in {1, 5, 10} and n_candidates
// draws each: num_devices Beta(1, 100) samples (inverse CDF, drawn in order
// from `rng`), raised to the exponent, sorted ascending and normalized.
std::vector<MergeCandidate> heuristic_candidates(std::size_t num_devices,
                                                 std::size_t n_candidates, Rng& rng);

// Validation top-1 of every merged candidate; argmax with lowest-index tie-break.
std::pair<MergeCandidate, SelectionReport>
select_coefficients(const nn::ParameterVector& theta_avg, std::span<const TaskVector> taus,
                    std::span<const MergeCandidate> candidates,
                    const data::LabeledDataset& validation);

} // namespace takfl::taskarith
