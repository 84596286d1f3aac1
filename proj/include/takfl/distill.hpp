// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Server-side distillation over the unlabeled public set.
//
// All three distillers share one loop: start at theta_avg, shuffle the public
// set once per epoch from the caller's stream, and take one Adam step per
// mini-batch on
//
//   T_kd^2 KL(softmax(target/T_kd) || softmax(student/T_kd))
//     + gamma * T_sr^2 KL(softmax(cache/T_sr) || softmax(student/T_sr))
//
// where `cache` holds the student's logits at theta_avg. They differ only in
// how the per-batch target logits are formed.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "takfl/data.hpp"
#include "takfl/nn.hpp"
#include "takfl/rng.hpp"

namespace takfl::distill {

struct TeacherEnsemble {
    std::size_t prototype_id = 0;
    nn::MlpArchitecture arch;
    std::vector<nn::ParameterVector> members;

    void validate() const;
};

struct DistillConfig {
    std::size_t epochs = 1;
    std::size_t batch = 128;
    double lr = 1e-5;
    double weight_decay = 5e-5;
    double kd_temperature = 3.0;
    double self_reg_temperature = 20.0;
    double gamma = 0.0;
    // Reserved for the diversity term of full FedET; fedet-lite ignores it.
    double fedet_diversity = 0.0;

    void validate() const;
};

struct LogitCache {
    nn::Matrix logits;
};

// Arithmetic mean of the members' logits.
nn::Matrix ensemble_logits(const TeacherEnsemble& ensemble, const nn::Matrix& features);

// Uniform mean over every member of every ensemble (AvgLogits).
nn::Matrix average_logits_target(std::span<const TeacherEnsemble> ensembles,
                                 const nn::Matrix& features);

// Per sample: each ensemble's mean logits weighted by its max softmax
// probability (T = 1), weights normalized over ensembles.
nn::Matrix confidence_weighted_target(std::span<const TeacherEnsemble> ensembles,
                                      const nn::Matrix& features);

LogitCache cache_initial_logits(const nn::ParameterVector& theta_avg,
                                const data::UnlabeledDataset& public_set);

struct ObjectiveValue {
    double kd_loss = 0.0;
    double self_reg_loss = 0.0;
    double total = 0.0;
    std::vector<double> grads; // w.r.t. student parameters
};

// The combined distillation objective on one batch. `cached` may be empty when gamma == 0.
ObjectiveValue distill_objective(const nn::ParameterVector& student, const nn::Matrix& features,
                                 const nn::Matrix& target_logits, const nn::Matrix& cached,
                                 const DistillConfig& cfg);

// TAKFL per-teacher task: KD from one ensemble plus self-regularization.
nn::ParameterVector distill_task(const nn::ParameterVector& theta_avg,
                                 const TeacherEnsemble& teacher,
                                 const data::UnlabeledDataset& public_set,
                                 const DistillConfig& cfg, Rng& rng);

// FedDF: KD from the uniform logit average of all ensembles; gamma is forced to 0.
nn::ParameterVector feddf_distill(const nn::ParameterVector& theta_avg,
                                  std::span<const TeacherEnsemble> ensembles,
                                  const data::UnlabeledDataset& public_set,
                                  const DistillConfig& cfg, Rng& rng);

// Simplified FedET ("fedet-lite"): confidence-weighted target, gamma forced to 0.
nn::ParameterVector fedet_lite_distill(const nn::ParameterVector& theta_avg,
                                       std::span<const TeacherEnsemble> ensembles,
                                       const data::UnlabeledDataset& public_set,
                                       const DistillConfig& cfg, Rng& rng);

// Mean over the public set of KL(softmax(cache/T) || softmax(student/T)), unscaled.
double mean_kl_to_cache(const nn::ParameterVector& student, const LogitCache& cache,
                        const data::UnlabeledDataset& public_set, double temperature);

} // namespace takfl::distill
