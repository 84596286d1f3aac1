// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "takfl/distill.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "takfl/errors.hpp"

namespace takfl::distill {

void TeacherEnsemble::validate() const {
    if (members.empty())
        throw ConfigError("teacher ensemble of prototype " + std::to_string(prototype_id) +
                          " is empty");
    for (std::size_t k = 0; k < members.size(); ++k)
        if (!(members[k].arch == arch))
            throw ShapeError("ensemble member " + std::to_string(k) + " has architecture " +
                             members[k].arch.describe() + ", expected " + arch.describe());
}

void DistillConfig::validate() const {
    if (batch == 0)
        throw ConfigError("distill.batch must be positive");
    if (!(kd_temperature > 0.0))
        throw ConfigError("distill.kd_temperature must be positive");
    if (!(self_reg_temperature > 0.0))
        throw ConfigError("distill.self_reg_temperature must be positive");
    if (!(gamma >= 0.0))
        throw ConfigError("distill.gamma must be nonnegative");
    if (!(lr >= 0.0) || !(weight_decay >= 0.0))
        throw ConfigError("distill.lr and distill.wd must be nonnegative");
}

nn::Matrix ensemble_logits(const TeacherEnsemble& ensemble, const nn::Matrix& features) {
    ensemble.validate();
    nn::Matrix sum = nn::forward(ensemble.members.front(), features);
    for (std::size_t k = 1; k < ensemble.members.size(); ++k) {
        auto z = nn::forward(ensemble.members[k], features);
        for (std::size_t i = 0; i < sum.data().size(); ++i)
            sum.data()[i] += z.data()[i];
    }
    const double k = static_cast<double>(ensemble.members.size());
    for (double& x : sum.data())
        x /= k;
    return sum;
}

nn::Matrix average_logits_target(std::span<const TeacherEnsemble> ensembles,
                                 const nn::Matrix& features) {
    if (ensembles.empty())
        throw ConfigError("no teacher ensembles");
    nn::Matrix sum;
    std::size_t count = 0;
    for (const auto& e : ensembles) {
        e.validate();
        for (const auto& member : e.members) {
            auto z = nn::forward(member, features);
            if (count == 0) {
                sum = std::move(z);
            } else {
                if (z.cols() != sum.cols())
                    throw ShapeError("teacher ensembles disagree on the number of classes");
                for (std::size_t i = 0; i < sum.data().size(); ++i)
                    sum.data()[i] += z.data()[i];
            }
            ++count;
        }
    }
    const double k = static_cast<double>(count);
    for (double& x : sum.data())
        x /= k;
    return sum;
}

nn::Matrix confidence_weighted_target(std::span<const TeacherEnsemble> ensembles,
                                      const nn::Matrix& features) {
    if (ensembles.empty())
        throw ConfigError("no teacher ensembles");
    std::vector<nn::Matrix> means;
    means.reserve(ensembles.size());
    for (const auto& e : ensembles) {
        means.push_back(ensemble_logits(e, features));
        if (means.back().cols() != means.front().cols())
            throw ShapeError("teacher ensembles disagree on the number of classes");
    }
    const std::size_t rows = features.rows();
    const std::size_t C = means.front().cols();
    nn::Matrix target(rows, C);
    std::vector<double> conf(means.size());
    for (std::size_t r = 0; r < rows; ++r) {
        double z = 0.0;
        for (std::size_t j = 0; j < means.size(); ++j) {
            auto p = nn::softmax_t(means[j].row(r), 1.0);
            conf[j] = *std::max_element(p.begin(), p.end());
            z += conf[j];
        }
        auto out = target.row(r);
        for (std::size_t j = 0; j < means.size(); ++j) {
            const double w = conf[j] / z;
            auto m = means[j].row(r);
            for (std::size_t c = 0; c < C; ++c)
                out[c] = j == 0 ? w * m[c] : out[c] + w * m[c];
        }
    }
    return target;
}

LogitCache cache_initial_logits(const nn::ParameterVector& theta_avg,
                                const data::UnlabeledDataset& public_set) {
    return {nn::forward(theta_avg, public_set.features)};
}

ObjectiveValue distill_objective(const nn::ParameterVector& student, const nn::Matrix& features,
                                 const nn::Matrix& target_logits, const nn::Matrix& cached,
                                 const DistillConfig& cfg) {
    auto trace = nn::forward_trace(student, features);
    auto kd = nn::kd_kl_loss(target_logits, trace.logits, cfg.kd_temperature);
    ObjectiveValue out;
    out.kd_loss = kd.loss;
    out.total = kd.loss;
    nn::Matrix grad = std::move(kd.grad);
    if (cfg.gamma != 0.0) {
        auto sr = nn::kd_kl_loss(cached, trace.logits, cfg.self_reg_temperature);
        out.self_reg_loss = sr.loss;
        out.total += cfg.gamma * sr.loss;
        for (std::size_t i = 0; i < grad.data().size(); ++i)
            grad.data()[i] += cfg.gamma * sr.grad.data()[i];
    }
    out.grads = nn::backward(student, trace, grad);
    return out;
}

namespace {

using TargetFn = std::function<nn::Matrix(const nn::Matrix& features)>;

nn::ParameterVector run_distillation(const nn::ParameterVector& theta_avg,
                                     const data::UnlabeledDataset& public_set,
                                     const DistillConfig& cfg, const TargetFn& target_fn,
                                     Rng& rng) {
    cfg.validate();
    nn::ParameterVector params = theta_avg;
    if (cfg.epochs == 0 || public_set.size() == 0)
        return params;

    LogitCache cache;
    if (cfg.gamma != 0.0)
        cache = cache_initial_logits(theta_avg, public_set);

    auto adam =
        nn::AdamState::init(params.size(), {.lr = cfg.lr, .weight_decay = cfg.weight_decay});
    const std::size_t batch = std::min(cfg.batch, public_set.size());
    std::vector<std::size_t> order(public_set.size());
    std::iota(order.begin(), order.end(), 0);
    nn::Matrix cached_rows;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            auto x = public_set.features.gather_rows(idx);
            auto target = target_fn(x);
            if (cfg.gamma != 0.0)
                cached_rows = cache.logits.gather_rows(idx);
            auto obj = distill_objective(params, x, target, cached_rows, cfg);
            if (!std::isfinite(obj.total))
                throw NumericError("non-finite distillation loss at epoch " +
                                   std::to_string(epoch) + ", batch offset " +
                                   std::to_string(start));
            nn::adam_step(adam, params.values, obj.grads);
        }
    }
    if (!params.all_finite())
        throw NumericError("distilled parameters became non-finite");
    return params;
}

void check_student_classes(const nn::ParameterVector& student,
                           std::span<const TeacherEnsemble> ensembles) {
    for (const auto& e : ensembles)
        if (e.arch.num_classes != student.arch.num_classes)
            throw ShapeError("teacher prototype " + std::to_string(e.prototype_id) + " has " +
                             std::to_string(e.arch.num_classes) + " classes, student has " +
                             std::to_string(student.arch.num_classes));
}

} // namespace

nn::ParameterVector distill_task(const nn::ParameterVector& theta_avg,
                                 const TeacherEnsemble& teacher,
                                 const data::UnlabeledDataset& public_set,
                                 const DistillConfig& cfg, Rng& rng) {
    teacher.validate();
    check_student_classes(theta_avg, std::span(&teacher, 1));
    return run_distillation(
        theta_avg, public_set, cfg,
        [&](const nn::Matrix& x) { return ensemble_logits(teacher, x); }, rng);
}

nn::ParameterVector feddf_distill(const nn::ParameterVector& theta_avg,
                                  std::span<const TeacherEnsemble> ensembles,
                                  const data::UnlabeledDataset& public_set,
                                  const DistillConfig& cfg, Rng& rng) {
    check_student_classes(theta_avg, ensembles);
    DistillConfig plain = cfg;
    plain.gamma = 0.0;
    return run_distillation(
        theta_avg, public_set, plain,
        [&](const nn::Matrix& x) { return average_logits_target(ensembles, x); }, rng);
}

nn::ParameterVector fedet_lite_distill(const nn::ParameterVector& theta_avg,
                                       std::span<const TeacherEnsemble> ensembles,
                                       const data::UnlabeledDataset& public_set,
                                       const DistillConfig& cfg, Rng& rng) {
    check_student_classes(theta_avg, ensembles);
    DistillConfig plain = cfg;
    plain.gamma = 0.0;
    return run_distillation(
        theta_avg, public_set, plain,
        [&](const nn::Matrix& x) { return confidence_weighted_target(ensembles, x); }, rng);
}

double mean_kl_to_cache(const nn::ParameterVector& student, const LogitCache& cache,
                        const data::UnlabeledDataset& public_set, double temperature) {
    auto logits = nn::forward(student, public_set.features);
    auto kl = nn::kd_kl_loss(cache.logits, logits, temperature);
    return kl.loss / (temperature * temperature);
}

} // namespace takfl::distill
