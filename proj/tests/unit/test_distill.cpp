// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include "doctest.h"

#include "takfl/distill.hpp"
#include "takfl/errors.hpp"
#include "test_support.hpp"

using namespace takfl;
using namespace takfl::distill;
using takfl::testing::bit_identical;
using takfl::testing::numeric_gradient;
using takfl::testing::random_matrix;
using takfl::testing::relative_error;

namespace {

// Logistic regression whose logits are `bias` for every input.
nn::ParameterVector constant_model(std::size_t input_dim, std::vector<double> bias) {
    nn::MlpArchitecture a{input_dim, {}, bias.size()};
    auto p = nn::ParameterVector::zeros(a);
    std::copy(bias.begin(), bias.end(), p.values.end() - static_cast<std::ptrdiff_t>(bias.size()));
    return p;
}

nn::ParameterVector perturbed(const nn::MlpArchitecture& a, Rng& rng, double scale) {
    auto p = nn::init_params(a, rng);
    for (double& v : p.values)
        v += scale * rng.normal();
    return p;
}

data::UnlabeledDataset public_set(std::size_t n, std::size_t dim, Rng& rng) {
    return {random_matrix(n, dim, rng)};
}

DistillConfig quick_config() {
    DistillConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 16;
    cfg.lr = 1e-2;
    cfg.weight_decay = 0.0;
    return cfg;
}

} // namespace

TEST_CASE("ensemble_logits is the member mean") {
    Rng rng(1);
    auto x = random_matrix(3, 2, rng);
    TeacherEnsemble single{0, {2, {}, 2}, {constant_model(2, {0.5, -1.0})}};
    CHECK(ensemble_logits(single, x) == nn::forward(single.members[0], x));

    TeacherEnsemble two{0, {2, {}, 2}, {constant_model(2, {1, 0}), constant_model(2, {3, 2})}};
    auto z = ensemble_logits(two, x);
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(z(r, 0) == 2.0);
        CHECK(z(r, 1) == 1.0);
    }

    nn::MlpArchitecture a{2, {5}, 3};
    auto m = perturbed(a, rng, 0.3);
    TeacherEnsemble many{0, a, std::vector<nn::ParameterVector>(7, m)};
    auto zm = ensemble_logits(many, x);
    auto z1 = nn::forward(m, x);
    for (std::size_t i = 0; i < zm.data().size(); ++i)
        CHECK(std::abs(zm.data()[i] - z1.data()[i]) <= 1e-12);

    TeacherEnsemble empty{0, a, {}};
    CHECK_THROWS_AS(ensemble_logits(empty, x), ConfigError);
}

TEST_CASE("logit cache equals the forward pass at theta_avg") {
    Rng rng(2);
    nn::MlpArchitecture a{4, {6}, 3};
    auto pub = public_set(20, 4, rng);
    auto zero = cache_initial_logits(nn::ParameterVector::zeros(a), pub);
    for (double v : zero.logits.data())
        CHECK(v == 0.0);
    auto theta = perturbed(a, rng, 0.2);
    auto c1 = cache_initial_logits(theta, pub);
    auto c2 = cache_initial_logits(theta, pub);
    CHECK(c1.logits == c2.logits);
    auto f = nn::forward(theta, pub.features);
    for (std::size_t r = 0; r < f.rows(); ++r)
        for (std::size_t c = 0; c < f.cols(); ++c)
            CHECK(c1.logits(r, c) == f(r, c));
}

TEST_CASE("combined objective gradient matches finite differences") {
    Rng rng(3);
    for (double gamma : {0.0, 0.1, 1.0, 10.0}) {
        for (int trial = 0; trial < 5; ++trial) {
            auto arch = testing::random_arch(rng, 500);
            auto student = perturbed(arch, rng, 0.1);
            const std::size_t B = 1 + rng.below(6);
            auto x = random_matrix(B, arch.input_dim, rng);
            auto target = random_matrix(B, arch.num_classes, rng, 2.0);
            auto cached = random_matrix(B, arch.num_classes, rng, 2.0);
            DistillConfig cfg;
            cfg.gamma = gamma;
            auto v = distill_objective(student, x, target, cached, cfg);
            CHECK(v.total == doctest::Approx(v.kd_loss + gamma * v.self_reg_loss));
            auto fd = numeric_gradient(
                [&](const std::vector<double>& p) {
                    return distill_objective(nn::ParameterVector{arch, p}, x, target, cached, cfg)
                        .total;
                },
                student.values);
            CHECK(relative_error(v.grads, fd) <= 1e-5);
        }
    }
}

TEST_CASE("objective gradient vanishes when student, target and cache agree") {
    Rng rng(4);
    nn::MlpArchitecture a{3, {4}, 3};
    auto student = perturbed(a, rng, 0.2);
    auto x = random_matrix(8, 3, rng);
    auto z = nn::forward(student, x);
    for (double gamma : {0.0, 0.1, 1.0, 10.0}) {
        DistillConfig cfg;
        cfg.gamma = gamma;
        auto v = distill_objective(student, x, z, z, cfg);
        CHECK(v.total == 0.0);
        for (double g : v.grads)
            CHECK(g == 0.0);
    }
}

TEST_CASE("distill_task fixed points") {
    Rng rng(5);
    nn::MlpArchitecture a{3, {4}, 3};
    auto theta = perturbed(a, rng, 0.2);
    auto pub = public_set(40, 3, rng);
    TeacherEnsemble self{0, a, {theta}};
    auto cfg = quick_config();
    auto r1 = Rng::stream(0, "distill", {0, 0, 0});
    CHECK(bit_identical(distill_task(theta, self, pub, cfg, r1), theta));

    auto teacher = perturbed(a, rng, 0.5);
    auto zero_epochs = cfg;
    zero_epochs.epochs = 0;
    auto r2 = Rng::stream(0, "distill", {0, 0, 1});
    CHECK(bit_identical(distill_task(theta, {1, a, {teacher}}, pub, zero_epochs, r2), theta));

    auto r3 = Rng::stream(0, "distill", {0, 0, 1});
    auto moved = distill_task(theta, {1, a, {teacher}}, pub, cfg, r3);
    CHECK_FALSE(bit_identical(moved, theta));
    CHECK(moved.all_finite());
}

TEST_CASE("distillation moves the student toward the teacher") {
    Rng rng(6);
    nn::MlpArchitecture a{3, {8}, 4};
    auto theta = perturbed(a, rng, 0.2);
    auto teacher = perturbed(a, rng, 0.8);
    auto pub = public_set(64, 3, rng);
    TeacherEnsemble ens{1, a, {teacher}};
    auto target = ensemble_logits(ens, pub.features);
    DistillConfig cfg = quick_config();
    cfg.epochs = 20;
    const double before = distill_objective(theta, pub.features, target, {}, cfg).kd_loss;
    auto r = Rng::stream(1, "distill", {0, 0, 1});
    auto after = distill_task(theta, ens, pub, cfg, r);
    CHECK(distill_objective(after, pub.features, target, {}, cfg).kd_loss < before);
}

TEST_CASE("distill_task is deterministic under a fixed stream") {
    Rng rng(7);
    nn::MlpArchitecture a{3, {5}, 3};
    auto theta = perturbed(a, rng, 0.2);
    TeacherEnsemble ens{1, a, {perturbed(a, rng, 0.5), perturbed(a, rng, 0.5)}};
    auto pub = public_set(50, 3, rng);
    auto cfg = quick_config();
    cfg.gamma = 1.0;
    auto r1 = Rng::stream(3, "distill", {2, 0, 1});
    auto r2 = Rng::stream(3, "distill", {2, 0, 1});
    CHECK(bit_identical(distill_task(theta, ens, pub, cfg, r1), distill_task(theta, ens, pub, cfg, r2)));
}

TEST_CASE("feddf with one prototype equals the per-teacher task without self-regularization") {
    Rng rng(8);
    nn::MlpArchitecture a{3, {5}, 3};
    auto theta = perturbed(a, rng, 0.2);
    std::vector<TeacherEnsemble> ens{{0, a, {perturbed(a, rng, 0.5), perturbed(a, rng, 0.5)}}};
    auto pub = public_set(50, 3, rng);
    auto cfg = quick_config();
    auto r1 = Rng::stream(3, "distill", {1, 0, 0});
    auto r2 = Rng::stream(3, "distill", {1, 0, 0});
    auto r3 = Rng::stream(3, "distill", {1, 0, 0});
    const auto task = distill_task(theta, ens[0], pub, cfg, r1);
    CHECK(bit_identical(feddf_distill(theta, ens, pub, cfg, r2), task));
    CHECK(bit_identical(fedet_lite_distill(theta, ens, pub, cfg, r3), task));

    auto zero = cfg;
    zero.epochs = 0;
    auto r4 = Rng::stream(3, "distill", {1, 0, 0});
    CHECK(bit_identical(feddf_distill(theta, ens, pub, zero, r4), theta));
}

TEST_CASE("feddf and fedet-lite ignore gamma") {
    Rng rng(9);
    nn::MlpArchitecture a{3, {}, 3};
    auto theta = perturbed(a, rng, 0.2);
    std::vector<TeacherEnsemble> ens{{0, a, {perturbed(a, rng, 0.5)}}, {1, a, {perturbed(a, rng, 0.5)}}};
    auto pub = public_set(30, 3, rng);
    auto plain = quick_config();
    auto reg = plain;
    reg.gamma = 10.0;
    for (auto fn : {&feddf_distill, &fedet_lite_distill}) {
        auto r1 = Rng::stream(4, "distill", {0, 0, 0});
        auto r2 = Rng::stream(4, "distill", {0, 0, 0});
        CHECK(bit_identical(fn(theta, ens, pub, plain, r1), fn(theta, ens, pub, reg, r2)));
    }
}

TEST_CASE("feddf leaves the student unchanged when the teacher average equals its logits") {
    // Student logits are identically zero; the two teachers produce exact negatives.
    nn::MlpArchitecture a{2, {}, 3};
    auto student = nn::ParameterVector::zeros(a);
    nn::ParameterVector plus{a, {0.5, -0.25, 1.0, 0.75, 0.125, -2.0, 0.25, -0.5, 1.5}};
    auto minus = plus;
    for (double& v : minus.values)
        v = -v;
    std::vector<TeacherEnsemble> ens{{0, a, {plus}}, {1, a, {minus}}};
    Rng rng(10);
    auto pub = public_set(32, 2, rng);
    auto cfg = quick_config();
    cfg.epochs = 1;
    cfg.batch = 32;
    auto r = Rng::stream(0, "distill", {0, 0, 0});
    CHECK(bit_identical(feddf_distill(student, ens, pub, cfg, r), student));
}

TEST_CASE("confidence-weighted target") {
    Rng rng(11);
    auto x = random_matrix(5, 2, rng);
    // Equal confidence: each prototype's logits are a permutation of the others'.
    std::vector<TeacherEnsemble> equal{{0, {2, {}, 3}, {constant_model(2, {2, 0, 1})}},
                                       {1, {2, {}, 3}, {constant_model(2, {0, 1, 2})}},
                                       {2, {2, {}, 3}, {constant_model(2, {1, 2, 0})}}};
    auto cw = confidence_weighted_target(equal, x);
    auto avg = average_logits_target(equal, x);
    for (std::size_t i = 0; i < cw.data().size(); ++i)
        CHECK(std::abs(cw.data()[i] - avg.data()[i]) <= 1e-12);

    // One near-one-hot prototype, two uniform ones: in probability space the
    // target collapses onto the confident prototype.
    std::vector<TeacherEnsemble> skewed{{0, {2, {}, 3}, {constant_model(2, {0, 0, 0})}},
                                        {1, {2, {}, 3}, {constant_model(2, {60, 0, 0})}},
                                        {2, {2, {}, 3}, {constant_model(2, {0, 0, 0})}}};
    auto t = confidence_weighted_target(skewed, x);
    auto confident = nn::forward(skewed[1].members[0], x);
    for (std::size_t r = 0; r < t.rows(); ++r) {
        auto pt = nn::softmax_t(t.row(r), 1.0);
        auto pc = nn::softmax_t(confident.row(r), 1.0);
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(std::abs(pt[c] - pc[c]) <= 1e-6);
    }

    std::vector<TeacherEnsemble> single{skewed[1]};
    CHECK(confidence_weighted_target(single, x) == average_logits_target(single, x));
}

TEST_CASE("self-regularization keeps the student closer to its cached logits") {
    Rng rng(12);
    nn::MlpArchitecture a{4, {16}, 5};
    auto theta = perturbed(a, rng, 0.3);
    TeacherEnsemble ens{1, a, {perturbed(a, rng, 1.0)}};
    auto pub = public_set(128, 4, rng);
    auto cache = cache_initial_logits(theta, pub);
    auto cfg = quick_config();
    cfg.epochs = 10;
    double previous = std::numeric_limits<double>::infinity();
    for (double gamma : {0.0, 0.1, 1.0, 10.0}) {
        cfg.gamma = gamma;
        auto r = Rng::stream(5, "distill", {0, 0, 1});
        auto out = distill_task(theta, ens, pub, cfg, r);
        const double kl = mean_kl_to_cache(out, cache, pub, cfg.self_reg_temperature);
        CHECK(kl <= previous);
        previous = kl;
    }
}

TEST_CASE("distillation rejects bad inputs") {
    Rng rng(13);
    nn::MlpArchitecture a{3, {}, 3};
    auto theta = perturbed(a, rng, 0.2);
    auto pub = public_set(10, 3, rng);
    DistillConfig bad_t;
    bad_t.kd_temperature = 0.0;
    CHECK_THROWS_AS(distill_task(theta, {0, a, {theta}}, pub, bad_t, rng), ConfigError);

    nn::MlpArchitecture other{3, {}, 4};
    TeacherEnsemble mismatched{0, other, {nn::ParameterVector::zeros(other)}};
    CHECK_THROWS_AS(distill_task(theta, mismatched, pub, quick_config(), rng), ShapeError);

    auto broken = theta;
    broken.values[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(distill_task(broken, {0, a, {theta}}, pub, quick_config(), rng), NumericError);
}
