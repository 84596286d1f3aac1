// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "doctest.h"

#include "takfl/errors.hpp"
#include "takfl/fedcore.hpp"
#include "test_support.hpp"

using namespace takfl;
using namespace takfl::fedcore;
using takfl::testing::bit_identical;
using takfl::testing::numeric_gradient;
using takfl::testing::relative_error;

namespace {

// Six parameters: a 2-input, 2-class logistic regression.
nn::ParameterVector vec(std::vector<double> v) {
    return {nn::MlpArchitecture{2, {}, 2}, std::move(v)};
}

data::LabeledDataset separable(std::size_t n, Rng& rng) {
    data::LabeledDataset ds{nn::Matrix(n, 2), std::vector<nn::Label>(n), 2};
    for (std::size_t i = 0; i < n; ++i) {
        const nn::Label y = i % 2;
        ds.labels[i] = y;
        ds.features(i, 0) = (y ? 2.0 : -2.0) + 0.3 * rng.normal();
        ds.features(i, 1) = rng.normal();
    }
    return ds;
}

double train_loss(const nn::ParameterVector& p, const data::LabeledDataset& ds) {
    return nn::cross_entropy(nn::forward(p, ds.features), ds.labels).loss;
}

} // namespace

TEST_CASE("sample_clients counts use the ceiling rule") {
    Rng rng(1);
    CHECK(sample_clients(4, 1.0, rng) == std::vector<std::size_t>{0, 1, 2, 3});
    for (int i = 0; i < 50; ++i) {
        auto two = sample_clients(4, 0.5, rng);
        CHECK(two.size() == 2);
        CHECK(std::set<std::size_t>(two.begin(), two.end()).size() == 2);
        CHECK(std::is_sorted(two.begin(), two.end()));
        CHECK(two.back() < 4);
    }
    CHECK(sample_clients(5, 0.1, rng).size() == 1);
    CHECK(sample_clients(10, 0.3, rng).size() == 3);
    CHECK(sample_clients(10, 0.31, rng).size() == 4);
    CHECK_THROWS_AS(sample_clients(0, 0.5, rng), ConfigError);
    CHECK_THROWS_AS(sample_clients(4, 0.0, rng), ConfigError);
    CHECK_THROWS_AS(sample_clients(4, 1.5, rng), ConfigError);
}

TEST_CASE("sample_clients covers every client over many rounds") {
    std::vector<int> hits(10, 0);
    for (std::uint64_t r = 0; r < 400; ++r) {
        auto rng = Rng::stream(0, "sample", {r, 0});
        for (auto k : sample_clients(10, 0.5, rng))
            ++hits[k];
    }
    for (int h : hits)
        CHECK(std::abs(h - 200) < 50);
}

TEST_CASE("client_update with zero epochs is a no-op") {
    Rng rng(2);
    nn::MlpArchitecture a{2, {3}, 2};
    auto p = nn::init_params(a, rng);
    ClientShard shard{0, separable(10, rng)};
    auto out = client_update(p, shard, {0, 1e-3, 5e-5, 64}, rng);
    CHECK(bit_identical(out, p));
}

TEST_CASE("single-sample client update is one Adam step on the cross-entropy gradient") {
    Rng rng(3);
    nn::MlpArchitecture lr{3, {}, 4};
    auto p = nn::init_params(lr, rng);
    data::LabeledDataset one{testing::random_matrix(1, 3, rng), {2}, 4};

    auto trace = nn::forward_trace(p, one.features);
    auto grads = nn::backward(p, trace, nn::cross_entropy(trace.logits, one.labels).grad);
    auto fd = numeric_gradient(
        [&](const std::vector<double>& v) {
            return train_loss(nn::ParameterVector{lr, v}, one);
        },
        p.values);
    CHECK(relative_error(grads, fd) <= 1e-6);

    auto expected = p;
    auto state = nn::AdamState::init(p.size(), {.lr = 0.01, .weight_decay = 5e-5});
    nn::adam_step(state, expected.values, grads);

    auto got = client_update(p, {0, one}, {1, 0.01, 5e-5, 64}, rng);
    CHECK(bit_identical(got, expected));
}

TEST_CASE("sgd client update is a plain gradient step with weight decay") {
    Rng rng(4);
    nn::MlpArchitecture lr{3, {2}, 4};
    auto p = nn::init_params(lr, rng);
    data::LabeledDataset one{testing::random_matrix(1, 3, rng), {1}, 4};
    auto trace = nn::forward_trace(p, one.features);
    auto grads = nn::backward(p, trace, nn::cross_entropy(trace.logits, one.labels).grad);

    LocalTrainConfig hp{1, 0.05, 0.01, 64, LocalOptimizer::sgd};
    auto got = client_update(p, {0, one}, hp, rng);
    for (std::size_t i = 0; i < p.size(); ++i)
        CHECK(got.values[i] == doctest::Approx(p.values[i] - 0.05 * (grads[i] + 0.01 * p.values[i]))
                                   .epsilon(1e-15));
}

TEST_CASE("local training reduces the training loss on separable data") {
    Rng rng(4);
    auto ds = separable(50, rng);
    nn::MlpArchitecture a{2, {}, 2};
    auto p = nn::init_params(a, rng);
    const double before = train_loss(p, ds);
    auto q = client_update(p, {0, ds}, {20, 1e-3, 5e-5, 64}, rng);
    CHECK(train_loss(q, ds) < before);
}

TEST_CASE("client_update is deterministic per stream") {
    Rng data_rng(5);
    auto ds = separable(40, data_rng);
    nn::MlpArchitecture a{2, {4}, 2};
    auto init_rng = Rng::stream(1, "init", {0});
    auto p = nn::init_params(a, init_rng);
    auto r1 = Rng::stream(1, "client", {3, 0, 7});
    auto r2 = Rng::stream(1, "client", {3, 0, 7});
    LocalTrainConfig hp{3, 1e-2, 5e-5, 8};
    CHECK(bit_identical(client_update(p, {7, ds}, hp, r1), client_update(p, {7, ds}, hp, r2)));
}

TEST_CASE("client_update surfaces non-finite losses") {
    Rng rng(6);
    nn::MlpArchitecture a{2, {}, 2};
    auto p = nn::init_params(a, rng);
    p.values[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(client_update(p, {0, separable(4, rng)}, {1, 1e-3, 0, 4}, rng), NumericError);
}

TEST_CASE("fedavg_aggregate examples") {
    auto a = vec({1, 1, 1, 1, 1, 1});
    CHECK(bit_identical(fedavg_aggregate(std::vector{a}, std::vector<std::size_t>{5}), a));

    auto m = fedavg_aggregate(std::vector{vec({1, 1, 0, 0, 0, 0}), vec({3, 3, 0, 0, 0, 0})},
                              std::vector<std::size_t>{1, 1});
    CHECK(m.values[0] == 2.0);
    CHECK(m.values[1] == 2.0);

    auto w = fedavg_aggregate(std::vector{vec({0, 0, 0, 0, 0, 0}), vec({4, 8, 0, 0, 0, 0})},
                              std::vector<std::size_t>{3, 1});
    CHECK(w.values[0] == 1.0);
    CHECK(w.values[1] == 2.0);

    CHECK_THROWS_AS(fedavg_aggregate(std::vector{a}, std::vector<std::size_t>{}), ShapeError);
    CHECK_THROWS_AS(fedavg_aggregate(std::vector<nn::ParameterVector>{}, std::vector<std::size_t>{}),
                    ConfigError);
    CHECK_THROWS_AS(fedavg_aggregate(std::vector{a, a}, std::vector<std::size_t>{0, 0}), ConfigError);
    nn::ParameterVector other{{1, {}, 3}, std::vector<double>(6)};
    CHECK_THROWS_AS(fedavg_aggregate(std::vector{a, other}, std::vector<std::size_t>{1, 1}),
                    ShapeError);
}

TEST_CASE("fedavg_aggregate: equal inputs are returned exactly, order does not matter") {
    Rng rng(7);
    nn::MlpArchitecture arch{5, {7}, 3};
    for (int trial = 0; trial < 50; ++trial) {
        auto base = nn::init_params(arch, rng);
        for (double& v : base.values)
            v += rng.normal();
        const std::size_t K = 2 + rng.below(6);
        std::vector<nn::ParameterVector> same(K, base);
        std::vector<std::size_t> sizes(K);
        for (auto& s : sizes)
            s = 1 + rng.below(1000);
        CHECK(bit_identical(fedavg_aggregate(same, sizes), base));

        std::vector<nn::ParameterVector> models;
        for (std::size_t k = 0; k < K; ++k) {
            auto m = base;
            for (double& v : m.values)
                v = rng.normal() * 10.0;
            models.push_back(m);
        }
        auto ref = fedavg_aggregate(models, sizes);
        std::vector<std::size_t> perm(K);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(std::span(perm));
        std::vector<nn::ParameterVector> pm;
        std::vector<std::size_t> ps;
        for (auto i : perm) {
            pm.push_back(models[i]);
            ps.push_back(sizes[i]);
        }
        auto permuted = fedavg_aggregate(pm, ps);
        for (std::size_t i = 0; i < ref.size(); ++i)
            CHECK(std::abs(ref.values[i] - permuted.values[i]) <= 1e-15 * std::max(1.0, std::abs(ref.values[i])));
    }
}

TEST_CASE("evaluate and top1_accuracy") {
    // Identity logistic regression on one-hot inputs memorizes its set.
    nn::MlpArchitecture a{3, {}, 3};
    nn::ParameterVector id{a, {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0}};
    data::LabeledDataset eye{nn::Matrix(3, 3, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1}), {0, 1, 2}, 3};
    CHECK(evaluate(id, eye).top1 == 1.0);

    // Constant predictor on a balanced 10-class set: all logits tie, class 0 wins.
    nn::MlpArchitecture c{2, {}, 10};
    data::LabeledDataset balanced{nn::Matrix(100, 2, 0.5), {}, 10};
    for (std::size_t i = 0; i < 100; ++i)
        balanced.labels.push_back(i % 10);
    auto res = evaluate(nn::ParameterVector::zeros(c), balanced);
    CHECK(res.top1 == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(res.mean_loss == doctest::Approx(std::log(10.0)).epsilon(1e-14));

    // Hand-counted fixture: predictions 1, 0, 2, 2, 0 against labels 1, 0, 1, 2, 1.
    nn::Matrix logits(5, 3, std::vector<double>{0.1, 0.9, 0.0,
                                                2.0, 1.0, 1.0,
                                                0.0, 0.3, 0.4,
                                                -1.0, -2.0, 5.0,
                                                0.2, 0.2, 0.1});
    CHECK(top1_accuracy(logits, std::vector<nn::Label>{1, 0, 1, 2, 1}) == doctest::Approx(0.6));
    // The last row ties classes 0 and 1; the lower index is predicted.
    CHECK(top1_accuracy(logits, std::vector<nn::Label>{1, 0, 1, 2, 0}) == doctest::Approx(0.8));
}
