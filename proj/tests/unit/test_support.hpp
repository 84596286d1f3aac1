// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "takfl/nn.hpp"
#include "takfl/rng.hpp"

namespace takfl::testing {

inline bool bit_identical(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

inline bool bit_identical(const nn::ParameterVector& a, const nn::ParameterVector& b) {
    return a.arch == b.arch && bit_identical(a.values, b.values);
}

inline nn::Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    nn::Matrix m(rows, cols);
    for (double& x : m.data())
        x = scale * rng.normal();
    return m;
}

// Random MLP with at most `max_params` parameters.
inline nn::MlpArchitecture random_arch(Rng& rng, std::size_t max_params) {
    for (;;) {
        nn::MlpArchitecture a;
        a.input_dim = 1 + rng.below(8);
        a.num_classes = 2 + rng.below(5);
        const std::size_t depth = rng.below(3);
        for (std::size_t i = 0; i < depth; ++i)
            a.hidden_widths.push_back(1 + rng.below(12));
        if (a.parameter_count() <= max_params)
            return a;
    }
}

// Central differences of f at x, one coordinate at a time.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double up = f(x);
        x[i] = orig - h;
        const double down = f(x);
        x[i] = orig;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

// ||a - b|| / max(||a||, ||b||), or the absolute norm when both are tiny.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::max(std::sqrt(na), std::sqrt(nb));
    return denom < 1e-12 ? std::sqrt(diff) : std::sqrt(diff) / denom;
}

} // namespace takfl::testing
