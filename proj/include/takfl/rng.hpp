// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Named, seed-derived random streams. Every stochastic call site in the
// simulator owns a stream keyed by (master seed, purpose, ids...), so results
// never depend on call order or thread scheduling.
//
// The engine is std::mt19937_64 (its output sequence is fixed by the standard);
// all distributions are implemented here because the std:: distributions are
// implementation-defined.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace takfl {

uint64_t splitmix64(uint64_t x);

// FNV-1a over the bytes of a purpose tag.
uint64_t hash_tag(std::string_view tag);

// Seed for stream (master, purpose, keys...). Keys are folded in order.
uint64_t derive_seed(uint64_t master_seed, std::string_view purpose,
                     std::initializer_list<uint64_t> keys = {});

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    static Rng stream(uint64_t master_seed, std::string_view purpose,
                      std::initializer_list<uint64_t> keys = {}) {
        return Rng(derive_seed(master_seed, purpose, keys));
    }

    uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform();

    // Uniform on (0, 1); never returns 0, safe for log().
    double uniform_open();

    // Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (one value per call, the pair partner is dropped).
    double normal();

    // log of a Gamma(shape, 1) variate. Working in log space keeps tiny shapes
    // (Dirichlet alpha = 0.01) from underflowing to zero.
    double log_gamma_variate(double shape);

    // Beta(1, b) by inverse CDF: x = 1 - (1 - u)^(1/b).
    double beta_one(double b);

    // Uniform integer in [0, n). n must be > 0.
    std::size_t below(std::size_t n);

    // Fisher-Yates, back to front.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace takfl
