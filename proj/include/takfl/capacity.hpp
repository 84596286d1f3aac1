// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exact evaluation of the combinatorial capacity-allocation model for vanilla
// ensemble distillation (VED) versus task-arithmetic merging.
//
// Notation: Q1 = student capacity, W1 = dimension of the student's own
// solution basis, W12 = dimension of the student's solution for the teacher's
// data, W2 = dimension the teacher actually supplies. No floating point is
// used anywhere in this module except for display.

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

namespace takfl::capacity {

using BigInt = boost::multiprecision::cpp_int;
// Always kept in lowest terms with a positive denominator.
using Rational = boost::multiprecision::cpp_rational;

struct CapacityScenario {
    std::uint32_t q1 = 0;
    std::uint32_t w1 = 0;
    std::uint32_t w12 = 0;
    std::optional<std::uint32_t> w2;

    // Throws ConfigError unless w1 <= q1, w12 <= q1 and w2 <= w12.
    void validate() const;
};

enum class ExpectationMode { offsolution, garbage };

// Upper summation limit of the garbage expectation.
enum class GarbageBound {
    teacher_deficit, // W12 - W2, the wasted teacher-target capacity (default)
    printed,         // W12 - W1, the alternative reading of the bound
};

// Binomial coefficient; 0 when k > n.
BigInt choose(std::uint64_t n, std::uint64_t k);

// sum_{i=1}^{Q1-W1} i * C(Q1-W1, i) / (C(Q1, W1) + C(Q1, W12))
Rational ved_offsolution_expectation(const CapacityScenario& s);

// sum_{i=1}^{bound} i * C(Q1-W1, i) / (C(Q1, W1) + C(Q1, W12-W2)). Requires w2.
Rational ved_garbage_expectation(const CapacityScenario& s,
                                 GarbageBound bound = GarbageBound::teacher_deficit);

inline constexpr std::uint32_t kMaxBruteForceCapacity = 12;

// Enumerates subsets of Q1 labeled capacity slots (own basis = first W1
// slots): the denominator counts the W1-subsets plus the subsets of the
// second family's size, the numerator sums |S| over nonempty subsets S of the
// spare slots with |S| within the bound. Independent of choose().
Rational brute_force_expectation(const CapacityScenario& s, ExpectationMode mode,
                                 GarbageBound bound = GarbageBound::teacher_deficit);

struct PreservationCheck {
    std::uint64_t own_basis_misallocated = 0;
    std::uint64_t teacher_slots_filled = 0;
    std::uint64_t shared_slots = 0;
    std::uint64_t garbage_slots = 0;
};

// Toy allocation under task-arithmetic merging: the student keeps its own W1
// slots; the teacher's task vector fills min(W2, W12) slots of the W12 span,
// additively. Counts own-basis slots that lost their own component.
PreservationCheck takfl_preservation_check(const CapacityScenario& s);

// Published worked value for the garbage expectation at Q1=4, W1=W12=2, W2=1.
// Neither bound reproduces it (teacher_deficit gives 1/5, printed gives 0).
inline constexpr const char* kPublishedGarbageExample = "3/10";

std::string to_string(const Rational& r);
double to_double(const Rational& r);

} // namespace takfl::capacity
