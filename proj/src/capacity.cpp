// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "takfl/capacity.hpp"

#include <bit>
#include <vector>

#include "takfl/errors.hpp"

namespace takfl::capacity {

void CapacityScenario::validate() const {
    if (w1 > q1)
        throw ConfigError("capacity: w1 (" + std::to_string(w1) + ") exceeds q1 (" +
                          std::to_string(q1) + ")");
    if (w12 > q1)
        throw ConfigError("capacity: w12 (" + std::to_string(w12) + ") exceeds q1 (" +
                          std::to_string(q1) + ")");
    if (w2 && *w2 > w12)
        throw ConfigError("capacity: w2 (" + std::to_string(*w2) + ") exceeds w12 (" +
                          std::to_string(w12) + ")");
}

BigInt choose(std::uint64_t n, std::uint64_t k) {
    if (k > n)
        return 0;
    if (k > n - k)
        k = n - k;
    BigInt r = 1;
    // r stays integral: after step i it equals C(n - k + i, i)
    for (std::uint64_t i = 1; i <= k; ++i) {
        r *= n - k + i;
        r /= i;
    }
    return r;
}

namespace {

Rational weighted_count_sum(std::uint64_t spare, std::int64_t upper, const BigInt& denominator) {
    BigInt num = 0;
    for (std::int64_t i = 1; i <= upper; ++i)
        num += BigInt(i) * choose(spare, static_cast<std::uint64_t>(i));
    return Rational(num, denominator);
}

std::int64_t garbage_upper(const CapacityScenario& s, GarbageBound bound) {
    return bound == GarbageBound::teacher_deficit
               ? static_cast<std::int64_t>(s.w12) - static_cast<std::int64_t>(*s.w2)
               : static_cast<std::int64_t>(s.w12) - static_cast<std::int64_t>(s.w1);
}

void require_w2(const CapacityScenario& s) {
    if (!s.w2)
        throw ConfigError("capacity: the garbage expectation needs w2");
}

} // namespace

Rational ved_offsolution_expectation(const CapacityScenario& s) {
    s.validate();
    const BigInt denom = choose(s.q1, s.w1) + choose(s.q1, s.w12);
    return weighted_count_sum(s.q1 - s.w1, static_cast<std::int64_t>(s.q1 - s.w1), denom);
}

Rational ved_garbage_expectation(const CapacityScenario& s, GarbageBound bound) {
    s.validate();
    require_w2(s);
    const BigInt denom = choose(s.q1, s.w1) + choose(s.q1, s.w12 - *s.w2);
    return weighted_count_sum(s.q1 - s.w1, garbage_upper(s, bound), denom);
}

Rational brute_force_expectation(const CapacityScenario& s, ExpectationMode mode,
                                 GarbageBound bound) {
    s.validate();
    if (s.q1 > kMaxBruteForceCapacity)
        throw ConfigError("capacity: brute force is limited to q1 <= " +
                          std::to_string(kMaxBruteForceCapacity));
    std::uint32_t second_family = s.w12;
    std::int64_t upper = static_cast<std::int64_t>(s.q1);
    if (mode == ExpectationMode::garbage) {
        require_w2(s);
        second_family = s.w12 - *s.w2;
        upper = garbage_upper(s, bound);
    }
    const std::uint32_t own_mask = (1u << s.w1) - 1u;
    std::uint64_t denom = 0;
    std::uint64_t num = 0;
    for (std::uint32_t mask = 0; mask < (1u << s.q1); ++mask) {
        const auto size = static_cast<std::uint32_t>(std::popcount(mask));
        if (size == s.w1)
            ++denom;
        if (size == second_family)
            ++denom;
        if ((mask & own_mask) == 0 && size >= 1 && static_cast<std::int64_t>(size) <= upper)
            num += size;
    }
    return Rational(BigInt(num), BigInt(denom));
}

PreservationCheck takfl_preservation_check(const CapacityScenario& s) {
    s.validate();
    struct Slot {
        bool own_basis = false;    // part of W1
        bool teacher_span = false; // part of W12
        bool own_component = false;
        bool teacher_component = false;
    };
    std::vector<Slot> slots(s.q1);
    for (std::uint32_t i = 0; i < s.w1; ++i) {
        slots[i].own_basis = true;
        slots[i].own_component = true;
    }
    // W12 is laid over the leading slots so it shares as much as possible with W1.
    for (std::uint32_t i = 0; i < s.w12; ++i)
        slots[i].teacher_span = true;

    // Merging adds lambda * tau along the teacher's directions; nothing already
    // present is overwritten.
    const std::uint32_t fill = s.w2 ? std::min(*s.w2, s.w12) : s.w12;
    for (std::uint32_t i = 0; i < fill; ++i)
        slots[i].teacher_component = true;

    PreservationCheck out;
    for (const auto& slot : slots) {
        if (slot.own_basis && !slot.own_component)
            ++out.own_basis_misallocated;
        if (slot.teacher_component)
            ++out.teacher_slots_filled;
        if (slot.own_component && slot.teacher_component)
            ++out.shared_slots;
        if (slot.teacher_component && !slot.own_basis && !slot.teacher_span)
            ++out.garbage_slots;
    }
    return out;
}

std::string to_string(const Rational& r) {
    const BigInt num = boost::multiprecision::numerator(r);
    const BigInt den = boost::multiprecision::denominator(r);
    if (den == 1)
        return num.str();
    return num.str() + "/" + den.str();
}

double to_double(const Rational& r) {
    return r.convert_to<double>();
}

} // namespace takfl::capacity
