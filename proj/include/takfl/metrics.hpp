// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "takfl/taskarith.hpp"

namespace takfl::harness {

struct RoundReport {
    std::size_t round = 0;
    std::string prototype;
    std::size_t prototype_index = 0;
    double test_top1 = 0.0;
    double test_loss = 0.0;
    // Merge coefficients applied this round (takfl only).
    std::optional<std::vector<double>> lambdas;
    // Candidate scores when coefficients were selected on validation this round.
    std::optional<taskarith::SelectionReport> selection;
    bool final_round = false;
    double wall_ms = 0.0;
};

// Fixed key order. wall_ms is omitted when include_wall_clock is false, which
// is what determinism comparisons use.
nlohmann::ordered_json to_json(const RoundReport& r, bool include_wall_clock = true);

// One JSON object per line, in the order given.
std::string metrics_jsonl(std::span<const RoundReport> reports, bool include_wall_clock = true);
void write_metrics(std::span<const RoundReport> reports, const std::filesystem::path& path);

} // namespace takfl::harness
