// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "takfl/metrics.hpp"

#include <fstream>

namespace takfl::harness {

nlohmann::ordered_json to_json(const RoundReport& r, bool include_wall_clock) {
    nlohmann::ordered_json j;
    j["round"] = r.round;
    j["prototype"] = r.prototype;
    j["prototype_index"] = r.prototype_index;
    j["test_top1"] = r.test_top1;
    j["test_loss"] = r.test_loss;
    j["lambdas"] = r.lambdas ? nlohmann::ordered_json(*r.lambdas) : nlohmann::ordered_json();
    if (r.selection) {
        nlohmann::ordered_json sel;
        sel["chosen"] = r.selection->chosen;
        sel["tied"] = r.selection->tied;
        sel["tie_note"] = r.selection->tie_note;
        auto scores = nlohmann::ordered_json::array();
        for (const auto& s : r.selection->scores)
            scores.push_back({{"lambdas", s.candidate.lambdas},
                              {"validation_top1", s.validation_top1}});
        sel["scores"] = std::move(scores);
        j["selection"] = std::move(sel);
    } else {
        j["selection"] = nullptr;
    }
    j["final_round"] = r.final_round;
    if (include_wall_clock)
        j["wall_ms"] = r.wall_ms;
    return j;
}

std::string metrics_jsonl(std::span<const RoundReport> reports, bool include_wall_clock) {
    std::string out;
    for (const auto& r : reports) {
        out += to_json(r, include_wall_clock).dump();
        out += '\n';
    }
    return out;
}

void write_metrics(std::span<const RoundReport> reports, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << metrics_jsonl(reports);
    if (!out)
        throw std::runtime_error("write failed for " + path.string());
}

} // namespace takfl::harness
