// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Declarative experiment configuration (JSON document, schema in docs/config.md).

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "takfl/data.hpp"
#include "takfl/distill.hpp"
#include "takfl/fedcore.hpp"

namespace takfl::harness {

enum class Method { fedavg, feddf, fedet_lite, takfl };

std::string_view method_name(Method m);

struct CsvSource {
    std::filesystem::path path;
    bool has_header = false;
    std::filesystem::path public_path;
    bool public_has_header = false;
    bool public_has_label = true;
};

struct PublicSpec {
    std::size_t samples_per_class = 200;
    double center_shift = 0.5;
};

struct DataConfig {
    std::variant<data::SyntheticSpec, CsvSource> source = data::SyntheticSpec{};
    double alpha = 0.3;
    double val_fraction = 0.05;
    std::size_t test_count = 1000;
    PublicSpec public_set;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::size_t rounds = 10;
    Method method = Method::takfl;
    // Enables the gamma > 0 self-regularization path for takfl.
    bool takfl_self_reg = false;
    // Select lambdas in round 0 only and reuse them afterwards.
    bool freeze_lambda = false;
    std::vector<fedcore::PrototypeConfig> prototypes;
    DataConfig data;
    distill::DistillConfig distill;

    // Self-regularization weight actually used for student `i` under takfl.
    double effective_gamma(std::size_t i) const;

    // Fills input_dim / num_classes of every prototype architecture.
    void resolve_architectures(std::size_t input_dim, std::size_t num_classes);
};

// Parses and validates; unknown keys, simplex violations and negative counts
// raise ConfigError naming the key path (e.g. "prototypes[1].lambda.values").
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Fully-resolved config including defaults, in the same schema parse_config reads.
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

} // namespace takfl::harness
