// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint format:
//
//   bytes 0..3    "TAKF"
//   bytes 4..7    format version, u32 little-endian
//   bytes 8..15   header length N, u64 little-endian
//   next N bytes  JSON header (architecture, dtype, seed, round, prototype)
//   remainder     parameter_count f64 values, little-endian

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "takfl/nn.hpp"

namespace takfl::harness {

inline constexpr std::uint32_t kCheckpointVersion = 1;
// Headers are tiny; anything larger is treated as corruption.
inline constexpr std::uint64_t kMaxCheckpointHeader = 1u << 20;

struct CheckpointHeader {
    std::uint32_t version = kCheckpointVersion;
    nn::MlpArchitecture arch;
    std::string dtype = "f64";
    std::uint64_t seed = 0;
    std::uint64_t round = 0;
    std::string prototype;

    bool operator==(const CheckpointHeader&) const = default;
};

struct Checkpoint {
    CheckpointHeader header;
    nn::ParameterVector params;
};

std::string encode_checkpoint(const CheckpointHeader& header, const nn::ParameterVector& params);
// Throws FormatError on any inconsistency; never reads past `bytes`.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const CheckpointHeader& header, const nn::ParameterVector& params,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace takfl::harness
