// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "takfl/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "takfl/errors.hpp"

namespace takfl::harness {

namespace {

constexpr char kMagic[4] = {'T', 'A', 'K', 'F'};
constexpr std::size_t kPreamble = 4 + 4 + 8;

void put_le(std::string& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_le(std::string_view in, std::size_t offset, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
    return v;
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

[[noreturn]] void bad(const std::string& what) {
    throw FormatError("checkpoint: " + what);
}

std::uint64_t header_count(const nlohmann::json& h, const char* key) {
    auto it = h.find(key);
    if (it == h.end())
        bad(std::string("header is missing \"") + key + "\"");
    if (!it->is_number_unsigned())
        bad(std::string("header field \"") + key + "\" must be a nonnegative integer");
    return it->get<std::uint64_t>();
}

std::string header_text(const nlohmann::json& h, const char* key) {
    auto it = h.find(key);
    if (it == h.end() || !it->is_string())
        bad(std::string("header field \"") + key + "\" must be a string");
    return it->get<std::string>();
}

} // namespace

std::string encode_checkpoint(const CheckpointHeader& header, const nn::ParameterVector& params) {
    header.arch.validate();
    if (params.values.size() != header.arch.parameter_count())
        throw ShapeError("checkpoint: " + std::to_string(params.values.size()) +
                         " values for architecture " + header.arch.describe());
    if (header.dtype != "f64")
        throw ConfigError("checkpoint: only dtype f64 is supported, got " + header.dtype);

    std::string payload;
    payload.reserve(params.values.size() * 8);
    for (double v : params.values)
        put_le(payload, std::bit_cast<std::uint64_t>(v), 8);

    nlohmann::ordered_json h;
    h["input_dim"] = header.arch.input_dim;
    h["hidden_widths"] = header.arch.hidden_widths;
    h["num_classes"] = header.arch.num_classes;
    h["dtype"] = header.dtype;
    h["seed"] = header.seed;
    h["round"] = header.round;
    h["prototype"] = header.prototype;
    h["parameter_count"] = params.values.size();
    h["payload_fnv1a64"] = hex64(fnv1a(payload));
    const std::string text = h.dump();

    std::string out(kMagic, 4);
    put_le(out, header.version, 4);
    put_le(out, text.size(), 8);
    out += text;
    out += payload;
    return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    if (bytes.size() < kPreamble)
        bad("file is " + std::to_string(bytes.size()) + " bytes, shorter than the preamble");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        bad("bad magic (expected \"TAKF\")");
    const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
    if (version != kCheckpointVersion)
        bad("unsupported format version " + std::to_string(version));
    const std::uint64_t header_len = get_le(bytes, 8, 8);
    if (header_len == 0 || header_len > kMaxCheckpointHeader ||
        header_len > bytes.size() - kPreamble)
        bad("header length " + std::to_string(header_len) + " is out of range");

    nlohmann::json h;
    try {
        h = nlohmann::json::parse(bytes.substr(kPreamble, header_len));
    } catch (const nlohmann::json::exception& e) {
        bad(std::string("header is not valid JSON: ") + e.what());
    }
    if (!h.is_object())
        bad("header is not a JSON object");

    Checkpoint cp;
    cp.header.version = version;
    cp.header.arch.input_dim = header_count(h, "input_dim");
    cp.header.arch.num_classes = header_count(h, "num_classes");
    auto hw = h.find("hidden_widths");
    if (hw == h.end() || !hw->is_array())
        bad("header field \"hidden_widths\" must be an array");
    for (const auto& w : *hw) {
        if (!w.is_number_unsigned())
            bad("hidden width must be a nonnegative integer");
        cp.header.arch.hidden_widths.push_back(w.get<std::uint64_t>());
    }
    cp.header.dtype = header_text(h, "dtype");
    if (cp.header.dtype != "f64")
        bad("unsupported dtype \"" + cp.header.dtype + "\"");
    cp.header.seed = header_count(h, "seed");
    cp.header.round = header_count(h, "round");
    cp.header.prototype = header_text(h, "prototype");

    std::size_t expected = 0;
    try {
        cp.header.arch.validate();
        expected = cp.header.arch.parameter_count();
    } catch (const std::exception& e) {
        bad(std::string("invalid architecture: ") + e.what());
    }
    if (header_count(h, "parameter_count") != expected)
        bad("parameter_count disagrees with the architecture");

    const std::string_view payload = bytes.substr(kPreamble + header_len);
    if (expected > payload.size() / 8 || payload.size() != expected * 8)
        bad("payload is " + std::to_string(payload.size()) + " bytes, expected " +
            std::to_string(expected) + " x 8");
    if (header_text(h, "payload_fnv1a64") != hex64(fnv1a(payload)))
        bad("payload checksum mismatch");

    cp.params.arch = cp.header.arch;
    cp.params.values.resize(expected);
    for (std::size_t i = 0; i < expected; ++i)
        cp.params.values[i] = std::bit_cast<double>(get_le(payload, 8 * i, 8));
    return cp;
}

void save_checkpoint(const CheckpointHeader& header, const nn::ParameterVector& params,
                     const std::filesystem::path& path) {
    const std::string bytes = encode_checkpoint(header, params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw std::runtime_error("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return decode_checkpoint(ss.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace takfl::harness
