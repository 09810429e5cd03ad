#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "plite/compress.hpp"
#include "plite/nn.hpp"

namespace plite {

// The .plite container: "PLIT" magic, u16 version, u16 flags (bit 0 =
// quantized), then structure and raw little-endian parameter blocks in a
// fixed order. Serialization is canonical: no padding, no optional fields,
// so equal models produce byte-identical files. See docs/plite_format.md.

constexpr uint16_t kLiteVersion = 1;
constexpr uint16_t kLiteFlagQuantized = 0x0001;

using AnyModel = std::variant<Model, QuantModel>;

std::vector<uint8_t> serialize(const Model& model);
std::vector<uint8_t> serialize(const QuantModel& model);
AnyModel parse(const std::vector<uint8_t>& bytes);

/// Writes the canonical encoding; returns the byte count written.
uint64_t export_lite(const Model& model, const std::string& path);
uint64_t export_lite(const QuantModel& model, const std::string& path);
uint64_t export_lite(const AnyModel& model, const std::string& path);

/// Parses a .plite file; throws ParseError (with byte offset) on malformed
/// input, including bad magic, unsupported version, and truncation.
AnyModel import_lite(const std::string& path);

/// File length in bytes.
uint64_t model_size(const std::string& path);

bool is_quantized(const AnyModel& m);
const ModelMeta& meta_of(const AnyModel& m);
const std::vector<std::string>& class_names_of(const AnyModel& m);

}  // namespace plite
