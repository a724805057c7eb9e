#pragma once

#include "fbmseg/estimators.hpp"

#include <cstdint>
#include <string>

namespace fbmseg::bundle_io {

// Layout (all integers little-endian):
//   8 bytes   magic "FBMSEGMD"
//   u32       format version
//   u32       metadata byte length, metadata (UTF-8 JSON), u32 CRC-32 of it
//   u32       block count
//   per block: u32 name length, name, u64 float count,
//              count x f32 (IEEE-754, little-endian), u32 CRC-32 of the floats
inline constexpr char kMagic[8] = {'F', 'B', 'M', 'S', 'E', 'G', 'M', 'D'};
inline constexpr std::uint32_t kFormatVersion = 1;

void save_bundle(const estimators::RegressorBundle& bundle, const std::string& path);
estimators::RegressorBundle load_bundle(const std::string& path);

/// In-memory variants of the same format.
std::string serialize_bundle(const estimators::RegressorBundle& bundle);
estimators::RegressorBundle deserialize_bundle(const std::string& bytes);

/// CRC-32 (zlib polynomial) of a byte string.
std::uint32_t crc32_of(const std::string& bytes);

} // namespace fbmseg::bundle_io
