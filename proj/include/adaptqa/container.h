// SPDX-License-Identifier: Apache-2.0
//
// Binary parameter container, used for whole models and standalone adapters.
//
// Layout (all integers little-endian):
//   magic          4 bytes  "AQPC"
//   format_version u32      (currently 1)
//   entry_count    u64
//   per entry, in lexicographic name order:
//     name_length  u32, then name bytes (UTF-8)
//     dtype        u8       (1 = IEEE-754 binary64)
//     rank         u32, then rank x u64 extents
//     payload      numel x f64, row-major

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "adaptqa/param_store.h"

namespace adaptqa {

inline constexpr std::uint32_t kContainerFormatVersion = 1;
inline constexpr std::uint8_t kDtypeFloat64 = 1;

/// Bytes of one entry record, exactly as written inside a container.
std::vector<std::uint8_t> serialize_entry(const std::string& name, const Tensor& tensor);

std::vector<std::uint8_t> serialize_params(const ParamStore& store);
/// Entries come back with requires_grad off and no trainable mask.
ParamStore deserialize_params(std::span<const std::uint8_t> bytes);

void save_params(const std::filesystem::path& path, const ParamStore& store);
ParamStore load_params(const std::filesystem::path& path);

/// SHA-256 of serialize_entry(name, tensor).
std::string entry_hash(const std::string& name, const Tensor& tensor);
std::map<std::string, std::string> entry_hashes(const ParamStore& store, const std::vector<std::string>& names);
/// SHA-256 of serialize_params(store).
std::string params_hash(const ParamStore& store);

}  // namespace adaptqa
