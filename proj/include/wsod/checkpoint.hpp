#pragma once

#include <string>

#include "wsod/nn.hpp"

namespace wsod {

// Single-file binary checkpoint. Layout, all integers little-endian:
//   magic "WSODCKPT1" (9 bytes)
//   for each tensor, in registry (name-sorted) order:
//     u32 name length, name bytes,
//     u32 rank, u64 per dimension,
//     raw IEEE-754 64-bit values.
void save_checkpoint(const std::string& path, const ParamSet& params);

// Loads into already-constructed tensors; names and shapes must match the
// registry exactly.
void load_checkpoint(const std::string& path, ParamSet& params);

}  // namespace wsod
