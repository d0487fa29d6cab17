#pragma once

#include <cstdint>
#include <string>

#include "cnp/graph.hpp"

namespace cnp {

/// IEEE CRC-32 (reflected, poly 0xEDB88320).
std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

/// Binary checkpoint: "CNPK" magic, u32 version, serialized config, then one
/// record per parameter (name, dims, f32 payload), with a trailing CRC32 of
/// all preceding bytes. Loading rebuilds the architecture and restores every
/// parameter bit-identically; any corruption is refused.
void save_checkpoint(const ModelGraph& graph, const std::string& path);
ModelGraph load_checkpoint(const std::string& path);

}  // namespace cnp
