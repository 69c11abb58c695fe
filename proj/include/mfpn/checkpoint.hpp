#pragma once

#include <map>
#include <string>

#include "mfpn/tensor.hpp"

namespace mfpn {

// Flat binary container: magic "MFPN", version u32 LE, then entries until
// EOF. Each entry: name length u32 LE, UTF-8 name bytes, rank u32 LE, dims
// as u64 LE, raw little-endian f64 payload. Ordered map keys make the byte
// stream deterministic.
using TensorMap = std::map<std::string, Tensor>;

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const TensorMap& entries);
TensorMap load_checkpoint(const std::string& path);

}  // namespace mfpn
