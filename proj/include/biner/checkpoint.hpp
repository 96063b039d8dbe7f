#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "biner/tensor.hpp"

namespace biner {

/// Named-tensor container, little-endian:
///   magic "BNRT", u32 version, u64 tensor count, then per tensor:
///   u32 name length + bytes, u32 rank, u64 dims, float32 payload.
/// In-memory reals are converted to/from float32 at the file boundary.
struct NamedTensor {
    std::string name;
    Tensor tensor;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void write_tensors(std::ostream& os, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& is);

void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::string& path);

/// FNV-1a over the serialized float32 payloads and names, in order. Stable
/// across runs for identical parameters; used for cache fingerprints.
uint64_t tensors_fingerprint(const std::vector<NamedTensor>& tensors);

}  // namespace biner
