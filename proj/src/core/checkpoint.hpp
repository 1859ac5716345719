#pragma once

#include <map>
#include <string>

#include "core/model.hpp"

namespace fscs {

// Checkpoint file layout (all integers little-endian):
//   magic "FSOI" | version u32 | block_side u32 | ratio f32 | channels u32 |
//   phases u32 | mode u32 | tensor_count u32 | records...
// record: name_len u32 | name bytes | rank u32 | extents u32[rank] | payload f32[]
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
    uint32_t version = kCheckpointVersion;
    uint32_t block_side = 0;
    float ratio = 0.0f;
    uint32_t channels = 0;
    uint32_t phases = 0;
    Variant variant = Variant::fsoinet;
};

// Low-level named-tensor bundle IO. Payloads are always 32-bit floats: a
// double model is narrowed on save and widened on load.
void write_named_tensors(const std::string& path, const CheckpointHeader& header,
                         const std::vector<std::pair<std::string, Tensor<float>>>& tensors);

struct NamedTensorFile {
    CheckpointHeader header;
    std::map<std::string, Tensor<float>> tensors;
};

NamedTensorFile read_named_tensors(const std::string& path);

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& m);

Model<float> load_checkpoint(const std::string& path);

}  // namespace fscs
