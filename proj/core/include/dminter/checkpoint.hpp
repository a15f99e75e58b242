#pragma once

#include <string>

#include "dminter/training.hpp"

namespace dminter {

inline constexpr char kCheckpointMagic[4] = {'D', 'M', 'I', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws DataError: "not a checkpoint" (magic), "unsupported checkpoint
/// version", "corrupt checkpoint" (truncation, bad records, digest mismatch).
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dminter
