#ifndef AUDRON_CHECKPOINT_HPP
#define AUDRON_CHECKPOINT_HPP

#include <string>
#include <vector>

#include "audron/common.hpp"

namespace audron {

// Flat binary parameter container, little-endian:
//   magic "AUDRONCKPT1"
//   per entry: u32 name length, name bytes, u32 rank, u64 dims[rank],
//              float32 payload (row-major)
//   trailing u64 FNV-1a checksum over all preceding bytes.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

void save_checkpoint(const std::vector<CheckpointEntry>& entries, const std::string& path);

std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

}  // namespace audron

#endif  // AUDRON_CHECKPOINT_HPP
