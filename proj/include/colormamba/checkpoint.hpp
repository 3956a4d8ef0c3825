#pragma once

#include "colormamba/blocks.hpp"

namespace colormamba {

// Flat binary container of named arrays. Layout (all little-endian):
//   magic "CMBK" | u32 version | u32 entry count | u32 reserved
//   per entry: u32 name length | name bytes | u32 ndim | u64 dims | f64 data
// Values are stored as 64-bit floats regardless of build precision so a
// save/load roundtrip is bit-exact in the default build.
inline constexpr uint32_t kCheckpointVersion = 1;

struct ArrayEntry {
    std::string name;
    Shape shape;
    std::vector<double> data;
};

void write_array_container(const std::string& path, const std::vector<ArrayEntry>& entries);
std::vector<ArrayEntry> read_array_container(const std::string& path);

// Helpers bridging model parameters and the container.
std::vector<ArrayEntry> params_to_entries(const NamedParams& params);
// Copies matching entries into the tensors; every parameter must be present
// with the right shape.
void load_params_from_entries(NamedParams params, const std::vector<ArrayEntry>& entries);

}  // namespace colormamba
