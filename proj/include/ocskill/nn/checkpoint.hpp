#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "ocskill/nn/params.hpp"

namespace ocskill::nn {

// Container layout, all integers little-endian:
//   "NNC1" | u32 version
//   repeated until EOF:
//     u32 name_len | name bytes | u32 rank | u32 dims[rank] | f32 payload[prod(dims)]
inline constexpr char kCheckpointMagic[4] = {'N', 'N', 'C', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ParameterSet& params);
ParameterSet read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
ParameterSet load_checkpoint(const std::filesystem::path& path);

/// Copies `src` into `dst` with every name prefixed, for bundling several sets
/// into one file.
void merge_prefixed(ParameterSet& dst, const ParameterSet& src, const std::string& prefix);
/// Inverse of merge_prefixed: the entries of `src` under `prefix`, prefix removed.
ParameterSet extract_prefixed(const ParameterSet& src, const std::string& prefix);

}  // namespace ocskill::nn
