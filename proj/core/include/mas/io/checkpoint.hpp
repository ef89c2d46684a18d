#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "mas/nn.hpp"

namespace mas::io {

/// Versioned binary checkpoint: a string metadata table (model kind and
/// configuration) followed by named float64 parameter blobs.
///
///   "MASC" u32 version
///   u32 n_meta, n_meta x (u32 len, key bytes, u32 len, value bytes)
///   u32 n_blobs, n_blobs x (u32 len, name bytes, u32 rank, rank x u64 extent, f64 values)
inline constexpr std::uint32_t kCheckpointVersion = 1;

using Metadata = std::map<std::string, std::string>;

void save_checkpoint(const std::filesystem::path& path, const Metadata& meta, const nn::ParamStore& params);

/// Reads only the metadata table.
Metadata read_checkpoint_metadata(const std::filesystem::path& path);

/// Loads blobs into `params`. Every parameter must be present with an
/// identical shape; extra or missing blobs raise FormatError.
Metadata load_checkpoint(const std::filesystem::path& path, nn::ParamStore& params);

}  // namespace mas::io
