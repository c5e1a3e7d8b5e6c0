#pragma once

#include <cstddef>
#include <filesystem>

#include "geoflow/synthetic.hpp"

namespace geoflow {

// GFFD layout, little-endian:
//   "GFFD" | u32 version = 1 | u32 d | u32 p | u32 sample_count
//   per sample: u32 m | m*d f32 coords | m*p f32 values
// Values are f64 in memory and f32 on disk.
inline constexpr std::uint32_t kGffdVersion = 1;
inline constexpr std::size_t kGffdHeaderBytes = 20;

// Expected file size in bytes for the given per-sample node counts.
std::size_t gffd_file_size(std::size_t d, std::size_t p, std::span<const std::size_t> node_counts);

void dataset_write(const std::filesystem::path& path, const FieldDataset& dataset);

// Throws FormatError (with byte offset) on bad magic, version or truncation. Stats are
// recomputed over the training split; the generator label is "gffd".
FieldDataset dataset_read(const std::filesystem::path& path);

} // namespace geoflow
