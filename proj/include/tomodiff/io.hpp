#pragma once

#include "tomodiff/volume.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace tomodiff {

/// Size of the volume file header: magic, three u32 dimensions, three f64 spacings.
inline constexpr std::size_t kVolumeHeaderBytes = 40;

/// "TDV1", u32 LE (nz, ny, nx), f64 LE (dz, dy, dx), then float32 LE voxels, z-major.
std::string encode_volume(const Volume3& vol);
/// Throws FormatError naming the field and byte offset of the first problem.
Volume3 decode_volume(const std::string& bytes);

void write_raw(const std::string& path, const Volume3& vol);
Volume3 read_raw(const std::string& path);

/// Writes one 8-bit greyscale PNG per plane along `axis`, mapping [lo, hi]
/// linearly to [0, 255] and clamping outside. Returns the written paths.
std::vector<std::string> export_png_slices(const Volume3& vol, const std::string& dir, PlaneAxis axis = PlaneAxis::axial,
                                           double lo = 0.0, double hi = 1.0);

} // namespace tomodiff
