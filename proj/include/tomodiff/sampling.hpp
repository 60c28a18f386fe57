#pragma once

#include "tomodiff/fourier.hpp"
#include "tomodiff/radon.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace tomodiff {

/// Rows kept by uniform1d_mask, ascending.
std::vector<std::size_t> uniform1d_rows(std::size_t ny, double accel, double acs_frac);

/// Keeps round(ny / accel) phase-encode rows: the central ceil(acs_frac * ny)
/// rows plus evenly strided rows from the rest, starting at the lowest. The
/// pattern is deterministic; the seed is accepted for interface stability and
/// does not change it. Throws ConfigError when the ACS band alone exceeds the
/// budget.
SamplingMask uniform1d_mask(std::size_t ny, std::size_t nx, double accel, double acs_frac, std::uint64_t seed = 0);

/// n_views angles k * 180 / n_views degrees, k = 0 .. n_views - 1.
ProjectionGeometry sparse_view_geometry(std::size_t n_views, std::size_t n_det);

/// n_views angles start + k (end - start) / n_views degrees over [start, end).
ProjectionGeometry limited_angle_geometry(double start_deg, double end_deg, std::size_t n_views, std::size_t n_det);

} // namespace tomodiff
