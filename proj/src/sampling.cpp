#include "tomodiff/sampling.hpp"

#include "tomodiff/errors.hpp"

#include <cmath>

namespace tomodiff {

std::vector<std::size_t> uniform1d_rows(std::size_t ny, double accel, double acs_frac) {
    if (ny < 1) throw ConfigError("mask needs ny >= 1");
    if (!(accel >= 1.0)) throw ConfigError("acceleration must be >= 1");
    if (!(acs_frac >= 0.0 && acs_frac < 1.0)) throw ConfigError("ACS fraction must lie in [0, 1)");
    const auto total = static_cast<std::size_t>(std::llround(static_cast<double>(ny) / accel));
    // The small slack keeps products like 0.15 * 20 = 3.0000000000000004 from rounding up.
    const auto acs = static_cast<std::size_t>(std::ceil(acs_frac * static_cast<double>(ny) - 1e-9));
    if (acs > total)
        throw ConfigError("ACS band of " + std::to_string(acs) + " lines exceeds the budget of " +
                          std::to_string(total) + " lines");
    const std::size_t start = ny / 2 - acs / 2;
    std::vector<bool> keep(ny, false);
    std::vector<std::size_t> rest;
    for (std::size_t r = 0; r < ny; ++r) {
        if (r >= start && r < start + acs) keep[r] = true;
        else rest.push_back(r);
    }
    const std::size_t extra = total - acs;
    for (std::size_t j = 0; j < extra; ++j) keep[rest[j * rest.size() / extra]] = true;
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < ny; ++r)
        if (keep[r]) rows.push_back(r);
    return rows;
}

SamplingMask uniform1d_mask(std::size_t ny, std::size_t nx, double accel, double acs_frac, std::uint64_t) {
    if (nx < 1) throw ConfigError("mask needs nx >= 1");
    return SamplingMask::from_lines(ny, nx, uniform1d_rows(ny, accel, acs_frac));
}

ProjectionGeometry sparse_view_geometry(std::size_t n_views, std::size_t n_det) {
    if (n_views < 1) throw ConfigError("need at least one view");
    ProjectionGeometry g;
    g.n_det = n_det;
    for (std::size_t k = 0; k < n_views; ++k) g.angles.push_back(M_PI * static_cast<double>(k) / n_views);
    g.validate();
    return g;
}

ProjectionGeometry limited_angle_geometry(double start_deg, double end_deg, std::size_t n_views, std::size_t n_det) {
    if (n_views < 1) throw ConfigError("need at least one view");
    if (!(start_deg >= 0.0 && start_deg < end_deg && end_deg <= 180.0))
        throw ConfigError("limited-angle range must satisfy 0 <= start < end <= 180");
    ProjectionGeometry g;
    g.n_det = n_det;
    const double step = (end_deg - start_deg) / static_cast<double>(n_views);
    for (std::size_t k = 0; k < n_views; ++k) g.angles.push_back((start_deg + step * k) * M_PI / 180.0);
    g.validate();
    return g;
}

} // namespace tomodiff
