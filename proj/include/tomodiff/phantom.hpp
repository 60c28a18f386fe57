#pragma once

#include "tomodiff/volume.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tomodiff {

/// Ellipsoid in normalised coordinates [-1, 1]^3, rotated about its own centre
/// by phi degrees in the xy-plane.
struct Ellipsoid {
    double value; ///< additive intensity (Shepp-Logan) or overwrite value (overlay)
    double a, b, c;
    double x0, y0, z0;
    double phi_deg = 0.0;

    bool contains(double x, double y, double z) const;
};

struct Sphere {
    double x0, y0, z0, r, value;
    bool contains(double x, double y, double z) const {
        return (x - x0) * (x - x0) + (y - y0) * (y - y0) + (z - z0) * (z - z0) <= r * r;
    }
};

/// Centre of voxel i along an axis of n voxels, in [-1, 1].
inline double voxel_coord(std::size_t i, std::size_t n) {
    return (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n) - 1.0;
}

/// The ten ellipsoids of the modified (high-contrast) 3D Shepp-Logan phantom.
std::vector<Ellipsoid> shepp_logan_ellipsoids();

/// Sum of ellipsoid intensities per voxel, clipped to [0, 1].
Volume3 rasterize_additive(std::size_t n, const std::vector<Ellipsoid>& ellipsoids);

Volume3 shepp_logan_3d(std::size_t n);

/// Shepp-Logan with randomly jittered axes, centres, angles and intensities.
/// Used as training data; the canonical phantom is never reproduced.
Volume3 shepp_logan_variant(std::size_t n, std::uint64_t seed);

struct SphereParams {
    double r_min = 0.08;
    double r_max = 0.3;
    double extent = 0.7; ///< centres drawn from [-extent, extent]^3
};

std::vector<Sphere> random_sphere_list(std::size_t count, std::uint64_t seed, const SphereParams& p = {});
/// Later spheres overwrite earlier ones.
Volume3 rasterize_spheres(std::size_t n, const std::vector<Sphere>& spheres);
Volume3 random_spheres(std::size_t n, std::size_t count, std::uint64_t seed, const SphereParams& p = {});

struct OverlaySpec {
    std::size_t count = 4;
    std::uint64_t seed = 0;
    double axis_min = 0.05;
    double axis_max = 0.25;
    double value = 1.0;
};

std::vector<Ellipsoid> random_ellipsoid_list(const OverlaySpec& spec);
/// Overwrites every voxel inside an ellipsoid with its value, then clips to [0, 1].
Volume3 ellipse_overlay(const Volume3& base, const std::vector<Ellipsoid>& ellipsoids);
Volume3 ellipse_overlay(const Volume3& base, const OverlaySpec& spec);

enum class PhantomKind { shepp_logan_3d, random_spheres, ellipse_overlay };

struct PhantomSpec {
    PhantomKind kind = PhantomKind::shepp_logan_3d;
    std::size_t n = 64;
    std::uint64_t seed = 0;
    std::size_t sphere_count = 8;
    SphereParams spheres{};
    OverlaySpec overlay{};
};

PhantomKind parse_phantom_kind(const std::string& name);
/// ellipse_overlay lays the overlay on top of the Shepp-Logan phantom.
Volume3 make_phantom(const PhantomSpec& spec);

} // namespace tomodiff
