#pragma once

#include "tomodiff/linops.hpp"
#include "tomodiff/volume.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace tomodiff {

/// Parallel-beam acquisition: one detector row of n_det bins per view angle.
/// Limited-angle scans are just geometries whose angles cover a partial wedge.
struct ProjectionGeometry {
    std::vector<double> angles; ///< radians, strictly increasing in [0, pi)
    std::size_t n_det = 0;
    double det_spacing = 1.0;

    std::size_t n_views() const noexcept { return angles.size(); }
    /// Throws ConfigError when the invariants do not hold.
    void validate() const;
};

/// ceil(sqrt(2) * max(nx, ny)): enough bins to cover the image diagonal.
std::size_t default_detector_count(std::size_t nx, std::size_t ny);

/// Stack of per-slice sinograms, shaped (nz, n_views, n_det).
struct Sinogram3 {
    std::size_t nz = 0;
    ProjectionGeometry geometry;
    std::vector<double> data;

    Sinogram3() = default;
    Sinogram3(std::size_t nz_, ProjectionGeometry g);
    Sinogram3(std::size_t nz_, ProjectionGeometry g, std::vector<double> d);

    std::size_t n_views() const noexcept { return geometry.n_views(); }
    std::size_t n_det() const noexcept { return geometry.n_det; }
    double& operator()(std::size_t z, std::size_t v, std::size_t d) { return data[(z * n_views() + v) * n_det() + d]; }
    double operator()(std::size_t z, std::size_t v, std::size_t d) const { return data[(z * n_views() + v) * n_det() + d]; }
};

/// Sparse rows of the 2D projection matrix shared by all slices.
struct RaySystemMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<std::uint32_t> col_idx;
    std::vector<double> values;
    std::vector<double> row_norm_sq;
};

/// Ray-driven line integrals: each ray is sampled every half voxel and the
/// image is read through bilinear interpolation. The adjoint scatters with the
/// very same weights, so the pair is an exact transpose.
class RadonOperator final : public LinearOperator {
public:
    using LinearOperator::adjoint;
    using LinearOperator::apply;

    RadonOperator(Shape3 shape, ProjectionGeometry geometry, Spacing3 spacing = {});

    Shape3 domain_shape() const override { return shape_; }
    std::size_t range_size() const override { return shape_.nz * matrix_.rows; }
    std::string name() const override { return "radon"; }

    void apply(std::span<const double> x, std::span<double> y) const override;
    void adjoint(std::span<const double> y, std::span<double> x) const override;

    /// Kaczmarz/ART: n_sweeps view-major passes over the rays of every slice.
    void project(std::span<double> x, std::span<const double> y, const ProjectionOptions& opts) const override;

    const ProjectionGeometry& geometry() const noexcept { return geometry_; }
    const Spacing3& spacing() const noexcept { return spacing_; }
    const RaySystemMatrix& system_matrix() const noexcept { return matrix_; }

private:
    Shape3 shape_;
    ProjectionGeometry geometry_;
    Spacing3 spacing_;
    RaySystemMatrix matrix_;
};

RaySystemMatrix build_ray_matrix(std::size_t ny, std::size_t nx, Spacing3 spacing, const ProjectionGeometry& geom);

Sinogram3 radon_forward(const Volume3& vol, const ProjectionGeometry& geom);
Volume3 radon_adjoint(const Sinogram3& sino, const GridGeometry& grid);

enum class FbpFilter { ramp, ram_lak_windowed, none };

/// Ramp-filters every detector row in the frequency domain and backprojects
/// with weight pi / n_views.
Volume3 fbp(const Sinogram3& sino, const GridGeometry& grid, FbpFilter filter = FbpFilter::ramp);

/// Filters detector rows in place (exposed for tests).
void ramp_filter_rows(std::span<double> rows, std::size_t n_det, double det_spacing, FbpFilter filter);

} // namespace tomodiff
