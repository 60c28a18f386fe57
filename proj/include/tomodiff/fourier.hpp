#pragma once

#include "tomodiff/linops.hpp"
#include "tomodiff/volume.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

namespace tomodiff {

namespace detail {
class FftPlan;
}

/// Per-coefficient keep/drop pattern over a centered (ny, nx) k-space grid.
/// The same mask applies to every z-slice.
struct SamplingMask {
    std::size_t ny = 0;
    std::size_t nx = 0;
    std::vector<std::uint8_t> keep;

    SamplingMask() = default;
    SamplingMask(std::size_t ny_, std::size_t nx_, bool fill = false);

    static SamplingMask full(std::size_t ny, std::size_t nx) { return SamplingMask(ny, nx, true); }
    /// Keeps whole phase-encode rows (constant along x).
    static SamplingMask from_lines(std::size_t ny, std::size_t nx, const std::vector<std::size_t>& rows);

    bool operator()(std::size_t y, std::size_t x) const { return keep[y * nx + x] != 0; }
    std::size_t kept() const;
    void validate() const;
};

/// Centered orthonormal 2D DFT per slice followed by masking. Images are real;
/// the adjoint returns the real part of the inverse transform.
class FourierOperator final : public LinearOperator {
public:
    using LinearOperator::adjoint;
    using LinearOperator::apply;

    FourierOperator(Shape3 shape, SamplingMask mask);
    ~FourierOperator() override;

    Shape3 domain_shape() const override { return shape_; }
    std::size_t range_size() const override { return 2 * shape_.voxels(); }
    std::string name() const override { return "fourier"; }

    void apply(std::span<const double> x, std::span<double> y) const override;
    void adjoint(std::span<const double> y, std::span<double> x) const override;

    /// Exact orthogonal projection onto {x real : A x = y}. A measured
    /// coefficient whose Hermitian partner is unmeasured gets twice the
    /// correction, since taking the real part halves it.
    void project(std::span<double> x, std::span<const double> y, const ProjectionOptions& opts) const override;

    const SamplingMask& mask() const noexcept { return mask_; }

    /// Unmasked centered orthonormal transforms of one plane (interleaved complex).
    void transform_plane(std::span<const double> image, std::span<double> kspace) const;
    void inverse_plane(std::span<const double> kspace, std::span<double> image_real) const;

private:
    Shape3 shape_;
    SamplingMask mask_;
    std::vector<double> projection_weight_;
    std::unique_ptr<detail::FftPlan> plan_;
};

ComplexVolume3 fourier_forward(const Volume3& vol, const SamplingMask& mask);
Volume3 fourier_adjoint(const ComplexVolume3& ksp, const SamplingMask& mask);

} // namespace tomodiff
