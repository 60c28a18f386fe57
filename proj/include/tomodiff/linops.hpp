#pragma once

#include "tomodiff/volume.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tomodiff {

/// Measurements are flat real vectors. Complex k-space is stored as
/// interleaved (re, im) pairs, which makes the plain real dot product equal
/// to Re<a, b> and lets every operator share one adjoint convention.
using Measurement = std::vector<double>;

struct ProjectionOptions {
    int n_sweeps = 1;
    double relaxation = 0.3;
};

/// Matrix-free linear map from a Volume3 to a flat measurement vector with
/// its exact transpose.
class LinearOperator {
public:
    virtual ~LinearOperator() = default;

    virtual Shape3 domain_shape() const = 0;
    virtual std::size_t range_size() const = 0;
    virtual std::string name() const = 0;

    virtual void apply(std::span<const double> x, std::span<double> y) const = 0;
    virtual void adjoint(std::span<const double> y, std::span<double> x) const = 0;

    /// Moves x onto (or toward) the affine set {x : A x = y}. Operators whose
    /// projection is exact ignore the options; the Radon operator runs ART.
    virtual void project(std::span<double> x, std::span<const double> y, const ProjectionOptions& opts) const;

    std::size_t domain_size() const { return domain_shape().voxels(); }
    Measurement apply(const Volume3& x) const;
    Volume3 adjoint(std::span<const double> y) const;
};

/// Euclidean norm of A x - y.
double residual_norm(const LinearOperator& A, const Volume3& x, std::span<const double> y);

/// Largest eigenvalue of A^T A by power iteration from a seeded Gaussian start.
double normal_norm(const LinearOperator& A, int iters = 50, std::uint64_t seed = 1);

class IdentityOperator final : public LinearOperator {
public:
    using LinearOperator::adjoint;
    using LinearOperator::apply;

    explicit IdentityOperator(Shape3 shape) : shape_(shape) {}
    Shape3 domain_shape() const override { return shape_; }
    std::size_t range_size() const override { return shape_.voxels(); }
    std::string name() const override { return "identity"; }
    void apply(std::span<const double> x, std::span<double> y) const override;
    void adjoint(std::span<const double> y, std::span<double> x) const override;
    void project(std::span<double> x, std::span<const double> y, const ProjectionOptions&) const override;

private:
    Shape3 shape_;
};

/// Keeps a subset of voxels; the range is the kept voxels in index order.
class SubsampleOperator final : public LinearOperator {
public:
    using LinearOperator::adjoint;
    using LinearOperator::apply;

    SubsampleOperator(Shape3 shape, const std::vector<bool>& keep);
    /// Keeps each voxel independently with probability `fraction`.
    static SubsampleOperator random(Shape3 shape, double fraction, unsigned long long seed);

    Shape3 domain_shape() const override { return shape_; }
    std::size_t range_size() const override { return kept_.size(); }
    std::string name() const override { return "subsample"; }
    void apply(std::span<const double> x, std::span<double> y) const override;
    void adjoint(std::span<const double> y, std::span<double> x) const override;
    void project(std::span<double> x, std::span<const double> y, const ProjectionOptions&) const override;

    const std::vector<std::size_t>& kept_indices() const noexcept { return kept_; }

private:
    Shape3 shape_;
    std::vector<std::size_t> kept_;
};

/// A = 0 with an arbitrary range size.
class ZeroOperator final : public LinearOperator {
public:
    using LinearOperator::adjoint;
    using LinearOperator::apply;

    ZeroOperator(Shape3 shape, std::size_t range) : shape_(shape), range_(range) {}
    Shape3 domain_shape() const override { return shape_; }
    std::size_t range_size() const override { return range_; }
    std::string name() const override { return "zero"; }
    void apply(std::span<const double>, std::span<double> y) const override;
    void adjoint(std::span<const double>, std::span<double> x) const override;

private:
    Shape3 shape_;
    std::size_t range_;
};

// ---------------------------------------------------------------------------
// Finite differences, replicate boundary: the last difference along an axis is 0.

Volume3 diff_z(const Volume3& vol);
Volume3 diff_z_adjoint(const Volume3& vol);

/// (D_x, D_y, D_z) in that order.
std::array<Volume3, 3> diff_xyz(const Volume3& vol);
Volume3 diff_xyz_adjoint(const std::array<Volume3, 3>& d);

void diff_z_apply(const Shape3& s, std::span<const double> x, std::span<double> out);
void diff_z_adjoint_apply(const Shape3& s, std::span<const double> d, std::span<double> out);

class DiffZOperator final : public LinearOperator {
public:
    using LinearOperator::adjoint;
    using LinearOperator::apply;

    explicit DiffZOperator(Shape3 shape) : shape_(shape) {}
    Shape3 domain_shape() const override { return shape_; }
    std::size_t range_size() const override { return shape_.voxels(); }
    std::string name() const override { return "diff_z"; }
    void apply(std::span<const double> x, std::span<double> y) const override;
    void adjoint(std::span<const double> y, std::span<double> x) const override;

private:
    Shape3 shape_;
};

/// Stacked [D_x; D_y; D_z]; range is three volumes back to back.
class DiffXYZOperator final : public LinearOperator {
public:
    using LinearOperator::adjoint;
    using LinearOperator::apply;

    explicit DiffXYZOperator(Shape3 shape) : shape_(shape) {}
    Shape3 domain_shape() const override { return shape_; }
    std::size_t range_size() const override { return 3 * shape_.voxels(); }
    std::string name() const override { return "diff_xyz"; }
    void apply(std::span<const double> x, std::span<double> y) const override;
    void adjoint(std::span<const double> y, std::span<double> x) const override;

private:
    Shape3 shape_;
};

/// Runs the operator's measurement-subspace projection on a copy of x.
Volume3 project_data_consistency(const Volume3& x, const LinearOperator& A, std::span<const double> y,
                                 int n_sweeps, double relaxation = 0.3);

} // namespace tomodiff
