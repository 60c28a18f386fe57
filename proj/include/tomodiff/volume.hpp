#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace tomodiff {

struct Shape3 {
    std::size_t nz = 1;
    std::size_t ny = 1;
    std::size_t nx = 1;

    std::size_t voxels() const noexcept { return nz * ny * nx; }
    std::size_t plane() const noexcept { return ny * nx; }
    friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// Physical size of one voxel along (z, y, x).
struct Spacing3 {
    double dz = 1.0;
    double dy = 1.0;
    double dx = 1.0;

    friend bool operator==(const Spacing3&, const Spacing3&) = default;
};

struct GridGeometry {
    std::size_t nx = 1;
    std::size_t ny = 1;
    std::size_t nz = 1;
    Spacing3 spacing{};

    GridGeometry() = default;
    GridGeometry(std::size_t nx_, std::size_t ny_, std::size_t nz_, Spacing3 s = {});

    Shape3 shape() const noexcept { return {nz, ny, nx}; }
};

/// Owning row-major 2D array.
struct Image2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Image2() = default;
    Image2(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Non-owning view of one contiguous xy plane. Writes go through to the volume.
template <typename T>
class PlaneViewT {
public:
    PlaneViewT(std::span<T> data, std::size_t rows, std::size_t cols) : data_(data), rows_(rows), cols_(cols) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::span<T> span() const noexcept { return data_; }
    T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

private:
    std::span<T> data_;
    std::size_t rows_;
    std::size_t cols_;
};

using PlaneView = PlaneViewT<double>;
using ConstPlaneView = PlaneViewT<const double>;

/// Real 3D grid, z-major: voxel (z, y, x) lives at (z * ny + y) * nx + x, so
/// every axial slice is contiguous.
class Volume3 {
public:
    Volume3() = default;
    explicit Volume3(Shape3 shape, Spacing3 spacing = {}, double fill = 0.0);
    Volume3(Shape3 shape, std::vector<double> data, Spacing3 spacing = {});

    const Shape3& shape() const noexcept { return shape_; }
    const Spacing3& spacing() const noexcept { return spacing_; }
    void set_spacing(Spacing3 s) noexcept { spacing_ = s; }

    std::size_t size() const noexcept { return data_.size(); }
    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    std::size_t index(std::size_t z, std::size_t y, std::size_t x) const noexcept {
        return (z * shape_.ny + y) * shape_.nx + x;
    }
    double& operator()(std::size_t z, std::size_t y, std::size_t x) { return data_[index(z, y, x)]; }
    double operator()(std::size_t z, std::size_t y, std::size_t x) const { return data_[index(z, y, x)]; }

    std::span<double> slice(std::size_t k);
    std::span<const double> slice(std::size_t k) const;

    bool all_finite() const noexcept;

private:
    Shape3 shape_{};
    Spacing3 spacing_{};
    std::vector<double> data_;
};

/// Complex 3D grid stored as interleaved (re, im) doubles, same layout as Volume3.
class ComplexVolume3 {
public:
    ComplexVolume3() = default;
    explicit ComplexVolume3(Shape3 shape, Spacing3 spacing = {});
    ComplexVolume3(Shape3 shape, std::vector<double> interleaved, Spacing3 spacing = {});

    const Shape3& shape() const noexcept { return shape_; }
    const Spacing3& spacing() const noexcept { return spacing_; }
    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    std::complex<double> at(std::size_t z, std::size_t y, std::size_t x) const;
    void set(std::size_t z, std::size_t y, std::size_t x, std::complex<double> v);

    bool all_finite() const noexcept;

private:
    Shape3 shape_{};
    Spacing3 spacing_{};
    std::vector<double> data_;
};

enum class PlaneAxis { axial, coronal, sagittal };

std::string_view to_string(PlaneAxis axis);

/// The k-th axial plane (ny x nx). Throws std::out_of_range if k >= nz.
PlaneView slice_view(Volume3& vol, std::size_t k);
ConstPlaneView slice_view(const Volume3& vol, std::size_t k);

/// All planes perpendicular to `axis`, copied out:
/// axial -> nz planes of ny x nx, coronal -> ny planes of nz x nx,
/// sagittal -> nx planes of nz x ny.
std::vector<Image2> plane_views(const Volume3& vol, PlaneAxis axis);

/// Inverse of plane_views.
Volume3 assemble_planes(const std::vector<Image2>& planes, PlaneAxis axis, Spacing3 spacing = {});

bool all_finite(std::span<const double> v) noexcept;

} // namespace tomodiff
