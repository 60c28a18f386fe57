#include "tomodiff/volume.hpp"

#include "tomodiff/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tomodiff {

GridGeometry::GridGeometry(std::size_t nx_, std::size_t ny_, std::size_t nz_, Spacing3 s)
    : nx(nx_), ny(ny_), nz(nz_), spacing(s) {
    if (nx == 0 || ny == 0 || nz == 0) throw ConfigError("grid dimensions must be >= 1");
    if (!(s.dx > 0 && s.dy > 0 && s.dz > 0)) throw ConfigError("grid spacing must be positive");
}

namespace {

void check_shape(const Shape3& s) {
    if (s.nz == 0 || s.ny == 0 || s.nx == 0) throw ConfigError("volume dimensions must be >= 1");
}

} // namespace

Volume3::Volume3(Shape3 shape, Spacing3 spacing, double fill) : shape_(shape), spacing_(spacing) {
    check_shape(shape);
    data_.assign(shape.voxels(), fill);
}

Volume3::Volume3(Shape3 shape, std::vector<double> data, Spacing3 spacing)
    : shape_(shape), spacing_(spacing), data_(std::move(data)) {
    check_shape(shape);
    if (data_.size() != shape.voxels())
        throw ConfigError("volume data length " + std::to_string(data_.size()) + " does not match shape (" +
                          std::to_string(shape.voxels()) + " voxels)");
}

std::span<double> Volume3::slice(std::size_t k) {
    if (k >= shape_.nz) throw std::out_of_range("slice index " + std::to_string(k) + " out of range");
    return std::span<double>(data_).subspan(k * shape_.plane(), shape_.plane());
}

std::span<const double> Volume3::slice(std::size_t k) const {
    if (k >= shape_.nz) throw std::out_of_range("slice index " + std::to_string(k) + " out of range");
    return std::span<const double>(data_).subspan(k * shape_.plane(), shape_.plane());
}

bool Volume3::all_finite() const noexcept { return tomodiff::all_finite(data_); }

ComplexVolume3::ComplexVolume3(Shape3 shape, Spacing3 spacing) : shape_(shape), spacing_(spacing) {
    check_shape(shape);
    data_.assign(2 * shape.voxels(), 0.0);
}

ComplexVolume3::ComplexVolume3(Shape3 shape, std::vector<double> interleaved, Spacing3 spacing)
    : shape_(shape), spacing_(spacing), data_(std::move(interleaved)) {
    check_shape(shape);
    if (data_.size() != 2 * shape.voxels()) throw ConfigError("complex volume data length does not match shape");
}

std::complex<double> ComplexVolume3::at(std::size_t z, std::size_t y, std::size_t x) const {
    const std::size_t i = 2 * ((z * shape_.ny + y) * shape_.nx + x);
    return {data_.at(i), data_.at(i + 1)};
}

void ComplexVolume3::set(std::size_t z, std::size_t y, std::size_t x, std::complex<double> v) {
    const std::size_t i = 2 * ((z * shape_.ny + y) * shape_.nx + x);
    data_.at(i) = v.real();
    data_.at(i + 1) = v.imag();
}

bool ComplexVolume3::all_finite() const noexcept { return tomodiff::all_finite(data_); }

std::string_view to_string(PlaneAxis axis) {
    switch (axis) {
    case PlaneAxis::axial: return "axial";
    case PlaneAxis::coronal: return "coronal";
    case PlaneAxis::sagittal: return "sagittal";
    }
    return "unknown";
}

PlaneView slice_view(Volume3& vol, std::size_t k) {
    return PlaneView(vol.slice(k), vol.shape().ny, vol.shape().nx);
}

ConstPlaneView slice_view(const Volume3& vol, std::size_t k) {
    return ConstPlaneView(vol.slice(k), vol.shape().ny, vol.shape().nx);
}

std::vector<Image2> plane_views(const Volume3& vol, PlaneAxis axis) {
    const auto [nz, ny, nx] = vol.shape();
    std::vector<Image2> planes;
    switch (axis) {
    case PlaneAxis::axial:
        planes.reserve(nz);
        for (std::size_t z = 0; z < nz; ++z) {
            Image2 p(ny, nx);
            const auto s = vol.slice(z);
            p.data.assign(s.begin(), s.end());
            planes.push_back(std::move(p));
        }
        break;
    case PlaneAxis::coronal:
        planes.reserve(ny);
        for (std::size_t y = 0; y < ny; ++y) {
            Image2 p(nz, nx);
            for (std::size_t z = 0; z < nz; ++z)
                for (std::size_t x = 0; x < nx; ++x) p(z, x) = vol(z, y, x);
            planes.push_back(std::move(p));
        }
        break;
    case PlaneAxis::sagittal:
        planes.reserve(nx);
        for (std::size_t x = 0; x < nx; ++x) {
            Image2 p(nz, ny);
            for (std::size_t z = 0; z < nz; ++z)
                for (std::size_t y = 0; y < ny; ++y) p(z, y) = vol(z, y, x);
            planes.push_back(std::move(p));
        }
        break;
    }
    return planes;
}

Volume3 assemble_planes(const std::vector<Image2>& planes, PlaneAxis axis, Spacing3 spacing) {
    if (planes.empty()) throw ConfigError("cannot assemble a volume from zero planes");
    const std::size_t rows = planes.front().rows;
    const std::size_t cols = planes.front().cols;
    for (const auto& p : planes)
        if (p.rows != rows || p.cols != cols) throw ConfigError("planes have inconsistent sizes");

    Shape3 shape;
    switch (axis) {
    case PlaneAxis::axial: shape = {planes.size(), rows, cols}; break;
    case PlaneAxis::coronal: shape = {rows, planes.size(), cols}; break;
    case PlaneAxis::sagittal: shape = {rows, cols, planes.size()}; break;
    }
    Volume3 vol(shape, spacing);
    for (std::size_t k = 0; k < planes.size(); ++k) {
        const Image2& p = planes[k];
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                switch (axis) {
                case PlaneAxis::axial: vol(k, r, c) = p(r, c); break;
                case PlaneAxis::coronal: vol(r, k, c) = p(r, c); break;
                case PlaneAxis::sagittal: vol(r, c, k) = p(r, c); break;
                }
            }
    }
    return vol;
}

bool all_finite(std::span<const double> v) noexcept {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace tomodiff
