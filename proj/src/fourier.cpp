#include "tomodiff/fourier.hpp"

#include "fftw_plan.hpp"
#include "tomodiff/errors.hpp"
#include "tomodiff/parallel.hpp"

#include <cmath>

namespace tomodiff {

SamplingMask::SamplingMask(std::size_t ny_, std::size_t nx_, bool fill) : ny(ny_), nx(nx_), keep(ny_ * nx_, fill ? 1 : 0) {}

SamplingMask SamplingMask::from_lines(std::size_t ny, std::size_t nx, const std::vector<std::size_t>& rows) {
    SamplingMask m(ny, nx, false);
    for (std::size_t r : rows) {
        if (r >= ny) throw ConfigError("sampling line index out of range");
        for (std::size_t x = 0; x < nx; ++x) m.keep[r * nx + x] = 1;
    }
    return m;
}

std::size_t SamplingMask::kept() const {
    std::size_t n = 0;
    for (auto k : keep) n += k != 0;
    return n;
}

void SamplingMask::validate() const {
    if (ny == 0 || nx == 0 || keep.size() != ny * nx) throw ConfigError("sampling mask has inconsistent shape");
    if (kept() == 0) throw ConfigError("sampling mask keeps no coefficients");
}

namespace {

// Index of the Hermitian partner -f of the centered frequency at index i.
std::size_t partner_index(std::size_t i, std::size_t n) {
    const long h = static_cast<long>(n / 2);
    const long f = static_cast<long>(i) - h;
    const long ni = static_cast<long>(n);
    return static_cast<std::size_t>((((-f + h) % ni) + ni) % ni);
}

} // namespace

FourierOperator::FourierOperator(Shape3 shape, SamplingMask mask) : shape_(shape), mask_(std::move(mask)) {
    mask_.validate();
    if (mask_.ny != shape.ny || mask_.nx != shape.nx) throw ConfigError("sampling mask shape does not match (ny, nx)");
    plan_ = std::make_unique<detail::FftPlan>(shape.ny, shape.nx);
    projection_weight_.assign(shape.plane(), 0.0);
    for (std::size_t y = 0; y < shape.ny; ++y)
        for (std::size_t x = 0; x < shape.nx; ++x) {
            if (!mask_(y, x)) continue;
            const bool paired = mask_(partner_index(y, shape.ny), partner_index(x, shape.nx));
            projection_weight_[y * shape.nx + x] = paired ? 1.0 : 2.0;
        }
}

FourierOperator::~FourierOperator() = default;

void FourierOperator::transform_plane(std::span<const double> image, std::span<double> kspace) const {
    const std::size_t ny = shape_.ny, nx = shape_.nx;
    const std::size_t hy = ny / 2, hx = nx / 2;
    detail::FftwBuffer buf(ny * nx);
    auto* b = buf.as_complex();
    // ifftshift on the way in, fftshift on the way out.
    for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t x = 0; x < nx; ++x) b[y * nx + x] = {image[((y + hy) % ny) * nx + (x + hx) % nx], 0.0};
    plan_->forward(buf.get());
    const double norm = 1.0 / std::sqrt(static_cast<double>(ny * nx));
    for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t x = 0; x < nx; ++x) {
            const std::complex<double> v = b[((y + ny - hy) % ny) * nx + (x + nx - hx) % nx] * norm;
            kspace[2 * (y * nx + x)] = v.real();
            kspace[2 * (y * nx + x) + 1] = v.imag();
        }
}

void FourierOperator::inverse_plane(std::span<const double> kspace, std::span<double> image_real) const {
    const std::size_t ny = shape_.ny, nx = shape_.nx;
    const std::size_t hy = ny / 2, hx = nx / 2;
    detail::FftwBuffer buf(ny * nx);
    auto* b = buf.as_complex();
    for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t x = 0; x < nx; ++x) {
            const std::size_t src = ((y + hy) % ny) * nx + (x + hx) % nx;
            b[y * nx + x] = {kspace[2 * src], kspace[2 * src + 1]};
        }
    plan_->backward(buf.get());
    const double norm = 1.0 / std::sqrt(static_cast<double>(ny * nx));
    for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t x = 0; x < nx; ++x)
            image_real[y * nx + x] = b[((y + ny - hy) % ny) * nx + (x + nx - hx) % nx].real() * norm;
}

void FourierOperator::apply(std::span<const double> x, std::span<double> y) const {
    const std::size_t plane = shape_.plane();
    parallel_for(shape_.nz, [&](std::size_t z0, std::size_t z1) {
        for (std::size_t z = z0; z < z1; ++z) {
            auto out = y.subspan(2 * z * plane, 2 * plane);
            transform_plane(x.subspan(z * plane, plane), out);
            for (std::size_t i = 0; i < plane; ++i)
                if (!mask_.keep[i]) out[2 * i] = out[2 * i + 1] = 0.0;
        }
    });
}

void FourierOperator::adjoint(std::span<const double> y, std::span<double> x) const {
    const std::size_t plane = shape_.plane();
    parallel_for(shape_.nz, [&](std::size_t z0, std::size_t z1) {
        std::vector<double> masked(2 * plane);
        for (std::size_t z = z0; z < z1; ++z) {
            const auto in = y.subspan(2 * z * plane, 2 * plane);
            for (std::size_t i = 0; i < plane; ++i) {
                const bool k = mask_.keep[i] != 0;
                masked[2 * i] = k ? in[2 * i] : 0.0;
                masked[2 * i + 1] = k ? in[2 * i + 1] : 0.0;
            }
            inverse_plane(masked, x.subspan(z * plane, plane));
        }
    });
}

void FourierOperator::project(std::span<double> x, std::span<const double> y, const ProjectionOptions&) const {
    const std::size_t plane = shape_.plane();
    parallel_for(shape_.nz, [&](std::size_t z0, std::size_t z1) {
        std::vector<double> k(2 * plane);
        std::vector<double> corr(plane);
        for (std::size_t z = z0; z < z1; ++z) {
            auto xs = x.subspan(z * plane, plane);
            const auto ys = y.subspan(2 * z * plane, 2 * plane);
            transform_plane(xs, k);
            for (std::size_t i = 0; i < plane; ++i) {
                const double w = projection_weight_[i];
                k[2 * i] = w * (ys[2 * i] - k[2 * i]);
                k[2 * i + 1] = w * (ys[2 * i + 1] - k[2 * i + 1]);
            }
            inverse_plane(k, corr);
            for (std::size_t i = 0; i < plane; ++i) xs[i] += corr[i];
        }
    });
}

ComplexVolume3 fourier_forward(const Volume3& vol, const SamplingMask& mask) {
    FourierOperator op(vol.shape(), mask);
    ComplexVolume3 out(vol.shape(), vol.spacing());
    op.apply(vol.data(), out.data());
    return out;
}

Volume3 fourier_adjoint(const ComplexVolume3& ksp, const SamplingMask& mask) {
    FourierOperator op(ksp.shape(), mask);
    Volume3 out(ksp.shape(), ksp.spacing());
    op.adjoint(ksp.data(), out.data());
    return out;
}

} // namespace tomodiff
