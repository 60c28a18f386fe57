#include "tomodiff/radon.hpp"

#include "fftw_plan.hpp"
#include "tomodiff/errors.hpp"
#include "tomodiff/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace tomodiff {

void ProjectionGeometry::validate() const {
    if (angles.empty()) throw ConfigError("projection geometry needs at least one view");
    if (n_det < 1) throw ConfigError("projection geometry needs at least one detector bin");
    if (!(det_spacing > 0.0) || !std::isfinite(det_spacing)) throw ConfigError("detector spacing must be positive");
    for (std::size_t i = 0; i < angles.size(); ++i) {
        const double a = angles[i];
        if (!(a >= 0.0 && a < std::numbers::pi)) throw ConfigError("view angle " + std::to_string(a) + " outside [0, pi)");
        if (i > 0 && !(a > angles[i - 1])) throw ConfigError("view angles must be strictly increasing");
    }
}

std::size_t default_detector_count(std::size_t nx, std::size_t ny) {
    return static_cast<std::size_t>(std::ceil(std::numbers::sqrt2 * static_cast<double>(std::max(nx, ny))));
}

Sinogram3::Sinogram3(std::size_t nz_, ProjectionGeometry g) : nz(nz_), geometry(std::move(g)) {
    data.assign(nz * geometry.n_views() * geometry.n_det, 0.0);
}

Sinogram3::Sinogram3(std::size_t nz_, ProjectionGeometry g, std::vector<double> d)
    : nz(nz_), geometry(std::move(g)), data(std::move(d)) {
    if (data.size() != nz * geometry.n_views() * geometry.n_det)
        throw ConfigError("sinogram data length does not match (nz, n_views, n_det)");
}

RaySystemMatrix build_ray_matrix(std::size_t ny, std::size_t nx, Spacing3 spacing, const ProjectionGeometry& geom) {
    geom.validate();
    const double dx = spacing.dx;
    const double dy = spacing.dy;
    const double step = 0.5 * std::min(dx, dy);
    const double half_diag = 0.5 * std::hypot(nx * dx, ny * dy) + std::max(dx, dy);
    const std::size_t n_samples = static_cast<std::size_t>(std::ceil(2.0 * half_diag / step)) + 1;
    const double cx = 0.5 * (static_cast<double>(nx) - 1.0);
    const double cy = 0.5 * (static_cast<double>(ny) - 1.0);
    const double cu = 0.5 * (static_cast<double>(geom.n_det) - 1.0);

    RaySystemMatrix m;
    m.rows = geom.n_views() * geom.n_det;
    m.cols = ny * nx;
    m.row_ptr.reserve(m.rows + 1);
    m.row_ptr.push_back(0);
    m.row_norm_sq.reserve(m.rows);

    std::vector<double> acc(m.cols, 0.0);
    std::vector<std::uint32_t> touched;
    std::vector<char> seen(m.cols, 0);

    for (std::size_t v = 0; v < geom.n_views(); ++v) {
        const double c = std::cos(geom.angles[v]);
        const double s = std::sin(geom.angles[v]);
        for (std::size_t d = 0; d < geom.n_det; ++d) {
            const double u = (static_cast<double>(d) - cu) * geom.det_spacing;
            touched.clear();
            for (std::size_t k = 0; k < n_samples; ++k) {
                const double t = -half_diag + static_cast<double>(k) * step;
                const double px = u * c - t * s;
                const double py = u * s + t * c;
                const double fx = px / dx + cx;
                const double fy = py / dy + cy;
                const double x0f = std::floor(fx);
                const double y0f = std::floor(fy);
                if (x0f < -1.0 || y0f < -1.0 || x0f > static_cast<double>(nx) || y0f > static_cast<double>(ny)) continue;
                const long x0 = static_cast<long>(x0f);
                const long y0 = static_cast<long>(y0f);
                const double wx = fx - x0f;
                const double wy = fy - y0f;
                const double taps[4] = {(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy};
                const long xs[4] = {x0, x0 + 1, x0, x0 + 1};
                const long ys[4] = {y0, y0, y0 + 1, y0 + 1};
                for (int q = 0; q < 4; ++q) {
                    if (xs[q] < 0 || ys[q] < 0 || xs[q] >= static_cast<long>(nx) || ys[q] >= static_cast<long>(ny)) continue;
                    if (taps[q] == 0.0) continue;
                    const auto col = static_cast<std::uint32_t>(ys[q] * static_cast<long>(nx) + xs[q]);
                    if (!seen[col]) {
                        seen[col] = 1;
                        touched.push_back(col);
                    }
                    acc[col] += taps[q] * step;
                }
            }
            std::sort(touched.begin(), touched.end());
            double norm_sq = 0.0;
            for (std::uint32_t col : touched) {
                m.col_idx.push_back(col);
                m.values.push_back(acc[col]);
                norm_sq += acc[col] * acc[col];
                acc[col] = 0.0;
                seen[col] = 0;
            }
            m.row_ptr.push_back(m.col_idx.size());
            m.row_norm_sq.push_back(norm_sq);
        }
    }
    return m;
}

RadonOperator::RadonOperator(Shape3 shape, ProjectionGeometry geometry, Spacing3 spacing)
    : shape_(shape), geometry_(std::move(geometry)), spacing_(spacing) {
    if (shape.voxels() == 0) throw ConfigError("radon: empty volume");
    matrix_ = build_ray_matrix(shape.ny, shape.nx, spacing_, geometry_);
}

void RadonOperator::apply(std::span<const double> x, std::span<double> y) const {
    const std::size_t plane = shape_.plane();
    const std::size_t rows = matrix_.rows;
    parallel_for(shape_.nz, [&](std::size_t z0, std::size_t z1) {
        for (std::size_t z = z0; z < z1; ++z) {
            const double* xs = x.data() + z * plane;
            double* ys = y.data() + z * rows;
            for (std::size_t r = 0; r < rows; ++r) {
                double acc = 0.0;
                for (std::size_t k = matrix_.row_ptr[r]; k < matrix_.row_ptr[r + 1]; ++k)
                    acc += matrix_.values[k] * xs[matrix_.col_idx[k]];
                ys[r] = acc;
            }
        }
    });
}

void RadonOperator::adjoint(std::span<const double> y, std::span<double> x) const {
    const std::size_t plane = shape_.plane();
    const std::size_t rows = matrix_.rows;
    parallel_for(shape_.nz, [&](std::size_t z0, std::size_t z1) {
        for (std::size_t z = z0; z < z1; ++z) {
            double* xs = x.data() + z * plane;
            const double* ys = y.data() + z * rows;
            std::fill(xs, xs + plane, 0.0);
            for (std::size_t r = 0; r < rows; ++r) {
                const double yr = ys[r];
                if (yr == 0.0) continue;
                for (std::size_t k = matrix_.row_ptr[r]; k < matrix_.row_ptr[r + 1]; ++k)
                    xs[matrix_.col_idx[k]] += matrix_.values[k] * yr;
            }
        }
    });
}

void RadonOperator::project(std::span<double> x, std::span<const double> y, const ProjectionOptions& opts) const {
    if (opts.n_sweeps < 1) throw ConfigError("ART needs at least one sweep");
    if (!(opts.relaxation > 0.0 && opts.relaxation < 2.0)) throw ConfigError("ART relaxation must lie in (0, 2)");
    const std::size_t plane = shape_.plane();
    const std::size_t rows = matrix_.rows;
    parallel_for(shape_.nz, [&](std::size_t z0, std::size_t z1) {
        for (std::size_t z = z0; z < z1; ++z) {
            double* xs = x.data() + z * plane;
            const double* ys = y.data() + z * rows;
            for (int sweep = 0; sweep < opts.n_sweeps; ++sweep) {
                for (std::size_t r = 0; r < rows; ++r) {
                    const double nsq = matrix_.row_norm_sq[r];
                    if (nsq <= 0.0) continue;
                    double ax = 0.0;
                    for (std::size_t k = matrix_.row_ptr[r]; k < matrix_.row_ptr[r + 1]; ++k)
                        ax += matrix_.values[k] * xs[matrix_.col_idx[k]];
                    const double g = opts.relaxation * (ys[r] - ax) / nsq;
                    for (std::size_t k = matrix_.row_ptr[r]; k < matrix_.row_ptr[r + 1]; ++k)
                        xs[matrix_.col_idx[k]] += g * matrix_.values[k];
                }
            }
        }
    });
}

Sinogram3 radon_forward(const Volume3& vol, const ProjectionGeometry& geom) {
    if (!vol.all_finite()) throw ConfigError("radon_forward: volume contains non-finite values");
    RadonOperator op(vol.shape(), geom, vol.spacing());
    Sinogram3 sino(vol.shape().nz, geom);
    op.apply(vol.data(), sino.data);
    return sino;
}

Volume3 radon_adjoint(const Sinogram3& sino, const GridGeometry& grid) {
    if (sino.nz != grid.nz) throw ConfigError("radon_adjoint: sinogram slice count does not match grid");
    RadonOperator op(grid.shape(), sino.geometry, grid.spacing);
    if (sino.data.size() != op.range_size()) throw ConfigError("radon_adjoint: sinogram size mismatch");
    Volume3 out(grid.shape(), grid.spacing);
    op.adjoint(sino.data, out.data());
    return out;
}

void ramp_filter_rows(std::span<double> rows, std::size_t n_det, double det_spacing, FbpFilter filter) {
    if (filter == FbpFilter::none) return;
    if (n_det == 0 || rows.size() % n_det != 0) throw ConfigError("ramp filter: row length mismatch");
    std::size_t pad = 1;
    while (pad < 2 * n_det) pad <<= 1;

    // Band-limited ramp kernel sampled on the detector grid, transformed once.
    const double tau = det_spacing;
    detail::FftPlan plan(1, pad);
    detail::FftwBuffer kernel(pad);
    auto* h = kernel.as_complex();
    for (std::size_t i = 0; i < pad; ++i) {
        const long n = i <= pad / 2 ? static_cast<long>(i) : static_cast<long>(i) - static_cast<long>(pad);
        double v = 0.0;
        if (n == 0) v = 1.0 / (4.0 * tau * tau);
        else if (n % 2 != 0) v = -1.0 / (std::numbers::pi * std::numbers::pi * static_cast<double>(n * n) * tau * tau);
        h[i] = {v, 0.0};
    }
    plan.forward(kernel.get());
    std::vector<double> response(pad);
    for (std::size_t i = 0; i < pad; ++i) {
        double r = h[i].real() * tau;
        if (filter == FbpFilter::ram_lak_windowed) {
            const double f = static_cast<double>(std::min(i, pad - i)) / static_cast<double>(pad / 2);
            r *= 0.5 * (1.0 + std::cos(std::numbers::pi * f));
        }
        response[i] = r;
    }

    const std::size_t n_rows = rows.size() / n_det;
    parallel_for(n_rows, [&](std::size_t r0, std::size_t r1) {
        detail::FftwBuffer buf(pad);
        auto* b = buf.as_complex();
        for (std::size_t r = r0; r < r1; ++r) {
            double* row = rows.data() + r * n_det;
            for (std::size_t i = 0; i < pad; ++i) b[i] = {i < n_det ? row[i] : 0.0, 0.0};
            plan.forward(buf.get());
            for (std::size_t i = 0; i < pad; ++i) b[i] *= response[i];
            plan.backward(buf.get());
            for (std::size_t i = 0; i < n_det; ++i) row[i] = b[i].real() / static_cast<double>(pad);
        }
    });
}

Volume3 fbp(const Sinogram3& sino, const GridGeometry& grid, FbpFilter filter) {
    sino.geometry.validate();
    std::vector<double> filtered = sino.data;
    ramp_filter_rows(filtered, sino.n_det(), sino.geometry.det_spacing, filter);
    Sinogram3 fs(sino.nz, sino.geometry, std::move(filtered));
    Volume3 out = radon_adjoint(fs, grid);
    // The ray-driven backprojector integrates dx*dy/det_spacing per unit of
    // detector signal; undo that so FBP is spacing independent.
    const double footprint = grid.spacing.dx * grid.spacing.dy / sino.geometry.det_spacing;
    const double scale = std::numbers::pi / static_cast<double>(sino.n_views()) / footprint;
    for (double& v : out.data()) v *= scale;
    return out;
}

} // namespace tomodiff
