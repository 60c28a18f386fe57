#include "tomodiff/linops.hpp"

#include "tomodiff/errors.hpp"
#include "tomodiff/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace tomodiff {

void LinearOperator::project(std::span<double>, std::span<const double>, const ProjectionOptions&) const {
    throw ConfigError("operator '" + name() + "' has no measurement-subspace projection");
}

Measurement LinearOperator::apply(const Volume3& x) const {
    if (x.shape() != domain_shape()) throw ConfigError(name() + ": volume shape does not match operator domain");
    Measurement y(range_size(), 0.0);
    apply(x.data(), y);
    return y;
}

Volume3 LinearOperator::adjoint(std::span<const double> y) const {
    if (y.size() != range_size()) throw ConfigError(name() + ": measurement size does not match operator range");
    Volume3 x(domain_shape());
    adjoint(y, x.data());
    return x;
}

double residual_norm(const LinearOperator& A, const Volume3& x, std::span<const double> y) {
    if (y.size() != A.range_size()) throw ConfigError("measurement size does not match operator range");
    Measurement ax = A.apply(x);
    double s = 0.0;
    for (std::size_t i = 0; i < ax.size(); ++i) s += (ax[i] - y[i]) * (ax[i] - y[i]);
    return std::sqrt(s);
}

double normal_norm(const LinearOperator& A, int iters, std::uint64_t seed) {
    if (iters < 1) throw ConfigError("normal_norm needs at least one iteration");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Volume3 v(A.domain_shape());
    for (double& e : v.storage()) e = nd(rng);
    double lambda = 0.0;
    for (int k = 0; k < iters; ++k) {
        double n = 0.0;
        for (double e : v.storage()) n += e * e;
        n = std::sqrt(n);
        if (n == 0.0) return 0.0;
        for (double& e : v.storage()) e /= n;
        v = A.adjoint(A.apply(v));
        lambda = 0.0;
        for (double e : v.storage()) lambda += e * e;
        lambda = std::sqrt(lambda);
    }
    return lambda;
}

void IdentityOperator::apply(std::span<const double> x, std::span<double> y) const {
    std::copy(x.begin(), x.end(), y.begin());
}

void IdentityOperator::adjoint(std::span<const double> y, std::span<double> x) const {
    std::copy(y.begin(), y.end(), x.begin());
}

void IdentityOperator::project(std::span<double> x, std::span<const double> y, const ProjectionOptions&) const {
    std::copy(y.begin(), y.end(), x.begin());
}

SubsampleOperator::SubsampleOperator(Shape3 shape, const std::vector<bool>& keep) : shape_(shape) {
    if (keep.size() != shape.voxels()) throw ConfigError("subsample mask size does not match shape");
    for (std::size_t i = 0; i < keep.size(); ++i)
        if (keep[i]) kept_.push_back(i);
}

SubsampleOperator SubsampleOperator::random(Shape3 shape, double fraction, unsigned long long seed) {
    std::mt19937_64 gen(seed);
    std::bernoulli_distribution coin(fraction);
    std::vector<bool> keep(shape.voxels());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = coin(gen);
    return SubsampleOperator(shape, keep);
}

void SubsampleOperator::apply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t j = 0; j < kept_.size(); ++j) y[j] = x[kept_[j]];
}

void SubsampleOperator::adjoint(std::span<const double> y, std::span<double> x) const {
    std::fill(x.begin(), x.end(), 0.0);
    for (std::size_t j = 0; j < kept_.size(); ++j) x[kept_[j]] = y[j];
}

void SubsampleOperator::project(std::span<double> x, std::span<const double> y, const ProjectionOptions&) const {
    for (std::size_t j = 0; j < kept_.size(); ++j) x[kept_[j]] = y[j];
}

void ZeroOperator::apply(std::span<const double>, std::span<double> y) const { std::fill(y.begin(), y.end(), 0.0); }

void ZeroOperator::adjoint(std::span<const double>, std::span<double> x) const {
    std::fill(x.begin(), x.end(), 0.0);
}

// ---------------------------------------------------------------------------

void diff_z_apply(const Shape3& s, std::span<const double> x, std::span<double> out) {
    const std::size_t plane = s.plane();
    parallel_for(s.nz, [&](std::size_t z0, std::size_t z1) {
        for (std::size_t z = z0; z < z1; ++z) {
            double* o = out.data() + z * plane;
            if (z + 1 == s.nz) {
                std::fill(o, o + plane, 0.0);
                continue;
            }
            const double* a = x.data() + z * plane;
            const double* b = a + plane;
            for (std::size_t i = 0; i < plane; ++i) o[i] = b[i] - a[i];
        }
    });
}

void diff_z_adjoint_apply(const Shape3& s, std::span<const double> d, std::span<double> out) {
    // (D^T d)[k] = d[k-1] - d[k], with d[-1] = 0 and d[nz-1] treated as 0.
    const std::size_t plane = s.plane();
    parallel_for(s.nz, [&](std::size_t z0, std::size_t z1) {
        for (std::size_t z = z0; z < z1; ++z) {
            double* o = out.data() + z * plane;
            const double* cur = d.data() + z * plane;
            const double* prev = z > 0 ? cur - plane : nullptr;
            const bool has_cur = z + 1 < s.nz;
            for (std::size_t i = 0; i < plane; ++i) {
                double v = 0.0;
                if (prev) v += prev[i];
                if (has_cur) v -= cur[i];
                o[i] = v;
            }
        }
    });
}

namespace {

void diff_y_apply(const Shape3& s, std::span<const double> x, std::span<double> out) {
    for (std::size_t z = 0; z < s.nz; ++z)
        for (std::size_t y = 0; y < s.ny; ++y) {
            const std::size_t row = (z * s.ny + y) * s.nx;
            for (std::size_t i = 0; i < s.nx; ++i)
                out[row + i] = (y + 1 < s.ny) ? x[row + s.nx + i] - x[row + i] : 0.0;
        }
}

void diff_y_adjoint_apply(const Shape3& s, std::span<const double> d, std::span<double> out) {
    for (std::size_t z = 0; z < s.nz; ++z)
        for (std::size_t y = 0; y < s.ny; ++y) {
            const std::size_t row = (z * s.ny + y) * s.nx;
            for (std::size_t i = 0; i < s.nx; ++i) {
                double v = 0.0;
                if (y > 0) v += d[row - s.nx + i];
                if (y + 1 < s.ny) v -= d[row + i];
                out[row + i] = v;
            }
        }
}

void diff_x_apply(const Shape3& s, std::span<const double> x, std::span<double> out) {
    const std::size_t rows = s.nz * s.ny;
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t b = r * s.nx;
        for (std::size_t i = 0; i < s.nx; ++i) out[b + i] = (i + 1 < s.nx) ? x[b + i + 1] - x[b + i] : 0.0;
    }
}

void diff_x_adjoint_apply(const Shape3& s, std::span<const double> d, std::span<double> out) {
    const std::size_t rows = s.nz * s.ny;
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t b = r * s.nx;
        for (std::size_t i = 0; i < s.nx; ++i) {
            double v = 0.0;
            if (i > 0) v += d[b + i - 1];
            if (i + 1 < s.nx) v -= d[b + i];
            out[b + i] = v;
        }
    }
}

} // namespace

Volume3 diff_z(const Volume3& vol) {
    Volume3 out(vol.shape(), vol.spacing());
    diff_z_apply(vol.shape(), vol.data(), out.data());
    return out;
}

Volume3 diff_z_adjoint(const Volume3& vol) {
    Volume3 out(vol.shape(), vol.spacing());
    diff_z_adjoint_apply(vol.shape(), vol.data(), out.data());
    return out;
}

std::array<Volume3, 3> diff_xyz(const Volume3& vol) {
    std::array<Volume3, 3> d{Volume3(vol.shape(), vol.spacing()), Volume3(vol.shape(), vol.spacing()),
                             Volume3(vol.shape(), vol.spacing())};
    diff_x_apply(vol.shape(), vol.data(), d[0].data());
    diff_y_apply(vol.shape(), vol.data(), d[1].data());
    diff_z_apply(vol.shape(), vol.data(), d[2].data());
    return d;
}

Volume3 diff_xyz_adjoint(const std::array<Volume3, 3>& d) {
    const Shape3 s = d[0].shape();
    if (d[1].shape() != s || d[2].shape() != s) throw ConfigError("difference components have mismatched shapes");
    Volume3 out(s, d[0].spacing());
    std::vector<double> tmp(s.voxels());
    diff_x_adjoint_apply(s, d[0].data(), out.data());
    diff_y_adjoint_apply(s, d[1].data(), tmp);
    for (std::size_t i = 0; i < tmp.size(); ++i) out.data()[i] += tmp[i];
    diff_z_adjoint_apply(s, d[2].data(), tmp);
    for (std::size_t i = 0; i < tmp.size(); ++i) out.data()[i] += tmp[i];
    return out;
}

void DiffZOperator::apply(std::span<const double> x, std::span<double> y) const { diff_z_apply(shape_, x, y); }

void DiffZOperator::adjoint(std::span<const double> y, std::span<double> x) const {
    diff_z_adjoint_apply(shape_, y, x);
}

void DiffXYZOperator::apply(std::span<const double> x, std::span<double> y) const {
    const std::size_t n = shape_.voxels();
    diff_x_apply(shape_, x, y.subspan(0, n));
    diff_y_apply(shape_, x, y.subspan(n, n));
    diff_z_apply(shape_, x, y.subspan(2 * n, n));
}

void DiffXYZOperator::adjoint(std::span<const double> y, std::span<double> x) const {
    const std::size_t n = shape_.voxels();
    std::vector<double> tmp(n);
    diff_x_adjoint_apply(shape_, y.subspan(0, n), x);
    diff_y_adjoint_apply(shape_, y.subspan(n, n), tmp);
    for (std::size_t i = 0; i < n; ++i) x[i] += tmp[i];
    diff_z_adjoint_apply(shape_, y.subspan(2 * n, n), tmp);
    for (std::size_t i = 0; i < n; ++i) x[i] += tmp[i];
}

Volume3 project_data_consistency(const Volume3& x, const LinearOperator& A, std::span<const double> y,
                                 int n_sweeps, double relaxation) {
    if (x.shape() != A.domain_shape()) throw ConfigError("volume shape does not match operator domain");
    if (y.size() != A.range_size()) throw ConfigError("measurement size does not match operator range");
    if (n_sweeps < 1) throw ConfigError("n_sweeps must be >= 1");
    if (!all_finite(y)) throw ConfigError("measurement contains non-finite values");
    Volume3 out = x;
    A.project(out.data(), y, ProjectionOptions{n_sweeps, relaxation});
    return out;
}

} // namespace tomodiff
