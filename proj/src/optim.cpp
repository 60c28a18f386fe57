#include "tomodiff/optim.hpp"

#include "tomodiff/errors.hpp"
#include "tomodiff/vecops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tomodiff {

std::vector<double> soft_threshold(std::span<const double> v, double tau) {
    std::vector<double> out(v.begin(), v.end());
    soft_threshold_inplace(out, tau);
    return out;
}

void soft_threshold_inplace(std::span<double> v, double tau) {
    if (!(tau >= 0.0)) throw ConfigError("soft threshold needs tau >= 0");
    for (double& a : v) {
        const double m = std::fabs(a) - tau;
        a = m > 0.0 ? std::copysign(m, a) : 0.0;
    }
}

void group_soft_threshold(std::span<double> gx, std::span<double> gy, std::span<double> gz, double tau) {
    if (!(tau >= 0.0)) throw ConfigError("group soft threshold needs tau >= 0");
    for (std::size_t i = 0; i < gx.size(); ++i) {
        const double n = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i] + gz[i] * gz[i]);
        const double f = n > tau ? (n - tau) / n : 0.0;
        gx[i] *= f;
        gy[i] *= f;
        gz[i] *= f;
    }
}

CgResult cg_solve(const ApplyFn& op, std::span<const double> b, std::span<double> x, int K, double tol,
                  const CgObserver& observer) {
    if (K < 1) throw ConfigError("CG needs K >= 1");
    if (b.size() != x.size()) throw ConfigError("CG: right-hand side and iterate sizes differ");
    const std::size_t n = b.size();
    std::vector<double> r(n), p(n), ap(n);
    op(x, ap);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
    double rr = vec::dot(r, r);
    const double bnorm = vec::norm(b);
    const double denom = bnorm > 0.0 ? bnorm : 1.0;
    CgResult result{0, std::sqrt(rr) / denom};
    if (rr == 0.0 || (tol > 0.0 && result.relative_residual <= tol)) return result;

    p = r;
    for (int it = 1; it <= K; ++it) {
        op(p, ap);
        const double pap = vec::dot(p, ap);
        if (!(pap > 0.0)) {
            if (rr <= 1e-30 * bnorm * bnorm) return result;
            throw NumericalError("CG breakdown: p^T A p = " + std::to_string(pap), it);
        }
        const double alpha = rr / pap;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        const double rr_new = vec::dot(r, r);
        result = {it, std::sqrt(rr_new) / denom};
        if (observer) observer(it, x);
        if (rr_new == 0.0 || (tol > 0.0 && result.relative_residual <= tol)) break;
        const double beta = rr_new / rr;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
        rr = rr_new;
    }
    return result;
}

Volume3 cg_solve(const ApplyFn& op, const Volume3& b, const Volume3& x0, int K, double tol) {
    if (b.shape() != x0.shape()) throw ConfigError("CG: b and x0 shapes differ");
    Volume3 x = x0;
    cg_solve(op, b.data(), x.data(), K, tol);
    return x;
}

// ---------------------------------------------------------------------------

void ADMMConfig::validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("ADMM lambda must be >= 0");
    if (!(rho > 0.0)) throw ConfigError("ADMM rho must be > 0");
    if (sweeps < 1) throw ConfigError("ADMM sweeps (M) must be >= 1");
    if (cg_iters < 1) throw ConfigError("CG iterations (K) must be >= 1");
    if (!(cg_tol >= 0.0)) throw ConfigError("CG tolerance must be >= 0");
}

ADMMState ADMMState::from(Volume3 x) {
    ADMMState s;
    s.z = Volume3(x.shape(), x.spacing());
    s.w = Volume3(x.shape(), x.spacing());
    s.x = std::move(x);
    return s;
}

void ADMMState::reset_auxiliaries() {
    std::fill(z.data().begin(), z.data().end(), 0.0);
    std::fill(w.data().begin(), w.data().end(), 0.0);
}

ApplyFn tv_z_normal_operator(const LinearOperator& A, double rho) {
    const Shape3 shape = A.domain_shape();
    return [&A, rho, shape](std::span<const double> v, std::span<double> out) {
        std::vector<double> av(A.range_size());
        A.apply(v, av);
        A.adjoint(av, out);
        std::vector<double> dv(shape.voxels()), dtdv(shape.voxels());
        diff_z_apply(shape, v, dv);
        diff_z_adjoint_apply(shape, dv, dtdv);
        vec::axpy(rho, dtdv, out);
    };
}

Volume3 admm_x_update(const LinearOperator& A, const Volume3& aty, const Volume3& z, const Volume3& w, double rho,
                      const Volume3& x0, int K, double cg_tol) {
    if (!(rho > 0.0)) throw ConfigError("ADMM rho must be > 0");
    const Shape3 shape = A.domain_shape();
    if (aty.shape() != shape || z.shape() != shape || w.shape() != shape || x0.shape() != shape)
        throw ConfigError("ADMM x-update: shapes do not match the operator domain");
    std::vector<double> zw(shape.voxels());
    for (std::size_t i = 0; i < zw.size(); ++i) zw[i] = z.data()[i] - w.data()[i];
    Volume3 b(shape, x0.spacing());
    diff_z_adjoint_apply(shape, zw, b.data());
    for (std::size_t i = 0; i < zw.size(); ++i) b.data()[i] = aty.data()[i] + rho * b.data()[i];
    return cg_solve(tv_z_normal_operator(A, rho), b, x0, K, cg_tol);
}

Volume3 admm_x_update(const LinearOperator& A, std::span<const double> y, const Volume3& z, const Volume3& w,
                      double rho, const Volume3& x0, int K, double cg_tol) {
    return admm_x_update(A, A.adjoint(y), z, w, rho, x0, K, cg_tol);
}

void admm_sweep(ADMMState& state, const LinearOperator& A, const Volume3& aty, const ADMMConfig& cfg) {
    cfg.validate();
    state.x = admm_x_update(A, aty, state.z, state.w, cfg.rho, state.x, cfg.cg_iters, cfg.cg_tol);
    const Shape3 shape = state.x.shape();
    std::vector<double> dx(shape.voxels());
    diff_z_apply(shape, state.x.data(), dx);
    auto z = state.z.data();
    auto w = state.w.data();
    const double tau = cfg.lambda / cfg.rho;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        const double v = dx[i] + w[i];
        const double m = std::fabs(v) - tau;
        z[i] = m > 0.0 ? std::copysign(m, v) : 0.0;
        w[i] = w[i] + dx[i] - z[i];
    }
}

ADMMState admm_sweep(const ADMMState& state, const LinearOperator& A, std::span<const double> y, const ADMMConfig& cfg) {
    ADMMState next = state;
    admm_sweep(next, A, A.adjoint(y), cfg);
    return next;
}

Volume3 admm_tv(std::span<const double> y, const LinearOperator& A, const ADMMConfig& cfg, const Volume3& init,
                int n_outer) {
    if (n_outer < 0) throw ConfigError("n_outer must be >= 0");
    if (n_outer == 0) return init;
    const Volume3 aty = A.adjoint(y);
    ADMMState state = ADMMState::from(init);
    for (int k = 0; k < n_outer; ++k) admm_sweep(state, A, aty, cfg);
    return state.x;
}

double tv_z_objective(const LinearOperator& A, std::span<const double> y, const Volume3& x, double lambda) {
    const double r = residual_norm(A, x, y);
    const Volume3 d = diff_z(x);
    double l1 = 0.0;
    for (double v : d.data()) l1 += std::fabs(v);
    return 0.5 * r * r + lambda * l1;
}

// ---------------------------------------------------------------------------

Volume3 admm_tv_isotropic(std::span<const double> y, const LinearOperator& A, const IsoTVConfig& cfg,
                          const Volume3* init) {
    if (!(cfg.lambda >= 0.0) || !(cfg.rho > 0.0) || cfg.n_outer < 0 || cfg.n_cg < 1)
        throw ConfigError("invalid isotropic TV configuration");
    const Shape3 shape = A.domain_shape();
    const std::size_t n = shape.voxels();
    const DiffXYZOperator D(shape);
    Volume3 x = init ? *init : Volume3(shape);
    if (x.shape() != shape) throw ConfigError("isotropic TV: init shape mismatch");
    if (cfg.n_outer == 0) return x;

    const Volume3 aty = A.adjoint(y);
    std::vector<double> z(3 * n, 0.0), w(3 * n, 0.0), dx(3 * n), zw(3 * n);
    const double rho = cfg.rho;
    const ApplyFn normal = [&](std::span<const double> v, std::span<double> out) {
        std::vector<double> av(A.range_size()), dv(3 * n), dtdv(n);
        A.apply(v, av);
        A.adjoint(av, out);
        D.apply(v, dv);
        D.adjoint(dv, dtdv);
        vec::axpy(rho, dtdv, out);
    };
    Volume3 b(shape);
    const double tau = cfg.lambda / rho;
    for (int k = 0; k < cfg.n_outer; ++k) {
        for (std::size_t i = 0; i < 3 * n; ++i) zw[i] = z[i] - w[i];
        D.adjoint(zw, b.data());
        for (std::size_t i = 0; i < n; ++i) b.data()[i] = aty.data()[i] + rho * b.data()[i];
        cg_solve(normal, b.data(), x.data(), cfg.n_cg, 0.0);
        D.apply(x.data(), dx);
        for (std::size_t i = 0; i < 3 * n; ++i) z[i] = dx[i] + w[i];
        std::span<double> zs(z);
        group_soft_threshold(zs.subspan(0, n), zs.subspan(n, n), zs.subspan(2 * n, n), tau);
        for (std::size_t i = 0; i < 3 * n; ++i) w[i] += dx[i] - z[i];
    }
    return x;
}

double iso_tv_objective(const LinearOperator& A, std::span<const double> y, const Volume3& x, double lambda) {
    const double r = residual_norm(A, x, y);
    const auto d = diff_xyz(x);
    double tv = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        tv += std::sqrt(d[0].data()[i] * d[0].data()[i] + d[1].data()[i] * d[1].data()[i] +
                        d[2].data()[i] * d[2].data()[i]);
    return 0.5 * r * r + lambda * tv;
}

} // namespace tomodiff
