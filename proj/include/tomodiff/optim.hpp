#pragma once

#include "tomodiff/linops.hpp"
#include "tomodiff/volume.hpp"

#include <functional>
#include <span>
#include <vector>

namespace tomodiff {

// ---------------------------------------------------------------------------
// Proximal maps

/// sign(v) * max(|v| - tau, 0), elementwise. Throws ConfigError for tau < 0.
std::vector<double> soft_threshold(std::span<const double> v, double tau);
void soft_threshold_inplace(std::span<double> v, double tau);

/// Shrinks every voxel's difference vector (gx, gy, gz) toward zero by tau in
/// Euclidean norm: the prox of tau * ||.||_{2,1}.
void group_soft_threshold(std::span<double> gx, std::span<double> gy, std::span<double> gz, double tau);

// ---------------------------------------------------------------------------
// Conjugate gradient

using ApplyFn = std::function<void(std::span<const double>, std::span<double>)>;
/// Called after every iteration with the 1-based iteration count and iterate.
using CgObserver = std::function<void(int, std::span<const double>)>;

struct CgResult {
    int iterations = 0;
    double relative_residual = 0.0;
};

/// K iterations of CG on a symmetric positive semi-definite operator, starting
/// from the content of x. Stops early once ||r|| / ||b|| <= tol (tol = 0 runs
/// exactly K iterations unless the residual vanishes). Throws NumericalError
/// carrying the iteration index when p^T A p <= 0 with a nonzero residual.
CgResult cg_solve(const ApplyFn& op, std::span<const double> b, std::span<double> x, int K, double tol,
                  const CgObserver& observer = {});

Volume3 cg_solve(const ApplyFn& op, const Volume3& b, const Volume3& x0, int K, double tol);

// ---------------------------------------------------------------------------
// ADMM for min_x 1/2 ||y - A x||^2 + lambda ||D_z x||_1

struct ADMMConfig {
    double lambda = 0.04;
    double rho = 10.0;
    int sweeps = 1;   ///< M
    int cg_iters = 1; ///< K
    double cg_tol = 0.0;

    void validate() const;
};

struct ADMMState {
    Volume3 x;
    Volume3 z; ///< auxiliary for D_z x
    Volume3 w; ///< scaled dual

    /// x as given, z = w = 0.
    static ADMMState from(Volume3 x);
    void reset_auxiliaries();
};

/// Normal operator A^T A + rho * D_z^T D_z.
ApplyFn tv_z_normal_operator(const LinearOperator& A, double rho);

/// K CG iterations on (A^T A + rho D_z^T D_z) x = A^T y + rho D_z^T (z - w),
/// warm-started at x0. `aty` is A^T y, precomputed by the caller.
Volume3 admm_x_update(const LinearOperator& A, const Volume3& aty, const Volume3& z, const Volume3& w, double rho,
                      const Volume3& x0, int K, double cg_tol = 0.0);
Volume3 admm_x_update(const LinearOperator& A, std::span<const double> y, const Volume3& z, const Volume3& w,
                      double rho, const Volume3& x0, int K, double cg_tol = 0.0);

/// One pass of x-, z- and w-updates. Runs cfg.cg_iters CG iterations; the
/// sweeps field is ignored here (callers loop).
void admm_sweep(ADMMState& state, const LinearOperator& A, const Volume3& aty, const ADMMConfig& cfg);
ADMMState admm_sweep(const ADMMState& state, const LinearOperator& A, std::span<const double> y, const ADMMConfig& cfg);

/// n_outer sweeps from z = w = 0 starting at init.
Volume3 admm_tv(std::span<const double> y, const LinearOperator& A, const ADMMConfig& cfg, const Volume3& init,
                int n_outer);

/// 1/2 ||y - A x||^2 + lambda ||D_z x||_1
double tv_z_objective(const LinearOperator& A, std::span<const double> y, const Volume3& x, double lambda);

// ---------------------------------------------------------------------------
// Isotropic TV baseline: min_x 1/2 ||y - A x||^2 + lambda ||D x||_{2,1}

struct IsoTVConfig {
    double lambda = 0.5;
    double rho = 50.0;
    int n_outer = 30;
    int n_cg = 20;

    /// Sparse-view CT profile (the shipped default).
    static IsoTVConfig sparse_view() { return {0.5, 50.0, 30, 20}; }
    static IsoTVConfig limited_angle() { return {0.15, 40.0, 30, 20}; }
};

Volume3 admm_tv_isotropic(std::span<const double> y, const LinearOperator& A, const IsoTVConfig& cfg,
                          const Volume3* init = nullptr);

double iso_tv_objective(const LinearOperator& A, std::span<const double> y, const Volume3& x, double lambda);

} // namespace tomodiff
