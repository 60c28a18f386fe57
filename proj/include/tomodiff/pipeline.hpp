#pragma once

#include "tomodiff/diffusion.hpp"
#include "tomodiff/linops.hpp"
#include "tomodiff/metrics.hpp"
#include "tomodiff/optim.hpp"
#include "tomodiff/recon.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace tomodiff {

enum class Task { svct, lact, csmri };

Task parse_task(const std::string& name);
std::string to_string(Task task);

struct TaskSpec {
    Task task = Task::svct;
    std::size_t views = 8;       ///< sparse-view count
    double la_start = 0.0;       ///< limited-angle wedge, degrees
    double la_end = 90.0;
    std::size_t la_views = 90;
    double accel = 2.0;          ///< CS-MRI acceleration
    double acs = 0.15;           ///< CS-MRI ACS fraction
    std::uint64_t mask_seed = 0;
    double noise_std = 0.0;      ///< additive Gaussian measurement noise
    std::uint64_t noise_seed = 0;
};

std::unique_ptr<LinearOperator> make_operator(const TaskSpec& spec, Shape3 shape, Spacing3 spacing = {});

/// y = A x + noise_std * n.
Measurement simulate_measurement(const LinearOperator& A, const Volume3& truth, double noise_std = 0.0,
                                 std::uint64_t seed = 0);

struct BaselineConfig {
    int admm_tv_outer = 100;
    int admm_tv_cg = 20;
    /// Isotropic TV settings; unset means the task's profile.
    bool iso_override = false;
    IsoTVConfig iso{};
};

inline const std::vector<std::string>& method_names() {
    static const std::vector<std::string> names{"diffmbir-fast", "diffmbir-slow", "pocs", "admm-tv",
                                                "admm-tv-iso",   "fbp",           "zero-filled"};
    return names;
}

bool method_needs_prior(const std::string& method);

/// Runs one reconstruction method. Diffusion methods require a prior.
ReconResult run_method(const std::string& method, const TaskSpec& task, const LinearOperator& A,
                       std::span<const double> y, const ScorePrior* prior, const ReconConfig& cfg,
                       const BaselineConfig& baseline = {});

struct SweepRow {
    std::size_t views;
    MetricsReport metrics;
    double seconds;
};

/// Sparse-view reconstructions of `truth` for each view count.
std::vector<SweepRow> view_sweep(const Volume3& truth, const std::vector<std::size_t>& views,
                                 const std::string& method, const ScorePrior* prior, const ReconConfig& cfg,
                                 const BaselineConfig& baseline = {});

struct AdjointCheck {
    std::string name;
    double max_rel_error;
};

/// max over trials of |<A x, y> - <x, A^T y>| / max(|<A x, y>|, |<x, A^T y>|) with Gaussian x, y.
double adjoint_error(const LinearOperator& A, int trials, std::uint64_t seed);

/// Radon (8 views), Fourier (x2 line mask), D_z, D_xyz, subsampling and identity on an n^3 grid.
std::vector<std::unique_ptr<LinearOperator>> standard_operators(std::size_t n);

std::vector<AdjointCheck> adjoint_suite(std::size_t n, int trials, std::uint64_t seed);

/// Axial slices of `count` jittered Shepp-Logan volumes (seeds seed, seed+1, ...).
std::vector<Image2> training_slices(std::size_t n, std::size_t count, std::uint64_t seed);

} // namespace tomodiff
