#pragma once

#include "tomodiff/diffusion.hpp"
#include "tomodiff/linops.hpp"
#include "tomodiff/optim.hpp"
#include "tomodiff/volume.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tomodiff {

struct ReconConfig {
    SigmaSchedule schedule{};
    ADMMConfig admm{};
    /// Read lambda and rho as multiples of ||A^T A||, so one setting fits
    /// operators of any scale.
    bool relative_weights = false;
    SamplerConfig sampler{};
    /// Slices per denoising chunk.
    std::size_t sub_batch = 8;
    bool final_projection = false;
    /// ART sweeps of the closing projection (operators with exact projections ignore it).
    int final_sweeps = 30;
    /// Projection used after every step by the per-slice baseline.
    ProjectionOptions pocs{};
    std::uint64_t seed = 0;
    /// Zero z and w before every ADMM update of the fast variant. With M = K = 1
    /// this turns it into the slow variant.
    bool reset_auxiliaries = false;
    /// Residual (and PSNR, given a reference) is logged when i % log_every == 0.
    int log_every = 50;
    /// Optional ground truth for PSNR logging.
    std::shared_ptr<const Volume3> reference;
    /// Called after every step with the step index and current iterate. Optional.
    std::function<void(int, const Volume3&)> on_step;

    void validate() const;
};

struct TraceEntry {
    int step;
    double residual;
    double psnr; ///< NaN when no reference was given
};

struct ReconResult {
    Volume3 x;
    std::string method;
    std::vector<TraceEntry> trace;
    double seconds = 0.0;
    /// Set when the fast variant ran with M or K other than 1.
    bool nonstandard_admm = false;
    /// ||A^T A|| used to scale lambda and rho (1 when the weights are absolute).
    double weight_scale = 1.0;
};

/// Shared-variable DiffusionMBIR: z and w persist across diffusion steps.
ReconResult diffusion_mbir_fast(std::span<const double> y, const LinearOperator& A, const ScorePrior& prior,
                                const ReconConfig& cfg);

/// DiffusionMBIR with z, w re-initialised at every step and M ADMM sweeps of K CG iterations.
ReconResult diffusion_mbir_slow(std::span<const double> y, const LinearOperator& A, const ScorePrior& prior,
                                const ReconConfig& cfg);

/// Slice-wise diffusion followed by a measurement projection at every step.
ReconResult per_slice_pocs(std::span<const double> y, const LinearOperator& A, const ScorePrior& prior,
                           const ReconConfig& cfg);

/// Solve(.) at step i over contiguous z-chunks of at most sub_batch slices.
void denoise_subbatched_inplace(Volume3& x, const ScorePrior& prior, const SigmaSchedule& schedule, int i,
                                std::size_t sub_batch, const SamplerConfig& cfg, const NoiseSource& noise);
Volume3 denoise_subbatched(const Volume3& x, const ScorePrior& prior, const SigmaSchedule& schedule, int i,
                           std::size_t sub_batch, const SamplerConfig& cfg, const NoiseSource& noise);

/// Chunk sizes denoise_subbatched uses for nz slices.
std::vector<std::size_t> subbatch_sizes(std::size_t nz, std::size_t sub_batch);

/// project_data_consistency when enabled, identity otherwise.
Volume3 final_projection(const Volume3& x, const LinearOperator& A, std::span<const double> y, int n_sweeps,
                         bool enabled = true);

/// UTF-8 JSON run report: config echo, trace and wall time.
std::string run_report_json(const ReconResult& result, const ReconConfig& cfg);

} // namespace tomodiff
