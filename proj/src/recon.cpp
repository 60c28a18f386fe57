#include "tomodiff/recon.hpp"

#include "tomodiff/errors.hpp"
#include "tomodiff/metrics.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <limits>

namespace tomodiff {

void ReconConfig::validate() const {
    schedule.validate();
    admm.validate();
    sampler.validate();
    if (sub_batch < 1) throw ConfigError("sub_batch must be >= 1");
    if (final_sweeps < 1) throw ConfigError("final_sweeps must be >= 1");
    if (pocs.n_sweeps < 1) throw ConfigError("POCS sweeps must be >= 1");
    if (log_every < 1) throw ConfigError("log_every must be >= 1");
}

std::vector<std::size_t> subbatch_sizes(std::size_t nz, std::size_t sub_batch) {
    if (sub_batch < 1) throw ConfigError("sub_batch must be >= 1");
    std::vector<std::size_t> sizes;
    for (std::size_t z = 0; z < nz; z += sub_batch) sizes.push_back(std::min(sub_batch, nz - z));
    return sizes;
}

void denoise_subbatched_inplace(Volume3& x, const ScorePrior& prior, const SigmaSchedule& schedule, int i,
                                std::size_t sub_batch, const SamplerConfig& cfg, const NoiseSource& noise) {
    if (sub_batch == 0) throw ConfigError("sub_batch must be >= 1");
    solve_step(x, prior, schedule, i, cfg, noise, sub_batch);
}

Volume3 denoise_subbatched(const Volume3& x, const ScorePrior& prior, const SigmaSchedule& schedule, int i,
                           std::size_t sub_batch, const SamplerConfig& cfg, const NoiseSource& noise) {
    Volume3 out = x;
    denoise_subbatched_inplace(out, prior, schedule, i, sub_batch, cfg, noise);
    return out;
}

Volume3 final_projection(const Volume3& x, const LinearOperator& A, std::span<const double> y, int n_sweeps,
                         bool enabled) {
    if (!enabled) return x;
    return project_data_consistency(x, A, y, n_sweeps);
}

namespace {

using Clock = std::chrono::steady_clock;

void check_inputs(std::span<const double> y, const LinearOperator& A, const ReconConfig& cfg) {
    cfg.validate();
    if (y.size() != A.range_size()) throw ConfigError("measurement size does not match the operator range");
    if (cfg.reference && cfg.reference->shape() != A.domain_shape())
        throw ConfigError("reference volume shape does not match the operator domain");
}

struct Logger {
    const LinearOperator& A;
    std::span<const double> y;
    const ReconConfig& cfg;
    double range = 0.0;
    std::vector<TraceEntry>& trace;

    Logger(const LinearOperator& A_, std::span<const double> y_, const ReconConfig& c, std::vector<TraceEntry>& t)
        : A(A_), y(y_), cfg(c), trace(t) {
        if (cfg.reference) {
            const auto d = cfg.reference->data();
            range = d.empty() ? 0.0 : *std::max_element(d.begin(), d.end());
        }
    }

    void step(int i, const Volume3& x) const {
        if (!x.all_finite()) throw NumericalError("non-finite iterate", i);
        if (i % cfg.log_every == 0 || i == cfg.schedule.N / 2) {
            const double psnr_v = (cfg.reference && range > 0.0) ? psnr(x, *cfg.reference, range)
                                                                  : std::numeric_limits<double>::quiet_NaN();
            trace.push_back({i, residual_norm(A, x, y), psnr_v});
        }
        if (cfg.on_step) cfg.on_step(i, x);
    }
};

ReconResult admm_family(std::span<const double> y, const LinearOperator& A, const ScorePrior& prior,
                        const ReconConfig& cfg, bool reset_each_step, const char* method) {
    check_inputs(y, A, cfg);
    const auto t0 = Clock::now();
    ReconResult res;
    res.method = method;
    const KeyedGaussianNoise noise(cfg.seed);
    const Volume3 aty = A.adjoint(y);
    ADMMState state = ADMMState::from(initial_sample(A.domain_shape(), cfg.schedule, noise));
    const Logger log(A, y, cfg, res.trace);
    ADMMConfig admm = cfg.admm;
    if (cfg.relative_weights) {
        res.weight_scale = normal_norm(A);
        admm.lambda *= res.weight_scale;
        admm.rho *= res.weight_scale;
    }

    for (int i = cfg.schedule.N - 1; i >= 0; --i) {
        denoise_subbatched_inplace(state.x, prior, cfg.schedule, i, cfg.sub_batch, cfg.sampler, noise);
        if (reset_each_step) state.reset_auxiliaries();
        for (int m = 0; m < admm.sweeps; ++m) admm_sweep(state, A, aty, admm);
        log.step(i, state.x);
    }
    res.x = final_projection(state.x, A, y, cfg.final_sweeps, cfg.final_projection);
    res.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return res;
}

} // namespace

ReconResult diffusion_mbir_fast(std::span<const double> y, const LinearOperator& A, const ScorePrior& prior,
                                const ReconConfig& cfg) {
    ReconResult r = admm_family(y, A, prior, cfg, cfg.reset_auxiliaries, "diffmbir-fast");
    r.nonstandard_admm = cfg.admm.sweeps != 1 || cfg.admm.cg_iters != 1;
    return r;
}

ReconResult diffusion_mbir_slow(std::span<const double> y, const LinearOperator& A, const ScorePrior& prior,
                                const ReconConfig& cfg) {
    return admm_family(y, A, prior, cfg, true, "diffmbir-slow");
}

ReconResult per_slice_pocs(std::span<const double> y, const LinearOperator& A, const ScorePrior& prior,
                           const ReconConfig& cfg) {
    check_inputs(y, A, cfg);
    const auto t0 = Clock::now();
    ReconResult res;
    res.method = "pocs";
    const KeyedGaussianNoise noise(cfg.seed);
    Volume3 x = initial_sample(A.domain_shape(), cfg.schedule, noise);
    const Logger log(A, y, cfg, res.trace);

    for (int i = cfg.schedule.N - 1; i >= 0; --i) {
        denoise_subbatched_inplace(x, prior, cfg.schedule, i, cfg.sub_batch, cfg.sampler, noise);
        A.project(x.data(), y, cfg.pocs);
        log.step(i, x);
    }
    res.x = final_projection(x, A, y, cfg.final_sweeps, cfg.final_projection);
    res.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return res;
}

std::string run_report_json(const ReconResult& r, const ReconConfig& cfg) {
    nlohmann::json j;
    j["method"] = r.method;
    j["config"] = {{"schedule", {{"sigma_min", cfg.schedule.sigma_min},
                                 {"sigma_max", cfg.schedule.sigma_max},
                                 {"N", cfg.schedule.N}}},
                   {"admm", {{"lambda", cfg.admm.lambda},
                             {"rho", cfg.admm.rho},
                             {"M", cfg.admm.sweeps},
                             {"K", cfg.admm.cg_iters},
                             {"relative_weights", cfg.relative_weights},
                             {"weight_scale", r.weight_scale}}},
                   {"n_corrector", cfg.sampler.n_corrector},
                   {"snr", cfg.sampler.snr},
                   {"sub_batch", cfg.sub_batch},
                   {"final_projection", cfg.final_projection},
                   {"final_sweeps", cfg.final_sweeps},
                   {"seed", cfg.seed}};
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& e : r.trace) {
        nlohmann::json t{{"step", e.step}, {"residual", e.residual}};
        if (std::isfinite(e.psnr)) t["psnr"] = e.psnr;
        else if (std::isinf(e.psnr)) t["psnr"] = "inf";
        trace.push_back(t);
    }
    j["trace"] = trace;
    j["wall_seconds"] = r.seconds;
    if (r.nonstandard_admm) j["warning"] = "fast variant run with M or K other than 1";
    return j.dump(2);
}

} // namespace tomodiff
