#include "tomodiff/pipeline.hpp"

#include "tomodiff/errors.hpp"
#include "tomodiff/fourier.hpp"
#include "tomodiff/phantom.hpp"
#include "tomodiff/radon.hpp"
#include "tomodiff/sampling.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

namespace tomodiff {

Task parse_task(const std::string& name) {
    if (name == "svct") return Task::svct;
    if (name == "lact") return Task::lact;
    if (name == "csmri") return Task::csmri;
    throw ConfigError("unknown task: " + name + " (expected svct, lact or csmri)");
}

std::string to_string(Task task) {
    switch (task) {
    case Task::svct: return "svct";
    case Task::lact: return "lact";
    case Task::csmri: return "csmri";
    }
    return "?";
}

std::unique_ptr<LinearOperator> make_operator(const TaskSpec& spec, Shape3 shape, Spacing3 spacing) {
    const std::size_t n_det = default_detector_count(shape.nx, shape.ny);
    switch (spec.task) {
    case Task::svct:
        return std::make_unique<RadonOperator>(shape, sparse_view_geometry(spec.views, n_det), spacing);
    case Task::lact:
        return std::make_unique<RadonOperator>(
            shape, limited_angle_geometry(spec.la_start, spec.la_end, spec.la_views, n_det), spacing);
    case Task::csmri:
        return std::make_unique<FourierOperator>(
            shape, uniform1d_mask(shape.ny, shape.nx, spec.accel, spec.acs, spec.mask_seed));
    }
    throw ConfigError("unknown task");
}

Measurement simulate_measurement(const LinearOperator& A, const Volume3& truth, double noise_std, std::uint64_t seed) {
    if (truth.shape() != A.domain_shape()) throw ConfigError("phantom shape does not match the operator");
    if (noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
    Measurement y = A.apply(truth);
    if (noise_std > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd(0.0, noise_std);
        for (double& v : y) v += nd(rng);
    }
    return y;
}

bool method_needs_prior(const std::string& method) {
    return method == "diffmbir-fast" || method == "diffmbir-slow" || method == "pocs";
}

ReconResult run_method(const std::string& method, const TaskSpec& task, const LinearOperator& A,
                       std::span<const double> y, const ScorePrior* prior, const ReconConfig& cfg,
                       const BaselineConfig& baseline) {
    if (method_needs_prior(method) && !prior) throw ConfigError("method " + method + " needs a trained model");
    if (method == "diffmbir-fast") return diffusion_mbir_fast(y, A, *prior, cfg);
    if (method == "diffmbir-slow") return diffusion_mbir_slow(y, A, *prior, cfg);
    if (method == "pocs") return per_slice_pocs(y, A, *prior, cfg);

    const auto t0 = std::chrono::steady_clock::now();
    ReconResult r;
    r.method = method;
    if (method == "admm-tv") {
        ADMMConfig c = cfg.admm;
        c.cg_iters = baseline.admm_tv_cg;
        if (cfg.relative_weights) {
            r.weight_scale = normal_norm(A);
            c.lambda *= r.weight_scale;
            c.rho *= r.weight_scale;
        }
        r.x = admm_tv(y, A, c, Volume3(A.domain_shape()), baseline.admm_tv_outer);
    } else if (method == "admm-tv-iso") {
        IsoTVConfig c = baseline.iso_override ? baseline.iso
                        : task.task == Task::lact ? IsoTVConfig::limited_angle()
                                                  : IsoTVConfig::sparse_view();
        r.x = admm_tv_isotropic(y, A, c);
    } else if (method == "fbp") {
        const auto* radon = dynamic_cast<const RadonOperator*>(&A);
        if (!radon) throw ConfigError("fbp needs a CT task");
        const Shape3 s = A.domain_shape();
        Sinogram3 sino(s.nz, radon->geometry(), std::vector<double>(y.begin(), y.end()));
        r.x = fbp(sino, GridGeometry(s.nx, s.ny, s.nz, radon->spacing()), FbpFilter::ramp);
    } else if (method == "zero-filled") {
        r.x = A.adjoint(y);
    } else {
        throw ConfigError("unknown method: " + method);
    }
    r.trace.push_back({0, residual_norm(A, r.x, y), std::numeric_limits<double>::quiet_NaN()});
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::vector<SweepRow> view_sweep(const Volume3& truth, const std::vector<std::size_t>& views,
                                 const std::string& method, const ScorePrior* prior, const ReconConfig& cfg,
                                 const BaselineConfig& baseline) {
    std::vector<SweepRow> rows;
    for (std::size_t v : views) {
        TaskSpec t;
        t.task = Task::svct;
        t.views = v;
        const auto A = make_operator(t, truth.shape(), truth.spacing());
        const Measurement y = simulate_measurement(*A, truth);
        const ReconResult r = run_method(method, t, *A, y, prior, cfg, baseline);
        rows.push_back({v, per_plane_metrics(r.x, truth), r.seconds});
    }
    return rows;
}

double adjoint_error(const LinearOperator& A, int trials, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        std::vector<double> x(A.domain_size()), y(A.range_size()), ax(A.range_size()), aty(A.domain_size());
        for (double& v : x) v = nd(rng);
        for (double& v : y) v = nd(rng);
        A.apply(x, ax);
        A.adjoint(y, aty);
        double a = 0.0, b = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) a += ax[i] * y[i];
        for (std::size_t i = 0; i < x.size(); ++i) b += x[i] * aty[i];
        const double denom = std::max({std::fabs(a), std::fabs(b), 1e-300});
        worst = std::max(worst, std::fabs(a - b) / denom);
    }
    return worst;
}

std::vector<std::unique_ptr<LinearOperator>> standard_operators(std::size_t n) {
    const Shape3 s{n, n, n};
    std::vector<std::unique_ptr<LinearOperator>> ops;
    ops.push_back(std::make_unique<RadonOperator>(s, sparse_view_geometry(8, default_detector_count(n, n))));
    ops.push_back(std::make_unique<FourierOperator>(s, uniform1d_mask(n, n, 2.0, 0.15)));
    ops.push_back(std::make_unique<DiffZOperator>(s));
    ops.push_back(std::make_unique<DiffXYZOperator>(s));
    ops.push_back(std::make_unique<SubsampleOperator>(SubsampleOperator::random(s, 0.5, 1)));
    ops.push_back(std::make_unique<IdentityOperator>(s));
    return ops;
}

std::vector<AdjointCheck> adjoint_suite(std::size_t n, int trials, std::uint64_t seed) {
    std::vector<AdjointCheck> out;
    std::uint64_t k = 0;
    for (const auto& op : standard_operators(n)) out.push_back({op->name(), adjoint_error(*op, trials, seed + k++)});
    return out;
}

std::vector<Image2> training_slices(std::size_t n, std::size_t count, std::uint64_t seed) {
    std::vector<Image2> out;
    for (std::size_t k = 0; k < count; ++k) {
        const Volume3 v = shepp_logan_variant(n, seed + k);
        for (auto& im : plane_views(v, PlaneAxis::axial)) out.push_back(std::move(im));
    }
    return out;
}

} // namespace tomodiff
