#pragma once

#include "tomodiff/denoiser.hpp"
#include "tomodiff/volume.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tomodiff {

/// Geometric VE noise levels sigma(i) = sigma_min (sigma_max / sigma_min)^(i / (N - 1)).
struct SigmaSchedule {
    double sigma_min = 0.01;
    double sigma_max = 50.0;
    int N = 500;

    void validate() const;
    double sigma(int i) const;
    /// Continuous-time level sigma_min (sigma_max / sigma_min)^t for t in [0, 1].
    double sigma_at(double t) const;
};

/// Lower bound on the training time t.
inline constexpr double kTimeFloor = 1e-5;

// ---------------------------------------------------------------------------
// Noise streams

/// Standard normal draws keyed by (slice, step, phase), so any slice can be
/// processed in any order or on any worker and see the same numbers.
class NoiseSource {
public:
    virtual ~NoiseSource() = default;
    virtual void fill(std::span<double> out, std::uint64_t slice, std::uint64_t step, std::uint32_t phase) const = 0;
};

class KeyedGaussianNoise final : public NoiseSource {
public:
    explicit KeyedGaussianNoise(std::uint64_t seed) : seed_(seed) {}
    void fill(std::span<double> out, std::uint64_t slice, std::uint64_t step, std::uint32_t phase) const override;
    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
};

class ZeroNoise final : public NoiseSource {
public:
    void fill(std::span<double> out, std::uint64_t, std::uint64_t, std::uint32_t) const override;
};

/// Phase tags within one step.
inline constexpr std::uint32_t kPredictorPhase = 0;
inline std::uint32_t corrector_phase(int j) { return 1u + static_cast<std::uint32_t>(j); }

// ---------------------------------------------------------------------------
// Score priors

/// Estimates grad log p_sigma for one axial slice at a time.
class ScorePrior {
public:
    virtual ~ScorePrior() = default;

    virtual void score(std::span<const double> x, std::size_t ny, std::size_t nx, std::size_t slice_index,
                       double sigma, std::span<double> out) const = 0;

    /// True when concurrent calls on different slices are safe.
    virtual bool supports_batch() const { return true; }

    Volume3 score(const Volume3& x, double sigma) const;
};

/// Exact score of N(mu, sigma_data^2 I) perturbed by sigma:
/// (mu - x) / (sigma_data^2 + sigma^2). A single-slice mu is broadcast over z.
class GaussianScorePrior final : public ScorePrior {
public:
    using ScorePrior::score;

    GaussianScorePrior(Volume3 mu, double sigma_data);
    void score(std::span<const double> x, std::size_t ny, std::size_t nx, std::size_t slice_index, double sigma,
               std::span<double> out) const override;

    const Volume3& mean() const noexcept { return mu_; }
    double sigma_data() const noexcept { return sd_; }

private:
    Volume3 mu_;
    double sd_;
};

/// (D(x; sigma) - x) / sigma^2 from a trained denoiser.
class NetworkScorePrior final : public ScorePrior {
public:
    using ScorePrior::score;

    explicit NetworkScorePrior(std::shared_ptr<const DenoiserModel> model);
    void score(std::span<const double> x, std::size_t ny, std::size_t nx, std::size_t slice_index, double sigma,
               std::span<double> out) const override;

    const DenoiserModel& model() const noexcept { return *model_; }

private:
    std::shared_ptr<const DenoiserModel> model_;
};

class FunctionScorePrior final : public ScorePrior {
public:
    using ScorePrior::score;

    using Fn = std::function<void(std::span<const double> x, std::size_t slice_index, double sigma,
                                  std::span<double> out)>;
    explicit FunctionScorePrior(Fn fn, bool batch = true) : fn_(std::move(fn)), batch_(batch) {}
    void score(std::span<const double> x, std::size_t, std::size_t, std::size_t slice_index, double sigma,
               std::span<double> out) const override {
        fn_(x, slice_index, sigma, out);
    }
    bool supports_batch() const override { return batch_; }

private:
    Fn fn_;
    bool batch_;
};

// ---------------------------------------------------------------------------
// Predictor-corrector sampling

struct SamplerConfig {
    int n_corrector = 1;
    double snr = 0.16;
    /// Langevin step cap eta_max = eta_max_factor * sigma^2 at the corrector's level.
    double eta_max_factor = 1.0;

    void validate() const;
};

/// eta = 2 (snr ||eps|| / ||s||)^2, capped at eta_max (which also covers s = 0).
double langevin_step_size(std::span<const double> s, std::span<const double> eps, double snr, double eta_max);

/// Reverse-diffusion step from sigma(i) to sigma(i-1) on one slice:
/// x += (sigma_i^2 - sigma_{i-1}^2) s(x, sigma_i) + sqrt(sigma_i^2 - sigma_{i-1}^2) eps.
void predictor_slice(std::span<double> x, std::size_t ny, std::size_t nx, std::size_t slice_index,
                     const ScorePrior& prior, const SigmaSchedule& schedule, int i, const NoiseSource& noise);

/// Volume versions. Slices are scored independently (in parallel when the
/// prior allows), in z-chunks of at most sub_batch slices (0: one chunk).
/// The chunking never changes the result.
void predictor_step(Volume3& x, const ScorePrior& prior, const SigmaSchedule& schedule, int i,
                    const NoiseSource& noise, std::size_t sub_batch = 0);
/// One Langevin step at sigma(level) over the whole volume, with noise keyed
/// (step, corrector_phase(j)). eta = 2 (snr ||eps|| / ||s||)^2 uses the norms of
/// the full volume, so every slice shares one step size.
void corrector_step(Volume3& x, const ScorePrior& prior, const SigmaSchedule& schedule, int level,
                    const SamplerConfig& cfg, const NoiseSource& noise, int step, int j = 0,
                    std::size_t sub_batch = 0);
/// Solve(.): a predictor when i >= 1, then n_corrector Langevin steps at the
/// level the iterate now sits on, sigma(max(i - 1, 0)).
void solve_step(Volume3& x, const ScorePrior& prior, const SigmaSchedule& schedule, int i, const SamplerConfig& cfg,
                const NoiseSource& noise, std::size_t sub_batch = 0);

/// x_N ~ N(0, sigma_max^2 I), keyed as step N.
Volume3 initial_sample(Shape3 shape, const SigmaSchedule& schedule, const NoiseSource& noise, Spacing3 spacing = {});

/// Unconditional sampling: initial_sample, then solve_step for i = N-1 .. 0.
/// Throws NumericalError with the step index if the iterate becomes non-finite.
Volume3 sample_prior(const ScorePrior& prior, Shape3 shape, const SigmaSchedule& schedule, const SamplerConfig& cfg,
                     const NoiseSource& noise);

// ---------------------------------------------------------------------------
// Denoising score matching

/// Mean over the batch of sigma^2 ||s(x_t) - (-(x_t - x0) / sigma^2)||^2 with
/// t ~ U[kTimeFloor, 1], sigma = schedule.sigma_at(t), x_t = x0 + sigma eps.
double dsm_loss(const ScorePrior& model, const std::vector<Image2>& x0_batch, const SigmaSchedule& schedule,
                std::mt19937_64& rng);

struct TrainConfig {
    int epochs = 40;
    int batch_size = 16;
    double lr = 1e-3;
    int warmup_steps = 100;
    double grad_clip = 1.0;
    double ema_decay = 0.999;
    std::uint64_t seed = 0;
    DenoiserArch arch{};
    /// Called after every optimizer step with (step, loss). Optional.
    std::function<void(long, double)> on_step;
};

struct TrainResult {
    DenoiserModel model; ///< EMA weights
    std::vector<double> loss_trace;
};

/// Adam on the DSM objective over shuffled mini-batches. Deterministic for a
/// fixed seed. Throws NumericalError (step index) if the loss goes non-finite.
TrainResult train_denoiser(const std::vector<Image2>& dataset, const SigmaSchedule& schedule, const TrainConfig& cfg);

/// FNV-1a over the float32 images, hex encoded.
std::string dataset_hash(const std::vector<Image2>& slices);

} // namespace tomodiff
