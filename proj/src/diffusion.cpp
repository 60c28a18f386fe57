#include "tomodiff/diffusion.hpp"

#include "tomodiff/errors.hpp"
#include "tomodiff/parallel.hpp"
#include "tomodiff/vecops.hpp"
#include "nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>

namespace tomodiff {

void SigmaSchedule::validate() const {
    if (!(sigma_min > 0.0)) throw ConfigError("sigma_min must be > 0");
    if (!(sigma_max > sigma_min)) throw ConfigError("sigma_max must exceed sigma_min");
    if (N < 2) throw ConfigError("schedule needs N >= 2");
}

double SigmaSchedule::sigma(int i) const {
    if (i < 0 || i >= N) throw ConfigError("schedule index out of range: " + std::to_string(i));
    if (i == 0) return sigma_min;
    if (i == N - 1) return sigma_max;
    return sigma_min * std::pow(sigma_max / sigma_min, static_cast<double>(i) / (N - 1));
}

double SigmaSchedule::sigma_at(double t) const { return sigma_min * std::pow(sigma_max / sigma_min, t); }

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void for_slices(std::size_t z0, std::size_t z1, bool parallel, const std::function<void(std::size_t)>& body) {
    if (z1 <= z0) return;
    if (!parallel) {
        for (std::size_t z = z0; z < z1; ++z) body(z);
        return;
    }
    parallel_for(z1 - z0, [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) body(z0 + k);
    });
}

} // namespace

void KeyedGaussianNoise::fill(std::span<double> out, std::uint64_t slice, std::uint64_t step,
                              std::uint32_t phase) const {
    std::uint64_t h = splitmix64(seed_);
    h = splitmix64(h ^ slice);
    h = splitmix64(h ^ step);
    h = splitmix64(h ^ phase);
    std::mt19937_64 rng(h);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (double& v : out) v = nd(rng);
}

void ZeroNoise::fill(std::span<double> out, std::uint64_t, std::uint64_t, std::uint32_t) const {
    std::fill(out.begin(), out.end(), 0.0);
}

// ---------------------------------------------------------------------------

Volume3 ScorePrior::score(const Volume3& x, double sigma) const {
    const Shape3 s = x.shape();
    Volume3 out(s, x.spacing());
    for_slices(0, s.nz, supports_batch(), [&](std::size_t z) {
        score(x.slice(z), s.ny, s.nx, z, sigma, out.slice(z));
    });
    return out;
}

GaussianScorePrior::GaussianScorePrior(Volume3 mu, double sigma_data) : mu_(std::move(mu)), sd_(sigma_data) {
    if (!(sigma_data > 0.0)) throw ConfigError("sigma_data must be > 0");
    if (mu_.size() == 0) throw ConfigError("Gaussian prior needs a non-empty mean");
}

void GaussianScorePrior::score(std::span<const double> x, std::size_t ny, std::size_t nx, std::size_t slice_index,
                               double sigma, std::span<double> out) const {
    const Shape3 ms = mu_.shape();
    if (ms.ny != ny || ms.nx != nx || x.size() != ny * nx || out.size() != x.size())
        throw ConfigError("Gaussian prior: slice shape does not match the mean");
    if (ms.nz != 1 && slice_index >= ms.nz) throw ConfigError("Gaussian prior: slice index out of range");
    const auto mu = mu_.slice(ms.nz == 1 ? 0 : slice_index);
    const double inv = 1.0 / (sd_ * sd_ + sigma * sigma);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (mu[i] - x[i]) * inv;
}

NetworkScorePrior::NetworkScorePrior(std::shared_ptr<const DenoiserModel> model) : model_(std::move(model)) {
    if (!model_) throw ConfigError("network prior needs a model");
}

void NetworkScorePrior::score(std::span<const double> x, std::size_t ny, std::size_t nx, std::size_t,
                              double sigma, std::span<double> out) const {
    model_->denoise(x, ny, nx, sigma, out);
    const double inv = 1.0 / (sigma * sigma);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (out[i] - x[i]) * inv;
}

// ---------------------------------------------------------------------------

void SamplerConfig::validate() const {
    if (n_corrector < 0) throw ConfigError("n_corrector must be >= 0");
    if (!(snr > 0.0)) throw ConfigError("snr must be > 0");
    if (!(eta_max_factor > 0.0)) throw ConfigError("eta_max_factor must be > 0");
}

namespace {

double step_from_squares(double ss, double ee, double snr, double eta_max) {
    if (!(ss > 0.0)) return eta_max;
    const double eta = 2.0 * snr * snr * ee / ss;
    return std::isfinite(eta) ? std::min(eta, eta_max) : eta_max;
}

} // namespace

double langevin_step_size(std::span<const double> s, std::span<const double> eps, double snr, double eta_max) {
    return step_from_squares(vec::dot(s, s), vec::dot(eps, eps), snr, eta_max);
}

void predictor_slice(std::span<double> x, std::size_t ny, std::size_t nx, std::size_t slice_index,
                     const ScorePrior& prior, const SigmaSchedule& schedule, int i, const NoiseSource& noise) {
    if (i < 1 || i > schedule.N - 1) throw ConfigError("predictor step needs 1 <= i <= N-1");
    const double si = schedule.sigma(i), sp = schedule.sigma(i - 1);
    const double d = si * si - sp * sp;
    std::vector<double> s(x.size()), eps(x.size());
    prior.score(x, ny, nx, slice_index, si, s);
    noise.fill(eps, slice_index, static_cast<std::uint64_t>(i), kPredictorPhase);
    const double sd = std::sqrt(d);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += d * s[k] + sd * eps[k];
}

namespace {

void for_chunks(std::size_t nz, std::size_t sub_batch, const std::function<void(std::size_t, std::size_t)>& fn) {
    const std::size_t step = sub_batch == 0 ? std::max<std::size_t>(nz, 1) : sub_batch;
    for (std::size_t z = 0; z < nz; z += step) fn(z, std::min(nz, z + step));
}

} // namespace

void corrector_step(Volume3& x, const ScorePrior& prior, const SigmaSchedule& schedule, int level,
                    const SamplerConfig& cfg, const NoiseSource& noise, int step, int j, std::size_t sub_batch) {
    if (!(cfg.snr > 0.0)) throw ConfigError("snr must be > 0");
    const Shape3 sh = x.shape();
    const double sigma = schedule.sigma(level);
    Volume3 s(sh), eps(sh);
    for_chunks(sh.nz, sub_batch, [&](std::size_t z0, std::size_t z1) {
        for_slices(z0, z1, prior.supports_batch(), [&](std::size_t z) {
            prior.score(x.slice(z), sh.ny, sh.nx, z, sigma, s.slice(z));
            noise.fill(eps.slice(z), z, static_cast<std::uint64_t>(step), corrector_phase(j));
        });
    });
    // per-slice terms summed in sorted order: independent of chunking, workers and slice order
    std::vector<double> sq(sh.nz), eq(sh.nz);
    for (std::size_t z = 0; z < sh.nz; ++z) {
        sq[z] = vec::dot(s.slice(z), s.slice(z));
        eq[z] = vec::dot(eps.slice(z), eps.slice(z));
    }
    std::sort(sq.begin(), sq.end());
    std::sort(eq.begin(), eq.end());
    const double ss = std::accumulate(sq.begin(), sq.end(), 0.0), ee = std::accumulate(eq.begin(), eq.end(), 0.0);
    const double eta = step_from_squares(ss, ee, cfg.snr, cfg.eta_max_factor * sigma * sigma);
    const double se = std::sqrt(2.0 * eta);
    for_slices(0, sh.nz, true, [&](std::size_t z) {
        auto xz = x.slice(z);
        const auto sz = s.slice(z), ez = eps.slice(z);
        for (std::size_t k = 0; k < xz.size(); ++k) xz[k] += eta * sz[k] + se * ez[k];
    });
}

void predictor_step(Volume3& x, const ScorePrior& prior, const SigmaSchedule& schedule, int i,
                    const NoiseSource& noise, std::size_t sub_batch) {
    const Shape3 s = x.shape();
    for_chunks(s.nz, sub_batch, [&](std::size_t z0, std::size_t z1) {
        for_slices(z0, z1, prior.supports_batch(), [&](std::size_t z) {
            predictor_slice(x.slice(z), s.ny, s.nx, z, prior, schedule, i, noise);
        });
    });
}

void solve_step(Volume3& x, const ScorePrior& prior, const SigmaSchedule& schedule, int i, const SamplerConfig& cfg,
                const NoiseSource& noise, std::size_t sub_batch) {
    schedule.validate();
    cfg.validate();
    if (i < 0 || i >= schedule.N) throw ConfigError("solve step index out of range");
    if (i >= 1) predictor_step(x, prior, schedule, i, noise, sub_batch);
    const int level = std::max(i - 1, 0);
    for (int j = 0; j < cfg.n_corrector; ++j) corrector_step(x, prior, schedule, level, cfg, noise, i, j, sub_batch);
}

Volume3 initial_sample(Shape3 shape, const SigmaSchedule& schedule, const NoiseSource& noise, Spacing3 spacing) {
    schedule.validate();
    Volume3 x(shape, spacing);
    const double smax = schedule.sigma_max;
    for (std::size_t z = 0; z < shape.nz; ++z) {
        auto sl = x.slice(z);
        noise.fill(sl, z, static_cast<std::uint64_t>(schedule.N), 0);
        vec::scale(smax, sl);
    }
    return x;
}

Volume3 sample_prior(const ScorePrior& prior, Shape3 shape, const SigmaSchedule& schedule, const SamplerConfig& cfg,
                     const NoiseSource& noise) {
    Volume3 x = initial_sample(shape, schedule, noise);
    for (int i = schedule.N - 1; i >= 0; --i) {
        solve_step(x, prior, schedule, i, cfg, noise);
        if (!x.all_finite()) throw NumericalError("non-finite sample", i);
    }
    return x;
}

// ---------------------------------------------------------------------------

double dsm_loss(const ScorePrior& model, const std::vector<Image2>& x0_batch, const SigmaSchedule& schedule,
                std::mt19937_64& rng) {
    if (x0_batch.empty()) throw ConfigError("dsm_loss needs a non-empty batch");
    std::uniform_real_distribution<double> ut(kTimeFloor, 1.0);
    std::normal_distribution<double> nd(0.0, 1.0);
    double total = 0.0;
    for (std::size_t b = 0; b < x0_batch.size(); ++b) {
        const Image2& x0 = x0_batch[b];
        const double sigma = schedule.sigma_at(ut(rng));
        std::vector<double> eps(x0.data.size()), xt(x0.data.size()), s(x0.data.size());
        for (std::size_t k = 0; k < eps.size(); ++k) {
            eps[k] = nd(rng);
            xt[k] = x0.data[k] + sigma * eps[k];
        }
        model.score(xt, x0.rows, x0.cols, b, sigma, s);
        double acc = 0.0;
        for (std::size_t k = 0; k < eps.size(); ++k) {
            const double diff = s[k] + eps[k] / sigma;
            acc += diff * diff;
        }
        total += sigma * sigma * acc;
    }
    return total / static_cast<double>(x0_batch.size());
}

std::string dataset_hash(const std::vector<Image2>& slices) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint32_t v) {
        for (int k = 0; k < 4; ++k) {
            h ^= (v >> (8 * k)) & 0xffu;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& im : slices) {
        mix(static_cast<std::uint32_t>(im.rows));
        mix(static_cast<std::uint32_t>(im.cols));
        for (double v : im.data) mix(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

struct Adam {
    std::vector<std::vector<float>> m, v;
    long t = 0;

    explicit Adam(const std::vector<nn::Param>& params) {
        for (const auto& p : params) {
            m.emplace_back(p.w.size(), 0.0f);
            v.emplace_back(p.w.size(), 0.0f);
        }
    }

    void step(std::vector<nn::Param>& params, double lr, double grad_scale) {
        ++t;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto& p = params[k];
            for (std::size_t i = 0; i < p.w.size(); ++i) {
                const double g = static_cast<double>(p.g[i]) * grad_scale;
                const double mi = b1 * m[k][i] + (1.0 - b1) * g;
                const double vi = b2 * v[k][i] + (1.0 - b2) * g * g;
                m[k][i] = static_cast<float>(mi);
                v[k][i] = static_cast<float>(vi);
                p.w[i] -= static_cast<float>(lr * (mi / c1) / (std::sqrt(vi / c2) + eps));
            }
        }
    }
};

} // namespace

TrainResult train_denoiser(const std::vector<Image2>& dataset, const SigmaSchedule& schedule, const TrainConfig& cfg) {
    schedule.validate();
    if (dataset.empty()) throw ConfigError("training needs at least one slice");
    if (cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.lr > 0.0) || cfg.warmup_steps < 0)
        throw ConfigError("invalid training configuration");
    const std::size_t rows = dataset.front().rows, cols = dataset.front().cols;
    for (const auto& im : dataset)
        if (im.rows != rows || im.cols != cols || im.data.size() != rows * cols)
            throw ConfigError("training slices must share one shape");

    DenoiserModel model(cfg.arch, cfg.seed);
    model.info().sigma_min = schedule.sigma_min;
    model.info().sigma_max = schedule.sigma_max;
    model.info().N = schedule.N;
    model.info().epochs = cfg.epochs;
    model.info().dataset_hash = dataset_hash(dataset);
    TrainResult result{model, {}};
    if (cfg.epochs == 0) return result;

    DenoiserModel ema = model;
    auto& net = model.network();
    auto& params = net.params();
    auto& ema_params = ema.network().params();
    Adam adam(params);

    std::mt19937_64 rng(cfg.seed ^ 0x5eedf00dULL);
    std::uniform_real_distribution<double> ut(kTimeFloor, 1.0);
    std::normal_distribution<double> nd(0.0, 1.0);

    const std::size_t n = dataset.size();
    const std::size_t per_epoch = (n + static_cast<std::size_t>(cfg.batch_size) - 1) / cfg.batch_size;
    const long total_steps = static_cast<long>(per_epoch) * cfg.epochs;
    const std::size_t P = rows * cols;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    long step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t B = std::min<std::size_t>(cfg.batch_size, n - start);
            std::vector<double> sig(B), xt(B * P);
            std::vector<float> in(B * P), cn(B);
            for (std::size_t b = 0; b < B; ++b) {
                const Image2& x0 = dataset[order[start + b]];
                sig[b] = schedule.sigma_at(ut(rng));
                const auto pc = model.precond(sig[b]);
                cn[b] = static_cast<float>(pc.c_noise);
                for (std::size_t k = 0; k < P; ++k) {
                    xt[b * P + k] = x0.data[k] + sig[b] * nd(rng);
                    in[b * P + k] = static_cast<float>(pc.c_in * xt[b * P + k]);
                }
            }

            nn::Graph g(true);
            const int xi = g.input({1, static_cast<int>(B), static_cast<int>(rows), static_cast<int>(cols)}, in);
            net.zero_grad();
            const int yi = net.forward(g, xi, cn);
            const auto& F = g.node(yi).v;
            std::vector<float> dF(B * P);
            double loss = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const Image2& x0 = dataset[order[start + b]];
                const auto pc = model.precond(sig[b]);
                const double w = 1.0 / (sig[b] * sig[b]);
                for (std::size_t k = 0; k < P; ++k) {
                    const double D = pc.c_skip * xt[b * P + k] + pc.c_out * F[b * P + k];
                    const double r = D - x0.data[k];
                    loss += w * r * r;
                    dF[b * P + k] = static_cast<float>(2.0 * w * r * pc.c_out / static_cast<double>(B));
                }
            }
            loss /= static_cast<double>(B);
            if (!std::isfinite(loss)) throw NumericalError("training loss is not finite", step);
            g.backward(yi, dF);

            double gn2 = 0.0;
            for (const auto& p : params)
                for (float gv : p.g) gn2 += static_cast<double>(gv) * gv;
            const double gn = std::sqrt(gn2);
            const double scale = (cfg.grad_clip > 0.0 && gn > cfg.grad_clip) ? cfg.grad_clip / gn : 1.0;

            double lr = cfg.lr;
            if (step < cfg.warmup_steps) lr *= static_cast<double>(step + 1) / (cfg.warmup_steps + 1);
            else if (total_steps > cfg.warmup_steps) {
                const double prog = static_cast<double>(step - cfg.warmup_steps) / (total_steps - cfg.warmup_steps);
                lr *= 0.1 + 0.9 * 0.5 * (1.0 + std::cos(M_PI * prog));
            }
            adam.step(params, lr, scale);

            const double decay = std::min(cfg.ema_decay, (1.0 + step) / (10.0 + step));
            for (std::size_t k = 0; k < params.size(); ++k)
                for (std::size_t i = 0; i < params[k].w.size(); ++i)
                    ema_params[k].w[i] =
                        static_cast<float>(decay * ema_params[k].w[i] + (1.0 - decay) * params[k].w[i]);

            result.loss_trace.push_back(loss);
            if (cfg.on_step) cfg.on_step(step, loss);
            ++step;
        }
    }
    ema.info() = model.info();
    ema.info().steps = step;
    result.model = std::move(ema);
    return result;
}

} // namespace tomodiff
