#include "helpers.hpp"

#include "tomodiff/diffusion.hpp"
#include "tomodiff/errors.hpp"
#include "tomodiff/parallel.hpp"
#include "tomodiff/vecops.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace tomodiff;

namespace {

GaussianScorePrior gaussian(Shape3 s, double sd, std::uint64_t seed) {
    return GaussianScorePrior(testutil::random_volume(s, seed, 0.3), sd);
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double variance(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / (v.size() - 1);
}

/// Remaps slice indices so a permuted volume sees the noise of its source slice.
class PermutedNoise final : public NoiseSource {
public:
    PermutedNoise(const NoiseSource& base, std::vector<std::size_t> src) : base_(base), src_(std::move(src)) {}
    void fill(std::span<double> out, std::uint64_t slice, std::uint64_t step, std::uint32_t phase) const override {
        base_.fill(out, src_[slice], step, phase);
    }

private:
    const NoiseSource& base_;
    std::vector<std::size_t> src_;
};

} // namespace

TEST_CASE("schedule endpoints and log-uniform spacing") {
    const SigmaSchedule s{0.01, 50.0, 500};
    CHECK(s.sigma(0) == 0.01);
    CHECK(s.sigma(499) == 50.0);
    const double r = s.sigma(1) / s.sigma(0);
    for (int i = 1; i < 499; ++i) {
        CHECK(s.sigma(i + 1) / s.sigma(i) == doctest::Approx(r).epsilon(1e-12));
        CHECK(s.sigma(i) > s.sigma(i - 1));
    }
    CHECK(s.sigma_at(0.0) == doctest::Approx(0.01));
    CHECK(s.sigma_at(1.0) == doctest::Approx(50.0));
    CHECK_THROWS_AS((SigmaSchedule{0.0, 1.0, 10}).validate(), ConfigError);
    CHECK_THROWS_AS((SigmaSchedule{1.0, 1.0, 10}).validate(), ConfigError);
    CHECK_THROWS_AS((SigmaSchedule{0.1, 1.0, 1}).validate(), ConfigError);
    CHECK_THROWS_AS(s.sigma(500), ConfigError);
}

TEST_CASE("Gaussian prior examples") {
    const Volume3 mu = testutil::random_volume(Shape3{1, 4, 4}, 1);
    GaussianScorePrior p(mu, 0.7);
    std::vector<double> out(16);
    p.score(mu.data(), 4, 4, 0, 0.3, out);
    for (double v : out) CHECK(v == 0.0);

    GaussianScorePrior scalar(Volume3(Shape3{1, 1, 1}), 1.0);
    std::vector<double> x{2.0}, s(1);
    scalar.score(x, 1, 1, 0, 1.0, s);
    CHECK(s[0] == doctest::Approx(-1.0));
    CHECK_THROWS_AS(GaussianScorePrior(mu, 0.0), ConfigError);
}

TEST_CASE("Gaussian score matches finite differences of the log density") {
    const Shape3 sh{2, 3, 3};
    const GaussianScorePrior p = gaussian(sh, 0.8, 5);
    const SigmaSchedule sched{0.01, 50.0, 100};
    for (int i : {0, 30, 70, 99}) {
        const double sigma = sched.sigma(i);
        const double var = 0.64 + sigma * sigma;
        const Volume3 x = testutil::random_volume(sh, 10 + i, 2.0);
        const Volume3 s = p.score(x, sigma);
        auto logp = [&](const std::vector<double>& v) {
            double acc = 0.0;
            for (std::size_t k = 0; k < v.size(); ++k) {
                const double d = v[k] - p.mean().data()[k];
                acc -= 0.5 * d * d / var;
            }
            return acc;
        };
        for (std::size_t k = 0; k < x.size(); ++k) {
            std::vector<double> a(x.data().begin(), x.data().end()), b = a;
            const double h = 1e-4 * std::sqrt(var);
            a[k] += h;
            b[k] -= h;
            const double fd = (logp(a) - logp(b)) / (2 * h);
            CHECK(s.data()[k] == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("single-slice mean broadcasts over z") {
    const Volume3 mu = testutil::random_volume(Shape3{1, 3, 3}, 2);
    GaussianScorePrior p(mu, 1.0);
    const Volume3 x(Shape3{4, 3, 3});
    const Volume3 s = p.score(x, 1.0);
    for (std::size_t z = 0; z < 4; ++z)
        for (std::size_t k = 0; k < 9; ++k) CHECK(s.slice(z)[k] == doctest::Approx(mu.data()[k] / 2.0));
}

TEST_CASE("keyed noise is deterministic and key sensitive") {
    KeyedGaussianNoise n(42);
    std::vector<double> a(64), b(64), c(64), d(64);
    n.fill(a, 3, 10, 0);
    n.fill(b, 3, 10, 0);
    n.fill(c, 4, 10, 0);
    n.fill(d, 3, 10, 1);
    CHECK(testutil::bitwise_equal(a, b));
    CHECK_FALSE(testutil::bitwise_equal(a, c));
    CHECK_FALSE(testutil::bitwise_equal(a, d));
    std::vector<double> big(200000);
    n.fill(big, 0, 0, 0);
    CHECK(std::fabs(mean(big)) < 0.01);
    CHECK(variance(big) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("predictor examples") {
    const SigmaSchedule sched{0.01, 50.0, 50};
    const FunctionScorePrior zero([](auto, std::size_t, double, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
    });
    const ZeroNoise none;
    const Volume3 x0 = testutil::random_volume(Shape3{2, 4, 4}, 3);
    Volume3 x = x0;
    predictor_step(x, zero, sched, 10, none);
    CHECK(testutil::bitwise_equal(x.data(), x0.data()));

    const GaussianScorePrior g = gaussian(x0.shape(), 0.5, 4);
    Volume3 y = x0;
    predictor_step(y, g, sched, 20, none);
    for (std::size_t k = 0; k < y.size(); ++k) {
        const double before = std::fabs(x0.data()[k] - g.mean().data()[k]);
        const double after = std::fabs(y.data()[k] - g.mean().data()[k]);
        CHECK(after < before);
        CHECK((y.data()[k] - x0.data()[k]) * (g.mean().data()[k] - x0.data()[k]) > 0.0);
    }
    CHECK_THROWS_AS(predictor_step(y, g, sched, 0, none), ConfigError);
    CHECK_THROWS_AS(predictor_step(y, g, sched, 50, none), ConfigError);
}

TEST_CASE("predictor increment variance with zero score") {
    const SigmaSchedule sched{0.01, 50.0, 50};
    const int i = 30;
    const double expect = sched.sigma(i) * sched.sigma(i) - sched.sigma(i - 1) * sched.sigma(i - 1);
    const FunctionScorePrior zero([](auto, std::size_t, double, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
    });
    Volume3 x(Shape3{1, 100, 100});
    predictor_step(x, zero, sched, i, KeyedGaussianNoise(9));
    const std::vector<double> d(x.data().begin(), x.data().end());
    CHECK(variance(d) == doctest::Approx(expect).epsilon(0.05));
}

TEST_CASE("Langevin step size rule") {
    const auto s = testutil::random_vector(100, 1);
    const auto e = testutil::random_vector(100, 2);
    const double eta = langevin_step_size(s, e, 0.16, 1e9);
    const double ratio = vec::norm(e) / vec::norm(s);
    CHECK(eta == doctest::Approx(2.0 * std::pow(0.16 * ratio, 2)).epsilon(1e-14));
    CHECK(langevin_step_size(s, e, 0.32, 1e9) == doctest::Approx(4.0 * eta).epsilon(1e-14));
    CHECK(langevin_step_size(s, e, 0.16, 1e-6) == 1e-6);
    const std::vector<double> z(100, 0.0);
    CHECK(langevin_step_size(z, e, 0.16, 0.25) == 0.25);
}

TEST_CASE("corrector with zero score uses the capped step") {
    const SigmaSchedule sched{0.01, 50.0, 50};
    const FunctionScorePrior zero([](auto, std::size_t, double, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
    });
    const Volume3 x0 = testutil::random_volume(Shape3{2, 4, 4}, 3);
    Volume3 x = x0;
    SamplerConfig cfg;
    corrector_step(x, zero, sched, 10, cfg, ZeroNoise(), 10);
    CHECK(testutil::bitwise_equal(x.data(), x0.data()));

    KeyedGaussianNoise noise(5);
    corrector_step(x, zero, sched, 10, cfg, noise, 10);
    const double eta_max = sched.sigma(10) * sched.sigma(10);
    for (std::size_t z = 0; z < 2; ++z) {
        std::vector<double> eps(16);
        noise.fill(eps, z, 10, corrector_phase(0));
        for (std::size_t k = 0; k < 16; ++k)
            CHECK(x.slice(z)[k] == doctest::Approx(x0.slice(z)[k] + std::sqrt(2 * eta_max) * eps[k]).epsilon(1e-14));
    }
}

TEST_CASE("corrector shares one step size across slices") {
    const SigmaSchedule sched{0.01, 50.0, 50};
    const FunctionScorePrior prior([](auto x, std::size_t z, double, std::span<double> out) {
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = -(1.0 + 3.0 * double(z)) * x[k];
    });
    const Volume3 x0 = testutil::random_volume(Shape3{3, 4, 4}, 8);
    Volume3 x = x0;
    SamplerConfig cfg;
    cfg.eta_max_factor = 1e9;
    KeyedGaussianNoise noise(6);
    corrector_step(x, prior, sched, 10, cfg, noise, 10);

    double ss = 0.0, ee = 0.0;
    std::vector<std::vector<double>> eps(3, std::vector<double>(16));
    for (std::size_t z = 0; z < 3; ++z) {
        noise.fill(eps[z], z, 10, corrector_phase(0));
        for (std::size_t k = 0; k < 16; ++k) {
            const double s = -(1.0 + 3.0 * double(z)) * x0.slice(z)[k];
            ss += s * s;
            ee += eps[z][k] * eps[z][k];
        }
    }
    const double eta = 2.0 * cfg.snr * cfg.snr * ee / ss;
    for (std::size_t z = 0; z < 3; ++z) {
        const double c = 1.0 + 3.0 * double(z);
        for (std::size_t k = 0; k < 16; ++k) {
            const double want = x0.slice(z)[k] - eta * c * x0.slice(z)[k] + std::sqrt(2 * eta) * eps[z][k];
            CHECK(x.slice(z)[k] == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("corrector chain is stationary for the perturbed Gaussian") {
    const SigmaSchedule sched{0.01, 50.0, 100};
    const int level = 60;
    const double sigma = sched.sigma(level);
    const double sd = 0.5;
    const double target = sd * sd + sigma * sigma;
    GaussianScorePrior g(Volume3(Shape3{1, 32, 32}), sd);
    KeyedGaussianNoise noise(11);
    SamplerConfig cfg;
    Volume3 x(Shape3{1, 32, 32});
    std::vector<double> samples;
    for (int t = 0; t < 2000; ++t) {
        corrector_step(x, g, sched, level, cfg, noise, t);
        if (t >= 300 && t % 5 == 0) samples.insert(samples.end(), x.data().begin(), x.data().end());
    }
    CHECK(variance(samples) == doctest::Approx(target).epsilon(0.10));
}

TEST_CASE("solve_step equals the manual predictor-corrector composition") {
    const SigmaSchedule sched{0.01, 50.0, 40};
    const GaussianScorePrior g = gaussian(Shape3{3, 5, 6}, 0.4, 8);
    KeyedGaussianNoise noise(3);
    SamplerConfig cfg;
    cfg.n_corrector = 2;
    const Volume3 x0 = testutil::random_volume(Shape3{3, 5, 6}, 9);
    for (int i : {0, 1, 17, 39}) {
        Volume3 a = x0, b = x0;
        solve_step(a, g, sched, i, cfg, noise);
        if (i >= 1) predictor_step(b, g, sched, i, noise);
        for (int j = 0; j < cfg.n_corrector; ++j) corrector_step(b, g, sched, std::max(i - 1, 0), cfg, noise, i, j);
        CHECK(testutil::bitwise_equal(a.data(), b.data()));
    }
}

TEST_CASE("zero score and zero noise leave solve_step a no-op") {
    const SigmaSchedule sched{0.01, 50.0, 40};
    const FunctionScorePrior zero([](auto, std::size_t, double, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
    });
    const Volume3 x0 = testutil::random_volume(Shape3{2, 3, 3}, 1);
    Volume3 x = x0;
    solve_step(x, zero, sched, 12, SamplerConfig{}, ZeroNoise());
    CHECK(testutil::bitwise_equal(x.data(), x0.data()));
}

TEST_CASE("solve_step is equivariant under slice permutations") {
    const SigmaSchedule sched{0.01, 50.0, 40};
    GaussianScorePrior g(testutil::random_volume(Shape3{1, 4, 4}, 2), 0.6);
    KeyedGaussianNoise noise(8);
    const Volume3 x = testutil::random_volume(Shape3{5, 4, 4}, 3);
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2}; // new slice k holds old slice perm[k]
    Volume3 px(x.shape());
    for (std::size_t k = 0; k < 5; ++k) std::copy(x.slice(perm[k]).begin(), x.slice(perm[k]).end(), px.slice(k).begin());

    Volume3 solved = x;
    solve_step(solved, g, sched, 20, SamplerConfig{}, noise);
    Volume3 psolved = px;
    solve_step(psolved, g, sched, 20, SamplerConfig{}, PermutedNoise(noise, perm));
    for (std::size_t k = 0; k < 5; ++k) CHECK(testutil::bitwise_equal(psolved.slice(k), solved.slice(perm[k])));
}

TEST_CASE("sampling is deterministic and independent of worker count") {
    const SigmaSchedule sched{0.01, 50.0, 30};
    const GaussianScorePrior g = gaussian(Shape3{6, 4, 4}, 0.5, 4);
    set_worker_count(1);
    const Volume3 a = sample_prior(g, Shape3{6, 4, 4}, sched, SamplerConfig{}, KeyedGaussianNoise(1));
    set_worker_count(4);
    const Volume3 b = sample_prior(g, Shape3{6, 4, 4}, sched, SamplerConfig{}, KeyedGaussianNoise(1));
    set_worker_count(0);
    const Volume3 c = sample_prior(g, Shape3{6, 4, 4}, sched, SamplerConfig{}, KeyedGaussianNoise(2));
    CHECK(testutil::bitwise_equal(a.data(), b.data()));
    CHECK_FALSE(testutil::bitwise_equal(a.data(), c.data()));
}

TEST_CASE("very wide prior: variance follows the prior scale") {
    // sigma_max must cover sigma_d, otherwise the start noise sets the scale
    const double sd = 1e3;
    const SigmaSchedule sched{0.01, 5e3, 500};
    const GaussianScorePrior prior(Volume3(Shape3{1, 1, 8}, Spacing3{}, 0.0), sd);
    const Volume3 v = sample_prior(prior, Shape3{1000, 1, 8}, sched, SamplerConfig{}, KeyedGaussianNoise(21));
    const std::vector<double> d(v.data().begin(), v.data().end());
    CHECK(variance(d) == doctest::Approx(sd * sd).epsilon(0.15));
}

TEST_CASE("initial sample has the largest noise level") {
    const SigmaSchedule sched{0.01, 50.0, 30};
    const Volume3 x = initial_sample(Shape3{4, 50, 50}, sched, KeyedGaussianNoise(3));
    const std::vector<double> v(x.data().begin(), x.data().end());
    CHECK(std::sqrt(variance(v)) == doctest::Approx(50.0).epsilon(0.03));
}

TEST_CASE("non-finite scores abort sampling with the step index") {
    const SigmaSchedule sched{0.01, 50.0, 30};
    const double bad = sched.sigma(12);
    const FunctionScorePrior nan_at([bad](auto x, std::size_t, double sigma, std::span<double> out) {
        for (std::size_t k = 0; k < out.size(); ++k)
            out[k] = sigma == bad ? std::numeric_limits<double>::quiet_NaN() : -x[k];
    });
    try {
        sample_prior(nan_at, Shape3{2, 3, 3}, sched, SamplerConfig{}, KeyedGaussianNoise(1));
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        // The predictor of step 12 and the corrector of step 13 both evaluate sigma(12).
        CHECK(e.index() == 13);
    }
}

TEST_CASE("dsm_loss: perfect score gives zero") {
    Image2 x0(6, 7);
    for (std::size_t k = 0; k < x0.data.size(); ++k) x0.data[k] = std::sin(0.3 * k);
    const FunctionScorePrior oracle([&](std::span<const double> x, std::size_t, double sigma, std::span<double> out) {
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = -(x[k] - x0.data[k]) / (sigma * sigma);
    });
    std::mt19937_64 rng(1);
    CHECK(dsm_loss(oracle, std::vector<Image2>(8, x0), SigmaSchedule{}, rng) <= 1e-18);
}

TEST_CASE("dsm_loss: zero model has expectation d") {
    const std::size_t d = 64;
    const FunctionScorePrior zero([](auto, std::size_t, double, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
    });
    std::vector<Image2> batch(100, Image2(8, 8));
    std::mt19937_64 rng(2);
    double total = 0.0;
    for (int k = 0; k < 100; ++k) total += dsm_loss(zero, batch, SigmaSchedule{}, rng);
    CHECK(total / 100.0 == doctest::Approx(double(d)).epsilon(0.05));
    CHECK_THROWS_AS(dsm_loss(zero, {}, SigmaSchedule{}, rng), ConfigError);
}

TEST_CASE("dsm_loss of the exact Gaussian score reaches its analytic floor") {
    // With x0 ~ N(mu, sd^2 I) the best achievable loss is d E_t[sd^2 / (sd^2 + sigma(t)^2)], not 0.
    const std::size_t d = 64;
    const double sd = 0.005;
    const SigmaSchedule sched{};
    GaussianScorePrior g(Volume3(Shape3{1, 8, 8}), sd);
    std::mt19937_64 rng(3), data(4);
    std::normal_distribution<double> nd(0.0, sd);
    double total = 0.0;
    for (int k = 0; k < 100; ++k) {
        std::vector<Image2> batch(100, Image2(8, 8));
        for (auto& im : batch)
            for (double& v : im.data) v = nd(data);
        total += dsm_loss(g, batch, sched, rng);
    }
    const double mean_loss = total / 100.0;
    double floor = 0.0;
    const int n = 100000;
    for (int k = 0; k < n; ++k) {
        const double t = kTimeFloor + (1.0 - kTimeFloor) * (k + 0.5) / n;
        const double s = sched.sigma_at(t);
        floor += sd * sd / (sd * sd + s * s) / n;
    }
    CHECK(mean_loss == doctest::Approx(d * floor).epsilon(0.1));
    CHECK(mean_loss <= 0.05 * d);
}

TEST_CASE("dataset hash") {
    std::vector<Image2> a(2, Image2(3, 3, 0.5));
    const std::string h = dataset_hash(a);
    CHECK(h.size() == 16);
    CHECK(dataset_hash(a) == h);
    a[1].data[4] = 0.25;
    CHECK(dataset_hash(a) != h);
}
