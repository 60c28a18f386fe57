#include "helpers.hpp"

#include "nn.hpp"
#include "tomodiff/denoiser.hpp"
#include "tomodiff/diffusion.hpp"
#include "tomodiff/errors.hpp"
#include "tomodiff/pipeline.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace tomodiff;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("tomodiff_test_" + name)).string();
}

std::string read_file(const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

void write_file(const std::string& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

DenoiserArch tiny_arch() {
    DenoiserArch a;
    a.widths = {4, 8};
    a.emb_dim = 8;
    a.fourier_dim = 4;
    return a;
}

double forward_loss(nn::Network& net, const std::vector<float>& x, const std::vector<float>& r,
                    const std::vector<float>& cn, int h, int w) {
    nn::Graph g(false);
    const int xi = g.input({1, 2, h, w}, x);
    const int yi = net.forward(g, xi, cn);
    double acc = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) acc += double(r[k]) * double(g.node(yi).v[k]);
    return acc;
}

} // namespace

TEST_CASE("default architecture has about a million parameters") {
    const DenoiserModel m;
    CHECK(m.parameter_count() == 1019377);
    CHECK(m.flat_weights().size() == m.parameter_count());
}

TEST_CASE("preconditioning coefficients") {
    const DenoiserModel m(tiny_arch(), 1);
    for (double s : {0.01, 0.5, 20.0}) {
        const auto p = m.precond(s);
        const double v = s * s + 0.25;
        CHECK(p.c_in == doctest::Approx(1.0 / std::sqrt(v)));
        CHECK(p.c_skip == doctest::Approx(0.25 / v));
        CHECK(p.c_out == doctest::Approx(s * 0.5 / std::sqrt(v)));
        CHECK(p.c_noise == doctest::Approx(std::log(s) / 4.0));
        // D is exact on the two limits: identity for sigma -> 0 and the data mean (0) for sigma -> inf.
        CHECK(p.c_skip * p.c_skip * v + p.c_out * p.c_out == doctest::Approx(0.25));
    }
}

TEST_CASE("untrained model is the skip connection and preserves shape") {
    // The output convolution starts at zero, so D(x) = c_skip x on any slice shape.
    const DenoiserModel m(DenoiserArch{}, 3);
    for (auto [ny, nx] : {std::pair<std::size_t, std::size_t>{13, 17}, {32, 32}, {7, 5}}) {
        const auto x = testutil::random_vector(ny * nx, ny);
        std::vector<double> out(x.size());
        m.denoise(x, ny, nx, 0.3, out);
        const double cs = m.precond(0.3).c_skip;
        for (std::size_t k = 0; k < x.size(); ++k) CHECK(out[k] == doctest::Approx(cs * x[k]).epsilon(1e-12));
    }
    std::vector<double> out(10);
    CHECK_THROWS_AS(m.denoise(std::vector<double>(12), 3, 4, 0.3, out), ConfigError);
}

TEST_CASE("network gradients match finite differences") {
    const int h = 9, w = 7;
    nn::Network net(nn::Arch{{4, 8}, 8, 4}, 5);
    std::mt19937_64 rng(6);
    std::normal_distribution<float> nd(0.0f, 1.0f);
    // Move off the zero-initialised layers so every parameter carries gradient.
    for (auto& p : net.params())
        for (float& v : p.w) v += 0.2f * nd(rng);
    std::vector<float> x(2 * h * w), r(2 * h * w);
    for (float& v : x) v = nd(rng);
    for (float& v : r) v = nd(rng);
    const std::vector<float> cn{-0.4f, 0.7f};

    net.zero_grad();
    {
        nn::Graph g(true);
        const int xi = g.input({1, 2, h, w}, x);
        const int yi = net.forward(g, xi, cn);
        g.backward(yi, r);
    }
    std::uniform_int_distribution<int> pick(0, 1 << 30);
    int checked = 0;
    for (std::size_t pi = 0; pi < net.params().size(); ++pi) {
        auto& p = net.params()[pi];
        for (int trial = 0; trial < 2; ++trial) {
            const std::size_t k = static_cast<std::size_t>(pick(rng)) % p.w.size();
            const float orig = p.w[k];
            const float step = 1e-2f;
            p.w[k] = orig + step;
            const double lp = forward_loss(net, x, r, cn, h, w);
            p.w[k] = orig - step;
            const double lm = forward_loss(net, x, r, cn, h, w);
            p.w[k] = orig;
            const double fd = (lp - lm) / (2.0 * step);
            CAPTURE(p.name);
            CHECK(double(p.g[k]) == doctest::Approx(fd).epsilon(2e-2).scale(1.0));
            ++checked;
        }
    }
    CHECK(checked > 20);
}

TEST_CASE("checkpoint round trip") {
    DenoiserModel m(tiny_arch(), 9);
    m.info() = TrainingInfo{0.01, 50.0, 500, 3, 42, 7, "abcdef0123456789"};
    auto& net = m.network();
    std::mt19937_64 rng(1);
    std::normal_distribution<float> nd;
    for (auto& p : net.params())
        for (float& v : p.w) v = nd(rng);
    const std::string path = temp_path("ckpt.tdm");
    m.save(path);
    const DenoiserModel back = DenoiserModel::load(path);
    CHECK(back.flat_weights() == m.flat_weights());
    CHECK(back.arch().widths == m.arch().widths);
    CHECK(back.info().steps == 42);
    CHECK(back.info().N == 500);
    CHECK(back.info().dataset_hash == "abcdef0123456789");
    const auto x = testutil::random_vector(64, 2);
    std::vector<double> a(64), b(64);
    m.denoise(x, 8, 8, 0.2, a);
    back.denoise(x, 8, 8, 0.2, b);
    CHECK(testutil::bitwise_equal(a, b));

    const std::string bytes = read_file(path);
    CHECK(bytes.substr(0, 4) == "TDM1");
    std::uint32_t mlen = 0;
    for (int k = 0; k < 4; ++k) mlen |= std::uint32_t(static_cast<unsigned char>(bytes[4 + k])) << (8 * k);
    CHECK(bytes.size() == 8 + mlen + 4 * m.parameter_count());
    CHECK(bytes.substr(8, 1) == "{");
    std::remove(path.c_str());
}

TEST_CASE("corrupt checkpoints name the bad field") {
    const DenoiserModel m(tiny_arch(), 1);
    const std::string path = temp_path("bad.tdm");
    m.save(path);
    const std::string good = read_file(path);
    auto expect = [&](std::string bytes, const std::string& field) {
        write_file(path, bytes);
        try {
            DenoiserModel::load(path);
            FAIL("expected FormatError for " << field);
        } catch (const FormatError& e) {
            CHECK(e.field() == field);
        }
    };
    std::string b = good;
    b[0] = 'X';
    expect(b, "magic");
    b = good;
    b[7] = char(0x7f);
    expect(b, "metadata_length");
    b = good;
    b[8] = '#';
    expect(b, "metadata");
    expect(good.substr(0, good.size() - 3), "weights");
    b = good;
    const auto pos = b.find("\"format_version\":1");
    REQUIRE(pos != std::string::npos);
    b[pos + 17] = '9';
    expect(b, "format_version");
    std::remove(path.c_str());
}

TEST_CASE("network score prior is (D - x) / sigma^2") {
    auto model = std::make_shared<DenoiserModel>(tiny_arch(), 4);
    for (auto& p : model->network().params())
        for (float& v : p.w) v = 0.01f * float(p.w.size() % 7);
    NetworkScorePrior prior(model);
    const auto x = testutil::random_vector(36, 5);
    std::vector<double> d(36), s(36);
    model->denoise(x, 6, 6, 0.4, d);
    prior.score(x, 6, 6, 0, 0.4, s);
    for (std::size_t k = 0; k < 36; ++k) CHECK(s[k] == doctest::Approx((d[k] - x[k]) / 0.16).epsilon(1e-12));
}

TEST_CASE("training: zero epochs returns the initialisation") {
    const auto data = training_slices(16, 1, 3);
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.arch = tiny_arch();
    cfg.seed = 11;
    const TrainResult r = train_denoiser(data, SigmaSchedule{}, cfg);
    CHECK(r.model.flat_weights() == DenoiserModel(tiny_arch(), 11).flat_weights());
    CHECK(r.loss_trace.empty());
    CHECK(r.model.info().dataset_hash == dataset_hash(data));
}

TEST_CASE("training is deterministic") {
    const auto data = training_slices(16, 1, 5);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.arch = tiny_arch();
    cfg.seed = 3;
    const TrainResult a = train_denoiser(data, SigmaSchedule{}, cfg);
    const TrainResult b = train_denoiser(data, SigmaSchedule{}, cfg);
    REQUIRE(a.loss_trace.size() == 4);
    CHECK(a.loss_trace == b.loss_trace);
    CHECK(a.model.flat_weights() == b.model.flat_weights());
    CHECK(a.model.info().steps == 4);
}

TEST_CASE("training on a two-phantom set halves the DSM loss") {
    const auto data = training_slices(32, 2, 5);
    TrainConfig cfg;
    cfg.epochs = 25;
    cfg.batch_size = 8;
    cfg.lr = 2e-3;
    cfg.warmup_steps = 20;
    cfg.arch = DenoiserArch{{8, 16, 32}, 32, 8, 0.5};
    cfg.seed = 3;
    const TrainResult r = train_denoiser(data, SigmaSchedule{}, cfg);
    auto eval = [&](const DenoiserModel& m) {
        NetworkScorePrior prior(std::make_shared<DenoiserModel>(m));
        std::mt19937_64 rng(99);
        double total = 0.0;
        for (int k = 0; k < 8; ++k) total += dsm_loss(prior, data, SigmaSchedule{}, rng);
        return total / 8.0;
    };
    const double before = eval(DenoiserModel(cfg.arch, cfg.seed));
    const double after = eval(r.model);
    CAPTURE(before);
    CAPTURE(after);
    CHECK(after < 0.5 * before);
}

TEST_CASE("training rejects bad input") {
    TrainConfig cfg;
    cfg.arch = tiny_arch();
    CHECK_THROWS_AS(train_denoiser({}, SigmaSchedule{}, cfg), ConfigError);
    std::vector<Image2> mixed{Image2(4, 4), Image2(5, 4)};
    CHECK_THROWS_AS(train_denoiser(mixed, SigmaSchedule{}, cfg), ConfigError);
}
