#include "tomodiff/denoiser.hpp"

#include "tomodiff/errors.hpp"
#include "nn.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace tomodiff {

namespace {

constexpr char kMagic[4] = {'T', 'D', 'M', '1'};
constexpr int kFormatVersion = 1;

nn::Arch to_nn(const DenoiserArch& a) { return {a.widths, a.emb_dim, a.fourier_dim}; }

void put_u32(std::string& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}

std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

} // namespace

DenoiserModel::DenoiserModel(const DenoiserArch& arch, std::uint64_t seed)
    : arch_(arch), net_(std::make_unique<nn::Network>(to_nn(arch), seed)) {
    if (!(arch.sigma_data > 0.0)) throw ConfigError("sigma_data must be > 0");
    info_.seed = seed;
}

DenoiserModel::~DenoiserModel() = default;
DenoiserModel::DenoiserModel(const DenoiserModel& o)
    : arch_(o.arch_), info_(o.info_), net_(std::make_unique<nn::Network>(*o.net_)) {}
DenoiserModel& DenoiserModel::operator=(const DenoiserModel& o) {
    if (this != &o) {
        arch_ = o.arch_;
        info_ = o.info_;
        net_ = std::make_unique<nn::Network>(*o.net_);
    }
    return *this;
}
DenoiserModel::DenoiserModel(DenoiserModel&&) noexcept = default;
DenoiserModel& DenoiserModel::operator=(DenoiserModel&&) noexcept = default;

std::size_t DenoiserModel::parameter_count() const { return net_->parameter_count(); }

DenoiserModel::Precond DenoiserModel::precond(double sigma) const {
    const double sd = arch_.sigma_data;
    const double s2 = sigma * sigma + sd * sd;
    return {1.0 / std::sqrt(s2), sd * sd / s2, sigma * sd / std::sqrt(s2), std::log(sigma) / 4.0};
}

void DenoiserModel::denoise(std::span<const double> x, std::size_t ny, std::size_t nx, double sigma,
                            std::span<double> out) const {
    if (x.size() != ny * nx || out.size() != x.size()) throw ConfigError("denoise: slice size mismatch");
    if (!(sigma > 0.0)) throw ConfigError("denoise: sigma must be > 0");
    const Precond pc = precond(sigma);
    std::vector<float> in(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) in[i] = static_cast<float>(pc.c_in * x[i]);
    nn::Graph g(false);
    const int xi = g.input({1, 1, static_cast<int>(ny), static_cast<int>(nx)}, std::move(in));
    // Inference never writes to parameters; the graph API is shared with training.
    auto& net = const_cast<nn::Network&>(*net_);
    const int yi = net.forward(g, xi, {static_cast<float>(pc.c_noise)});
    const auto& F = g.node(yi).v;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = pc.c_skip * x[i] + pc.c_out * static_cast<double>(F[i]);
}

std::vector<float> DenoiserModel::flat_weights() const {
    std::vector<float> w;
    w.reserve(parameter_count());
    for (const auto& p : net_->params()) w.insert(w.end(), p.w.begin(), p.w.end());
    return w;
}

void DenoiserModel::save(const std::string& path) const {
    nlohmann::json meta;
    meta["format_version"] = kFormatVersion;
    meta["architecture"] = {{"widths", arch_.widths},
                            {"emb_dim", arch_.emb_dim},
                            {"fourier_dim", arch_.fourier_dim},
                            {"sigma_data", arch_.sigma_data}};
    meta["schedule"] = {{"sigma_min", info_.sigma_min}, {"sigma_max", info_.sigma_max}, {"N", info_.N}};
    meta["epochs"] = info_.epochs;
    meta["steps"] = info_.steps;
    meta["seed"] = info_.seed;
    meta["dataset_hash"] = info_.dataset_hash;
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : net_->params()) params.push_back({{"name", p.name}, {"shape", p.shape}});
    meta["params"] = params;

    const std::string text = meta.dump();
    std::string buf(kMagic, 4);
    put_u32(buf, static_cast<std::uint32_t>(text.size()));
    buf += text;
    for (const auto& p : net_->params())
        for (float v : p.w) put_u32(buf, std::bit_cast<std::uint32_t>(v));

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

DenoiserModel DenoiserModel::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto* bytes = reinterpret_cast<const unsigned char*>(buf.data());

    if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) throw FormatError("magic", 0, "expected TDM1");
    if (buf.size() < 8) throw FormatError("metadata_length", 4, "truncated header");
    const std::size_t mlen = get_u32(bytes + 4);
    if (8 + mlen > buf.size()) throw FormatError("metadata_length", 4, "exceeds file size");

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(buf.substr(8, mlen));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("metadata", 8, e.what());
    }

    DenoiserArch arch;
    TrainingInfo info;
    try {
        if (meta.at("format_version").get<int>() != kFormatVersion)
            throw FormatError("format_version", 8, "unsupported version");
        const auto& a = meta.at("architecture");
        arch.widths = a.at("widths").get<std::vector<int>>();
        arch.emb_dim = a.at("emb_dim").get<int>();
        arch.fourier_dim = a.at("fourier_dim").get<int>();
        arch.sigma_data = a.at("sigma_data").get<double>();
        const auto& s = meta.at("schedule");
        info.sigma_min = s.at("sigma_min").get<double>();
        info.sigma_max = s.at("sigma_max").get<double>();
        info.N = s.at("N").get<int>();
        info.epochs = meta.at("epochs").get<int>();
        info.steps = meta.at("steps").get<long>();
        info.seed = meta.at("seed").get<std::uint64_t>();
        info.dataset_hash = meta.at("dataset_hash").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("metadata", 8, e.what());
    }

    DenoiserModel model(arch, 0);
    model.info_ = info;
    auto& params = model.net_->params();
    const auto& listed = meta.at("params");
    if (!listed.is_array() || listed.size() != params.size())
        throw FormatError("params", 8, "parameter list does not match the architecture");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (listed[k].value("name", "") != params[k].name ||
            listed[k].value("shape", std::vector<int>{}) != params[k].shape)
            throw FormatError("params", 8, "parameter " + std::to_string(k) + " mismatch");
    }

    std::size_t off = 8 + mlen;
    const std::size_t need = model.parameter_count() * 4;
    if (buf.size() - off != need)
        throw FormatError("weights", off,
                          "expected " + std::to_string(need) + " bytes, found " + std::to_string(buf.size() - off));
    for (auto& p : params)
        for (float& v : p.w) {
            v = std::bit_cast<float>(get_u32(bytes + off));
            off += 4;
        }
    return model;
}

} // namespace tomodiff
