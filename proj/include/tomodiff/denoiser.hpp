#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tomodiff {

namespace nn {
class Network;
}

struct DenoiserArch {
    std::vector<int> widths{16, 32, 64, 128};
    int emb_dim = 64;
    int fourier_dim = 16;
    double sigma_data = 0.5;
};

/// Provenance stored alongside the weights.
struct TrainingInfo {
    double sigma_min = 0.0;
    double sigma_max = 0.0;
    int N = 0;
    int epochs = 0;
    long steps = 0;
    std::uint64_t seed = 0;
    std::string dataset_hash;
};

/// Small conditional U-Net D(x; sigma) over 2D slices with preconditioning
/// D = c_skip x + c_out F(c_in x, ln(sigma) / 4). Evaluation is single-threaded
/// per call and safe to run concurrently from several threads.
class DenoiserModel {
public:
    explicit DenoiserModel(const DenoiserArch& arch = {}, std::uint64_t seed = 0);
    ~DenoiserModel();
    DenoiserModel(const DenoiserModel& other);
    DenoiserModel& operator=(const DenoiserModel& other);
    DenoiserModel(DenoiserModel&&) noexcept;
    DenoiserModel& operator=(DenoiserModel&&) noexcept;

    const DenoiserArch& arch() const noexcept { return arch_; }
    TrainingInfo& info() noexcept { return info_; }
    const TrainingInfo& info() const noexcept { return info_; }

    std::size_t parameter_count() const;

    /// Denoised estimate of one ny x nx slice observed at noise level sigma.
    void denoise(std::span<const double> x, std::size_t ny, std::size_t nx, double sigma,
                 std::span<double> out) const;

    /// Preconditioning coefficients (c_in, c_skip, c_out) at sigma.
    struct Precond {
        double c_in, c_skip, c_out, c_noise;
    };
    Precond precond(double sigma) const;

    /// All weights in declaration order.
    std::vector<float> flat_weights() const;

    void save(const std::string& path) const;
    /// Throws FormatError naming the offending field and byte offset.
    static DenoiserModel load(const std::string& path);

    nn::Network& network() { return *net_; }
    const nn::Network& network() const { return *net_; }

private:
    DenoiserArch arch_;
    TrainingInfo info_;
    std::unique_ptr<nn::Network> net_;
};

} // namespace tomodiff
