#pragma once

#include "tomodiff/volume.hpp"

#include <array>
#include <span>
#include <string>

namespace tomodiff {

/// 10 log10(range^2 / MSE); +inf when the inputs are identical.
double psnr(std::span<const double> x, std::span<const double> ref, double data_range);
double psnr(const Volume3& x, const Volume3& ref, double data_range);

struct SsimOptions {
    double sigma = 1.5;
    int win_size = 11;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Mean structural similarity of one 2D plane: Gaussian-weighted local
/// statistics with reflected borders, averaged over the interior that is at
/// least a window radius away from every edge. Planes smaller than the window
/// shrink the window to fit.
double ssim(const Image2& x, const Image2& ref, double data_range, const SsimOptions& opts = {});

/// Mean of the 2D SSIM over the axial planes.
double ssim(const Volume3& x, const Volume3& ref, double data_range = 0.0);

struct MetricsReport {
    double data_range = 0.0;
    /// Indexed by PlaneAxis: axial, coronal, sagittal.
    std::array<double, 3> psnr{};
    std::array<double, 3> ssim{};
    double global_psnr = 0.0;
};

/// Per-plane metrics averaged over each plane family. data_range <= 0 uses the
/// reference volume's maximum.
MetricsReport per_plane_metrics(const Volume3& x, const Volume3& ref, double data_range = 0.0);

/// JSON text; infinite PSNR values are written as the string "inf".
std::string to_json(const MetricsReport& report);

/// Sum of |x(z+1) - x(z)| over the volume.
double tv_z(const Volume3& x);

} // namespace tomodiff
