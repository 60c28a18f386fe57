#include "tomodiff/metrics.hpp"

#include "tomodiff/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace tomodiff {

double psnr(std::span<const double> x, std::span<const double> ref, double data_range) {
    if (x.size() != ref.size()) throw ConfigError("psnr: size mismatch");
    if (x.empty()) throw ConfigError("psnr: empty input");
    if (!(data_range > 0.0)) throw ConfigError("psnr: data_range must be > 0");
    double se = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) se += (x[i] - ref[i]) * (x[i] - ref[i]);
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = se / static_cast<double>(x.size());
    return 10.0 * std::log10(data_range * data_range / mse);
}

double psnr(const Volume3& x, const Volume3& ref, double data_range) {
    if (x.shape() != ref.shape()) throw ConfigError("psnr: shape mismatch");
    return psnr(x.data(), ref.data(), data_range);
}

namespace {

std::size_t reflect(long i, long n) {
    // scipy "reflect": d c b a | a b c d | d c b a
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return static_cast<std::size_t>(i);
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int t = -radius; t <= radius; ++t) {
        const double v = std::exp(-0.5 * t * t / (sigma * sigma));
        k[static_cast<std::size_t>(t + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

std::vector<double> gaussian_filter(const std::vector<double>& in, std::size_t rows, std::size_t cols,
                                    const std::vector<double>& k) {
    const long r = static_cast<long>(k.size() / 2);
    std::vector<double> tmp(in.size()), out(in.size());
    for (std::size_t y = 0; y < rows; ++y)
        for (std::size_t x = 0; x < cols; ++x) {
            double s = 0.0;
            for (long t = -r; t <= r; ++t)
                s += k[static_cast<std::size_t>(t + r)] *
                     in[y * cols + reflect(static_cast<long>(x) + t, static_cast<long>(cols))];
            tmp[y * cols + x] = s;
        }
    for (std::size_t y = 0; y < rows; ++y)
        for (std::size_t x = 0; x < cols; ++x) {
            double s = 0.0;
            for (long t = -r; t <= r; ++t)
                s += k[static_cast<std::size_t>(t + r)] *
                     tmp[reflect(static_cast<long>(y) + t, static_cast<long>(rows)) * cols + x];
            out[y * cols + x] = s;
        }
    return out;
}

} // namespace

double ssim(const Image2& x, const Image2& ref, double data_range, const SsimOptions& opts) {
    if (x.rows != ref.rows || x.cols != ref.cols) throw ConfigError("ssim: shape mismatch");
    if (x.rows == 0 || x.cols == 0) throw ConfigError("ssim: empty plane");
    if (!(data_range > 0.0)) throw ConfigError("ssim: data_range must be > 0");
    const std::size_t rows = x.rows, cols = x.cols;
    int radius = (opts.win_size - 1) / 2;
    const int fit = static_cast<int>((std::min(rows, cols) - 1) / 2);
    radius = std::min(radius, fit);
    const auto k = gaussian_kernel(opts.sigma, radius);

    const std::size_t n = rows * cols;
    std::vector<double> xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        xx[i] = x.data[i] * x.data[i];
        yy[i] = ref.data[i] * ref.data[i];
        xy[i] = x.data[i] * ref.data[i];
    }
    const auto ux = gaussian_filter(x.data, rows, cols, k);
    const auto uy = gaussian_filter(ref.data, rows, cols, k);
    const auto uxx = gaussian_filter(xx, rows, cols, k);
    const auto uyy = gaussian_filter(yy, rows, cols, k);
    const auto uxy = gaussian_filter(xy, rows, cols, k);

    const double c1 = (opts.k1 * data_range) * (opts.k1 * data_range);
    const double c2 = (opts.k2 * data_range) * (opts.k2 * data_range);
    const std::size_t pad = static_cast<std::size_t>(radius);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t r = pad; r < rows - pad; ++r)
        for (std::size_t c = pad; c < cols - pad; ++c) {
            const std::size_t i = r * cols + c;
            const double vx = uxx[i] - ux[i] * ux[i];
            const double vy = uyy[i] - uy[i] * uy[i];
            const double vxy = uxy[i] - ux[i] * uy[i];
            const double a = (2.0 * ux[i] * uy[i] + c1) * (2.0 * vxy + c2);
            const double b = (ux[i] * ux[i] + uy[i] * uy[i] + c1) * (vx + vy + c2);
            sum += a / b;
            ++count;
        }
    return sum / static_cast<double>(count);
}

namespace {

double reference_range(const Volume3& ref, double data_range) {
    if (data_range > 0.0) return data_range;
    if (ref.size() == 0) throw ConfigError("empty reference volume");
    const double m = *std::max_element(ref.data().begin(), ref.data().end());
    if (!(m > 0.0)) throw ConfigError("reference volume maximum must be > 0 to define the data range");
    return m;
}

} // namespace

double ssim(const Volume3& x, const Volume3& ref, double data_range) {
    if (x.shape() != ref.shape()) throw ConfigError("ssim: shape mismatch");
    const double range = reference_range(ref, data_range);
    const auto px = plane_views(x, PlaneAxis::axial);
    const auto pr = plane_views(ref, PlaneAxis::axial);
    double s = 0.0;
    for (std::size_t k = 0; k < px.size(); ++k) s += ssim(px[k], pr[k], range);
    return s / static_cast<double>(px.size());
}

MetricsReport per_plane_metrics(const Volume3& x, const Volume3& ref, double data_range) {
    if (x.shape() != ref.shape()) throw ConfigError("metrics: shape mismatch");
    MetricsReport rep;
    rep.data_range = reference_range(ref, data_range);
    rep.global_psnr = psnr(x, ref, rep.data_range);
    for (PlaneAxis axis : {PlaneAxis::axial, PlaneAxis::coronal, PlaneAxis::sagittal}) {
        const auto px = plane_views(x, axis);
        const auto pr = plane_views(ref, axis);
        double sp = 0.0, ss = 0.0;
        for (std::size_t k = 0; k < px.size(); ++k) {
            sp += psnr(px[k].data, pr[k].data, rep.data_range);
            ss += ssim(px[k], pr[k], rep.data_range);
        }
        const auto a = static_cast<std::size_t>(axis);
        rep.psnr[a] = sp / static_cast<double>(px.size());
        rep.ssim[a] = ss / static_cast<double>(px.size());
    }
    return rep;
}

std::string to_json(const MetricsReport& r) {
    auto num = [](double v) -> nlohmann::json {
        if (std::isinf(v) && v > 0) return "inf";
        return v;
    };
    nlohmann::json j;
    j["data_range"] = r.data_range;
    j["global_psnr"] = num(r.global_psnr);
    for (PlaneAxis axis : {PlaneAxis::axial, PlaneAxis::coronal, PlaneAxis::sagittal}) {
        const auto a = static_cast<std::size_t>(axis);
        const std::string name(to_string(axis));
        j["psnr"][name] = num(r.psnr[a]);
        j["ssim"][name] = r.ssim[a];
    }
    return j.dump(2);
}

double tv_z(const Volume3& x) {
    const Shape3 s = x.shape();
    double tv = 0.0;
    for (std::size_t z = 0; z + 1 < s.nz; ++z) {
        const auto a = x.slice(z);
        const auto b = x.slice(z + 1);
        for (std::size_t i = 0; i < a.size(); ++i) tv += std::fabs(b[i] - a[i]);
    }
    return tv;
}

} // namespace tomodiff
